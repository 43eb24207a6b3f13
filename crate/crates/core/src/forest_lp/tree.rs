//! Regression trees grown by greedy variance reduction.

use rand::seq::index;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub min_node_size: usize,
    /// Number of features drawn at random for every split.
    pub mtry: usize,
    /// Features that are candidates at every split, in addition to the draw.
    pub always: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(usize),
}

/// In-bag rows of one leaf with their bootstrap multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub members: Vec<(u32, u32)>,
    pub size: u32,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub leaves: Vec<Leaf>,
}

impl Tree {
    /// Index of the leaf a feature row falls into; `x <= threshold` goes left.
    pub fn leaf_of(&self, row: &[f64]) -> usize {
        let mut n = 0;
        loop {
            match self.nodes[n] {
                Node::Leaf(l) => return l,
                Node::Split { feature, threshold, left, right } => {
                    n = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.leaves[self.leaf_of(row)].mean
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }
}

/// Feature matrix stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Columns {
    pub cols: Vec<Vec<f64>>,
}

impl Columns {
    pub fn n_features(&self) -> usize {
        self.cols.len()
    }

    pub fn n_rows(&self) -> usize {
        self.cols.first().map_or(0, Vec::len)
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.cols.iter().map(|c| c[t]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// Scans presorted candidate orders for the best variance-reducing split.
///
/// `orders[f]` lists the node's positions sorted by feature `f`. Ties in
/// gain keep the lowest feature and then the lowest threshold.
fn best_presorted(
    vals: &[Vec<f64>],
    ys: &[f64],
    orders: &[Vec<u32>],
    candidates: &[usize],
    min_node_size: usize,
) -> Option<SplitChoice> {
    let node = &orders[0];
    let n = node.len();
    let mean = node.iter().map(|&p| ys[p as usize]).sum::<f64>() / n as f64;
    let parent_sse: f64 = node.iter().map(|&p| (ys[p as usize] - mean).powi(2)).sum();
    if parent_sse <= 0.0 {
        return None;
    }
    let total: f64 = node.iter().map(|&p| ys[p as usize] - mean).sum();
    let base = total * total / n as f64;
    let mut best: Option<SplitChoice> = None;
    for &f in candidates {
        let col = &vals[f];
        let order = &orders[f];
        let mut left = 0.0;
        let lo = min_node_size.max(1);
        for i in 0..n - 1 {
            left += ys[order[i] as usize] - mean;
            let nl = i + 1;
            if nl < lo {
                continue;
            }
            let nr = n - nl;
            if nr < lo {
                break;
            }
            let (a, b) = (col[order[i] as usize], col[order[i + 1] as usize]);
            if a == b {
                continue;
            }
            let right = total - left;
            let gain = left * left / nl as f64 + right * right / nr as f64 - base;
            if best.is_none_or(|s| gain > s.gain) {
                best = Some(SplitChoice { feature: f, threshold: midpoint(a, b), gain });
            }
        }
    }
    best.filter(|s| s.gain > 1e-12 * parent_sse)
}

fn make_leaf(y: &[f64], idx: &[usize]) -> Leaf {
    let mut rows = idx.to_vec();
    rows.sort_unstable();
    let mut members: Vec<(u32, u32)> = Vec::new();
    for r in rows {
        match members.last_mut() {
            Some((last, m)) if *last == r as u32 => *m += 1,
            _ => members.push((r as u32, 1)),
        }
    }
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
    Leaf { members, size: idx.len() as u32, mean }
}

fn draw_candidates<R: Rng>(n_features: usize, params: &TreeParams, rng: &mut R) -> Vec<usize> {
    let pool: Vec<usize> = (0..n_features).filter(|f| !params.always.contains(f)).collect();
    let mut out = params.always.clone();
    if params.mtry >= pool.len() {
        out.extend(&pool);
    } else {
        out.extend(index::sample(rng, pool.len(), params.mtry).iter().map(|i| pool[i]));
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Grows a tree on the in-bag rows `sample` (repeats allowed).
///
/// A node becomes a leaf when it has fewer than `2 * min_node_size` rows or
/// when no split lowers the within-node sum of squared errors; both children
/// of a split keep at least `min_node_size` rows.
pub fn fit_tree<R: Rng>(x: &Columns, y: &[f64], sample: &[usize], params: &TreeParams, rng: &mut R) -> Tree {
    fit_tree_sorted(x, &Sorted::new(x), y, sample, params, rng)
}

/// Row indices of every feature column in ascending value order, computed
/// once and shared by all trees of a forest.
#[derive(Debug, Clone)]
pub struct Sorted {
    rows: Vec<Vec<u32>>,
}

impl Sorted {
    pub fn new(x: &Columns) -> Sorted {
        let rows = x
            .cols
            .iter()
            .map(|c| {
                let mut o: Vec<u32> = (0..c.len() as u32).collect();
                o.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]));
                o
            })
            .collect();
        Sorted { rows }
    }
}

/// [`fit_tree`] with the column orders supplied by the caller.
pub fn fit_tree_sorted<R: Rng>(
    x: &Columns,
    sorted: &Sorted,
    y: &[f64],
    sample: &[usize],
    params: &TreeParams,
    rng: &mut R,
) -> Tree {
    assert!(!sample.is_empty(), "tree needs a nonempty sample");
    let min = params.min_node_size.max(1);
    let ys: Vec<f64> = sample.iter().map(|&i| y[i]).collect();
    let vals: Vec<Vec<f64>> = x.cols.iter().map(|c| sample.iter().map(|&i| c[i]).collect()).collect();
    // positions of each row within the sample, grouped by row
    let n_rows = x.n_rows();
    let mut start = vec![0usize; n_rows + 1];
    for &i in sample {
        start[i + 1] += 1;
    }
    for r in 0..n_rows {
        start[r + 1] += start[r];
    }
    let mut fill = start.clone();
    let mut by_row = vec![0u32; sample.len()];
    for (p, &i) in sample.iter().enumerate() {
        by_row[fill[i]] = p as u32;
        fill[i] += 1;
    }
    let orders: Vec<Vec<u32>> = sorted
        .rows
        .iter()
        .map(|rows| rows.iter().flat_map(|&r| by_row[start[r as usize]..start[r as usize + 1]].iter().copied()).collect())
        .collect();
    let mut tree = Tree { nodes: vec![Node::Leaf(0)], leaves: Vec::new() };
    let mut goes_left = vec![false; sample.len()];
    let mut stack: Vec<(usize, Vec<Vec<u32>>)> = vec![(0, orders)];
    while let Some((node, orders)) = stack.pop() {
        let n = orders[0].len();
        let split = if n < 2 * min {
            None
        } else {
            let cand = draw_candidates(x.n_features(), params, rng);
            best_presorted(&vals, &ys, &orders, &cand, min)
        };
        match split {
            None => {
                let idx: Vec<usize> = orders[0].iter().map(|&p| sample[p as usize]).collect();
                tree.nodes[node] = Node::Leaf(tree.leaves.len());
                tree.leaves.push(make_leaf(y, &idx));
            }
            Some(s) => {
                let col = &vals[s.feature];
                for &p in &orders[0] {
                    goes_left[p as usize] = col[p as usize] <= s.threshold;
                }
                let n_left = orders[0].iter().filter(|&&p| goes_left[p as usize]).count();
                let mut l = Vec::with_capacity(orders.len());
                let mut r = Vec::with_capacity(orders.len());
                for o in orders {
                    let mut lo = Vec::with_capacity(n_left);
                    let mut hi = Vec::with_capacity(n - n_left);
                    for p in o {
                        if goes_left[p as usize] {
                            lo.push(p);
                        } else {
                            hi.push(p);
                        }
                    }
                    l.push(lo);
                    r.push(hi);
                }
                let left = tree.nodes.len();
                tree.nodes.push(Node::Leaf(0));
                tree.nodes.push(Node::Leaf(0));
                tree.nodes[node] = Node::Split { feature: s.feature, threshold: s.threshold, left, right: left + 1 };
                // right pushed first so the left subtree is expanded first
                stack.push((left + 1, r));
                stack.push((left, l));
            }
        }
    }
    tree
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Reference split search that sorts every candidate column afresh.
    ///
    /// Ties in gain keep the first candidate found, i.e. the lowest feature and
    /// then the lowest threshold.
    fn best_split(
        x: &Columns,
        y: &[f64],
        idx: &[usize],
        candidates: &[usize],
        min_node_size: usize,
    ) -> Option<SplitChoice> {
        let n = idx.len();
        let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
        let parent_sse: f64 = idx.iter().map(|&i| (y[i] - mean).powi(2)).sum();
        if parent_sse <= 0.0 {
            return None;
        }
        let total: f64 = idx.iter().map(|&i| y[i] - mean).sum();
        let base = total * total / n as f64;
        let mut best: Option<SplitChoice> = None;
        // (feature value, centered target) pairs sorted by value
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for &f in candidates {
            let col = &x.cols[f];
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (col[i], y[i] - mean)));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = 0.0;
            for i in 0..n - 1 {
                left += pairs[i].1;
                let nl = i + 1;
                let nr = n - nl;
                let (a, b) = (pairs[i].0, pairs[i + 1].0);
                if a == b || nl < min_node_size || nr < min_node_size {
                    continue;
                }
                let right = total - left;
                let gain = left * left / nl as f64 + right * right / nr as f64 - base;
                if best.is_none_or(|s| gain > s.gain) {
                    best = Some(SplitChoice { feature: f, threshold: midpoint(a, b), gain });
                }
            }
        }
        best.filter(|s| s.gain > 1e-12 * parent_sse)
    }

    fn params(min: usize, k: usize) -> TreeParams {
        TreeParams { min_node_size: min, mtry: k, always: Vec::new() }
    }

    #[test]
    fn constant_target_is_one_leaf() {
        let x = Columns { cols: vec![(0..20).map(f64::from).collect()] };
        let y = vec![2.5; 20];
        let idx: Vec<usize> = (0..20).collect();
        let t = fit_tree(&x, &y, &idx, &params(1, 1), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.predict(&[100.0]), 2.5);
    }

    #[test]
    fn step_is_split_at_the_step() {
        let x = Columns { cols: vec![(0..10).map(f64::from).collect()] };
        let y: Vec<f64> = (0..10).map(|i| if i < 4 { -1.0 } else { 3.0 }).collect();
        let idx: Vec<usize> = (0..10).collect();
        let t = fit_tree(&x, &y, &idx, &params(1, 1), &mut ChaCha8Rng::seed_from_u64(0));
        match t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 3.5);
            }
            _ => panic!("root should split"),
        }
        for i in 0..10 {
            assert_eq!(t.predict(&[i as f64]), y[i]);
        }
    }

    #[test]
    fn split_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..25 {
            let n = 20;
            let x = Columns { cols: (0..3).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect() };
            let y: Vec<f64> = (0..n).map(|i| x.cols[case % 3][i] * 2.0 + rng.random::<f64>()).collect();
            let idx: Vec<usize> = (0..n).collect();
            let got = best_split(&x, &y, &idx, &[0, 1, 2], 3).unwrap();
            // brute force: every (column, midpoint) pair, SSE recomputed from scratch
            let sse = |rows: &[usize]| {
                let m = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
                rows.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
            };
            let mut best = (f64::INFINITY, 0, 0.0);
            for f in 0..3 {
                let mut vals = x.cols[f].clone();
                vals.sort_by(f64::total_cmp);
                for w in vals.windows(2) {
                    let thr = (w[0] + w[1]) / 2.0;
                    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x.cols[f][i] <= thr);
                    if l.len() < 3 || r.len() < 3 {
                        continue;
                    }
                    let s = sse(&l) + sse(&r);
                    if s < best.0 {
                        best = (s, f, thr);
                    }
                }
            }
            assert_eq!(got.feature, best.1, "case {case}");
            assert!((got.threshold - best.2).abs() < 1e-15, "case {case}");
        }
    }

    #[test]
    fn presorted_root_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = 60;
            let x = Columns { cols: (0..4).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect() };
            let y: Vec<f64> = (0..n).map(|i| x.cols[1][i] - x.cols[2][i] + rng.random::<f64>()).collect();
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let p = TreeParams { min_node_size: 4, mtry: 4, always: Vec::new() };
            let t = fit_tree(&x, &y, &sample, &p, &mut rng);
            let want = best_split(&x, &y, &sample, &[0, 1, 2, 3], 4).unwrap();
            match t.nodes[0] {
                Node::Split { feature, threshold, .. } => {
                    assert_eq!(feature, want.feature);
                    assert_eq!(threshold, want.threshold);
                }
                _ => panic!("root should split"),
            }
        }
    }

    #[test]
    fn leaves_hold_every_draw_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let x = Columns { cols: (0..2).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect() };
        let y: Vec<f64> = (0..n).map(|i| x.cols[0][i] - x.cols[1][i]).collect();
        let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let t = fit_tree(&x, &y, &sample, &params(5, 1), &mut rng);
        let total: u32 = t.leaves.iter().map(|l| l.size).sum();
        assert_eq!(total as usize, n);
        for leaf in &t.leaves {
            let m: u32 = leaf.members.iter().map(|(_, m)| m).sum();
            assert_eq!(m, leaf.size);
            assert!(leaf.size >= 5);
            for (r, _) in &leaf.members {
                assert_eq!(&t.leaves[t.leaf_of(&x.row(*r as usize))], leaf);
            }
        }
    }

    #[test]
    fn forced_features_are_always_candidates() {
        let p = TreeParams { min_node_size: 1, mtry: 1, always: vec![3] };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let c = draw_candidates(6, &p, &mut rng);
            assert!(c.contains(&3));
            assert_eq!(c.len(), 2);
        }
    }
}
