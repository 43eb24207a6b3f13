//! k-means over the conditional-IRF dataset and cluster-level IRFs.
//!
//! Rows of the dataset are contexts, columns are horizons. Cluster IRFs and
//! weights are plain averages over member contexts, so the share-weighted
//! sum of cluster IRFs is the unconditional IRF; the forest path computes it
//! on exact numerators.

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Stamp;
use crate::exact;
use crate::forest_lp::{self, AveragedIrf, ForestLp, IrfMatrix};
use crate::{LpError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IrfDataset {
    /// `values[tau][h]`.
    pub values: Vec<Vec<f64>>,
    pub dates: Vec<Stamp>,
}

impl IrfDataset {
    pub fn new(values: Vec<Vec<f64>>, dates: Vec<Stamp>) -> Result<Self> {
        if values.len() != dates.len() {
            return Err(LpError::InvalidArgument(format!("{} rows for {} dates", values.len(), dates.len())));
        }
        let width = values.first().map_or(0, Vec::len);
        if values.iter().any(|r| r.len() != width) {
            return Err(LpError::InvalidArgument("ragged IRF dataset".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(LpError::InvalidArgument("non-finite entry in IRF dataset".into()));
        }
        Ok(IrfDataset { values, dates })
    }

    pub fn from_matrix(m: &IrfMatrix) -> Self {
        IrfDataset { values: m.values.clone(), dates: m.dates.clone() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Column-wise z-scores; constant columns are only centered.
    pub fn standardized(&self) -> IrfDataset {
        let n = self.len() as f64;
        let width = self.values.first().map_or(0, Vec::len);
        let mut out = self.values.clone();
        for h in 0..width {
            let mean = self.values.iter().map(|r| r[h]).sum::<f64>() / n;
            let sd = (self.values.iter().map(|r| (r[h] - mean).powi(2)).sum::<f64>() / n).sqrt();
            for r in out.iter_mut() {
                r[h] = if sd > 0.0 { (r[h] - mean) / sd } else { r[h] - mean };
            }
        }
        IrfDataset { values: out, dates: self.dates.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansOptions {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    pub standardize: bool,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions { k: 2, seed: 0, restarts: 25, max_iter: 300, standardize: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterResult {
    pub k: usize,
    /// Cluster of each context, labelled in order of first appearance.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    pub shares: Vec<f64>,
    pub sse: f64,
    pub iterations: usize,
    /// Within-cluster SSE after every Lloyd step of the selected restart.
    pub sse_history: Vec<f64>,
    pub restart: usize,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 && r < *d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // every remaining point coincides with a center
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

struct Run {
    assignments: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    sse: f64,
    iterations: usize,
    history: Vec<f64>,
}

fn lloyd(points: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut ChaCha8Rng) -> Run {
    let n = points.len();
    let width = points[0].len();
    let mut centroids = seed_plus_plus(points, k, rng);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        // update step, reseeding empty clusters from the farthest point
        let mut sums = vec![vec![0.0; width]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[assignments[i]] > 1)
                    .max_by(|&a, &b| {
                        dist2(&points[a], &centroids[assignments[a]])
                            .total_cmp(&dist2(&points[b], &centroids[assignments[b]]))
                            .then(b.cmp(&a))
                    })
                    .expect("k <= n leaves a cluster with two members");
                let old = assignments[far];
                counts[old] -= 1;
                sums[old].iter_mut().zip(&points[far]).for_each(|(s, v)| *s -= v);
                assignments[far] = j;
                counts[j] = 1;
                sums[j] = points[far].clone();
            }
        }
        for j in 0..k {
            centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
        }
        let sse: f64 = points.iter().zip(&assignments).map(|(p, &a)| dist2(p, &centroids[a])).sum();
        history.push(sse);
        iterations += 1;
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == assignments || iterations >= max_iter {
            break;
        }
        assignments = next;
    }
    let sse = *history.last().unwrap();
    Run { assignments, centroids, sse, iterations, history }
}

/// Best of `restarts` k-means++ / Lloyd runs by within-cluster SSE.
///
/// Restart `r` draws from its own stream, so results do not depend on how
/// restarts are scheduled; ties go to the lowest restart index.
pub fn kmeans(data: &IrfDataset, opts: &KMeansOptions) -> Result<ClusterResult> {
    let n = data.len();
    if opts.k == 0 || opts.k > n {
        return Err(LpError::InvalidArgument(format!("k = {} with {n} contexts", opts.k)));
    }
    if opts.restarts == 0 || opts.max_iter == 0 {
        return Err(LpError::InvalidArgument("restarts and max_iter must be >= 1".into()));
    }
    let work = if opts.standardize { data.standardized() } else { data.clone() };
    let points = &work.values;
    let runs: Vec<Run> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(forest_lp::tree_seed(opts.seed, r, usize::MAX));
            lloyd(points, opts.k, opts.max_iter, &mut rng)
        })
        .collect();
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.sse < runs[best].sse {
            best = r;
        }
    }
    let run = &runs[best];
    // canonical labels: order of first appearance
    let mut relabel = vec![usize::MAX; opts.k];
    let mut next = 0;
    for &a in &run.assignments {
        if relabel[a] == usize::MAX {
            relabel[a] = next;
            next += 1;
        }
    }
    let assignments: Vec<usize> = run.assignments.iter().map(|&a| relabel[a]).collect();
    let mut centroids = vec![Vec::new(); opts.k];
    for (old, c) in run.centroids.iter().enumerate() {
        centroids[relabel[old]] = c.clone();
    }
    let mut sizes = vec![0; opts.k];
    for &a in &assignments {
        sizes[a] += 1;
    }
    Ok(ClusterResult {
        k: opts.k,
        shares: sizes.iter().map(|&s| s as f64 / n as f64).collect(),
        sizes,
        assignments,
        centroids,
        sse: run.sse,
        iterations: run.iterations,
        sse_history: run.history.clone(),
        restart: best,
    })
}

/// Mean silhouette width of a partition (0 for singleton members).
pub fn silhouette(data: &IrfDataset, assignments: &[usize], k: usize) -> f64 {
    let n = data.len();
    let pts = &data.values;
    let mut total = 0.0;
    for i in 0..n {
        let mut sum = vec![0.0; k];
        let mut cnt = vec![0usize; k];
        for j in 0..n {
            if i != j {
                sum[assignments[j]] += dist2(&pts[i], &pts[j]).sqrt();
                cnt[assignments[j]] += 1;
            }
        }
        let own = assignments[i];
        if cnt[own] == 0 {
            continue;
        }
        let a = sum[own] / cnt[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && cnt[c] > 0)
            .map(|c| sum[c] / cnt[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            let m = a.max(b);
            if m > 0.0 {
                total += (b - a) / m;
            }
        }
    }
    total / n as f64
}

/// Silhouette score for each `k` in `ks` (skipping `k > n`).
pub fn silhouette_scores(data: &IrfDataset, opts: &KMeansOptions, ks: std::ops::RangeInclusive<usize>) -> Result<Vec<(usize, f64)>> {
    let work = if opts.standardize { data.standardized() } else { data.clone() };
    ks.filter(|&k| k <= data.len())
        .map(|k| {
            let r = kmeans(data, &KMeansOptions { k, ..*opts })?;
            Ok((k, silhouette(&work, &r.assignments, k)))
        })
        .collect()
}

fn members(assignments: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    let mut m = vec![Vec::new(); k];
    for (tau, &a) in assignments.iter().enumerate() {
        if a >= k {
            return Err(LpError::InvalidArgument(format!("cluster id {a} with k = {k}")));
        }
        m[a].push(tau);
    }
    if let Some(j) = m.iter().position(Vec::is_empty) {
        return Err(LpError::EmptyCluster(j));
    }
    Ok(m)
}

/// Cluster IRFs and weights from a forest fit: means over member contexts.
pub fn cluster_irf(fit: &ForestLp, delta: f64, assignments: &[usize], k: usize) -> Result<Vec<AveragedIrf>> {
    if assignments.len() != fit.n_contexts() {
        return Err(LpError::InvalidArgument(format!(
            "{} assignments for {} contexts",
            assignments.len(),
            fit.n_contexts()
        )));
    }
    members(assignments, k)?
        .iter()
        .map(|m| forest_lp::subset_irf(fit, delta, m))
        .collect()
}

/// `sum_j share_j IRF_j(h)` in exact arithmetic.
pub fn share_weighted_irf(clusters: &[AveragedIrf]) -> Vec<BigRational> {
    let total: usize = clusters.iter().map(|c| c.members).sum();
    let horizons = clusters.first().map_or(0, |c| c.exact.len());
    (0..horizons)
        .map(|h| {
            clusters
                .iter()
                .map(|c| BigRational::new(BigInt::from(c.members), BigInt::from(total)) * &c.exact[h])
                .sum()
        })
        .collect()
}

/// Exact column means of the rows of each cluster, `[cluster][h]`.
pub fn cluster_means_exact(data: &IrfDataset, assignments: &[usize], k: usize) -> Result<Vec<Vec<BigRational>>> {
    if assignments.len() != data.len() {
        return Err(LpError::InvalidArgument("assignments do not cover the dataset".into()));
    }
    let width = data.values.first().map_or(0, Vec::len);
    Ok(members(assignments, k)?
        .iter()
        .map(|m| {
            let size = BigRational::from_integer(BigInt::from(m.len()));
            (0..width)
                .map(|h| m.iter().map(|&tau| exact::rational(data.values[tau][h])).sum::<BigRational>() / &size)
                .collect()
        })
        .collect())
}
