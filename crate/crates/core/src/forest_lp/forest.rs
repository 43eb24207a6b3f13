//! Bagged regression forests with exact leaf-weight bookkeeping.
//!
//! Every target is rescaled to an integer at a common power of two and every
//! leaf mean is written over the forest-wide denominator `L`, the least
//! common multiple of all leaf sizes. A leaf then carries the integer factor
//! `a = L / size` and the integer `a * sum(multiplicity * y)`. Predictions
//! (tree means averaged over trees) and weights (multiplicity / size averaged
//! over trees) are both integer sums over the same denominator `B * L`, so
//! `<weights, y>` and the direct prediction are the same rational number and
//! round to the same float.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_sorted, Columns, Sorted, Tree, TreeParams};
use crate::dataset::HorizonDesign;
use crate::exact::{self, ExactWeights, ScaledVector};
use crate::{LpError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_node_size: usize,
    /// Share of the features drawn as split candidates (at least one).
    pub split_fraction: f64,
    /// Design columns that are candidates at every split. `None` means the
    /// shock and the target's own lags.
    pub always_split: Option<Vec<String>>,
    /// Design columns kept out of the forest's features.
    pub exclude: Vec<String>,
    pub seed: u64,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 1000,
            min_node_size: 5,
            split_fraction: 1.0 / 15.0,
            always_split: None,
            exclude: Vec::new(),
            seed: 0,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(LpError::InvalidArgument("forest needs at least one tree".into()));
        }
        if self.min_node_size == 0 {
            return Err(LpError::InvalidArgument("min_node_size must be >= 1".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction <= 1.0) {
            return Err(LpError::InvalidArgument(format!(
                "split fraction {} outside (0, 1]",
                self.split_fraction
            )));
        }
        Ok(())
    }

    pub fn mtry(&self, n_features: usize) -> usize {
        ((self.split_fraction * n_features as f64).floor() as usize).max(1)
    }
}

/// Deterministic per-tree seed from the forest seed, the horizon and the tree index.
pub fn tree_seed(seed: u64, horizon: usize, tree: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ horizon as u64) ^ tree as u64)
}

/// Signed visit counts per (tree, leaf), the common currency for
/// predictions, weights and IRFs over sets of query rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafTally {
    counts: Vec<Vec<i64>>,
}

#[derive(Debug, Clone)]
pub struct Forest {
    pub horizon: usize,
    pub trees: Vec<Tree>,
    /// Design columns used as features, in order.
    pub features: Vec<usize>,
    pub feature_names: Vec<String>,
    pub n_rows: usize,
    targets: ScaledVector,
    lcm: BigInt,
    leaf_factor: Vec<Vec<BigInt>>,
    leaf_value: Vec<Vec<BigInt>>,
}

/// Fits one forest to a horizon's design.
pub fn fit_forest(design: &HorizonDesign, params: &ForestParams) -> Result<Forest> {
    params.validate()?;
    let lookup = |name: &String| {
        design
            .column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| LpError::UnknownColumn(name.clone()))
    };
    let excluded: Vec<usize> = params.exclude.iter().map(lookup).collect::<Result<_>>()?;
    let features: Vec<usize> = (1..design.n_regressors()).filter(|j| !excluded.contains(j)).collect();
    if features.is_empty() {
        return Err(LpError::InvalidSpec("forest has no features".into()));
    }
    let always_cols: Vec<usize> = match &params.always_split {
        Some(names) => names.iter().map(lookup).collect::<Result<_>>()?,
        None => vec![design.shock_col],
    };
    let always: Vec<usize> = always_cols
        .iter()
        .filter_map(|c| features.iter().position(|f| f == c))
        .collect();
    let x = Columns {
        cols: features.iter().map(|&j| design.x.column(j).iter().copied().collect()).collect(),
    };
    let y = design.y_slice();
    let n = design.n_obs();
    let sorted = Sorted::new(&x);
    let tree_params = TreeParams { min_node_size: params.min_node_size, mtry: params.mtry(features.len()), always };
    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(params.seed, design.horizon, b));
            let sample: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_tree_sorted(&x, &sorted, y, &sample, &tree_params, &mut rng)
        })
        .collect();
    Ok(Forest::assemble(design, trees, features))
}

impl Forest {
    fn assemble(design: &HorizonDesign, trees: Vec<Tree>, features: Vec<usize>) -> Forest {
        let targets = ScaledVector::new(design.y_slice());
        let mut lcm = BigInt::one();
        let mut sizes: Vec<u32> = trees.iter().flat_map(|t| t.leaves.iter().map(|l| l.size)).collect();
        sizes.sort_unstable();
        sizes.dedup();
        for s in sizes {
            lcm = lcm.lcm(&BigInt::from(s));
        }
        let mut leaf_factor = Vec::with_capacity(trees.len());
        let mut leaf_value = Vec::with_capacity(trees.len());
        for t in &trees {
            let mut fac = Vec::with_capacity(t.n_leaves());
            let mut val = Vec::with_capacity(t.n_leaves());
            for leaf in &t.leaves {
                let a = &lcm / BigInt::from(leaf.size);
                let mut s = BigInt::zero();
                for &(r, m) in &leaf.members {
                    s += &targets.ints[r as usize] * BigInt::from(m);
                }
                val.push(&a * s);
                fac.push(a);
            }
            leaf_factor.push(fac);
            leaf_value.push(val);
        }
        Forest {
            horizon: design.horizon,
            trees,
            feature_names: features.iter().map(|&j| design.column_names[j].clone()).collect(),
            features,
            n_rows: design.n_obs(),
            targets,
            lcm,
            leaf_factor,
            leaf_value,
        }
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn targets(&self) -> &ScaledVector {
        &self.targets
    }

    /// `B * L`, the denominator of every single-query weight.
    pub fn denominator(&self) -> BigInt {
        &self.lcm * BigInt::from(self.trees.len())
    }

    /// The forest-wide leaf-size multiple `L`.
    pub fn leaf_lcm(&self) -> &BigInt {
        &self.lcm
    }

    fn feature_row(&self, design_row: &[f64]) -> Vec<f64> {
        self.features.iter().map(|&j| design_row[j]).collect()
    }

    /// Leaf reached in every tree by a full design row.
    pub fn route(&self, design_row: &[f64]) -> Vec<usize> {
        let f = self.feature_row(design_row);
        self.trees.iter().map(|t| t.leaf_of(&f)).collect()
    }

    /// Exact prediction: the mean over trees of each tree's leaf mean.
    pub fn predict_exact(&self, design_row: &[f64]) -> BigRational {
        let mut acc = BigInt::zero();
        for (b, leaf) in self.route(design_row).into_iter().enumerate() {
            acc += &self.leaf_value[b][leaf];
        }
        self.targets.ratio(acc, self.denominator())
    }

    pub fn predict(&self, design_row: &[f64]) -> f64 {
        exact::round(&self.predict_exact(design_row))
    }

    /// Convex weights over training rows: multiplicity / leaf size, averaged over trees.
    pub fn weights_exact(&self, design_row: &[f64]) -> ExactWeights {
        let mut t = self.empty_tally();
        self.tally_add(&mut t, design_row, 1);
        self.tally_weights(&t, BigInt::one())
    }

    pub fn empty_tally(&self) -> LeafTally {
        LeafTally { counts: self.trees.iter().map(|t| vec![0; t.n_leaves()]).collect() }
    }

    pub fn tally_add(&self, tally: &mut LeafTally, design_row: &[f64], sign: i64) {
        for (b, leaf) in self.route(design_row).into_iter().enumerate() {
            tally.counts[b][leaf] += sign;
        }
    }

    /// Integer numerator of the tallied prediction sum; the denominator is
    /// `B * L` (times however many queries the caller averages over).
    pub fn tally_numerator(&self, tally: &LeafTally) -> BigInt {
        self.tally_tree_numerators(tally).into_iter().sum()
    }

    /// Per-tree numerators over the denominator `L`.
    pub fn tally_tree_numerators(&self, tally: &LeafTally) -> Vec<BigInt> {
        tally
            .counts
            .iter()
            .zip(&self.leaf_value)
            .map(|(counts, values)| {
                let mut acc = BigInt::zero();
                for (c, v) in counts.iter().zip(values) {
                    if *c != 0 {
                        acc += v * BigInt::from(*c);
                    }
                }
                acc
            })
            .collect()
    }

    /// Weights implied by a tally, over `B * L * extra_denominator`.
    pub fn tally_weights(&self, tally: &LeafTally, extra_denominator: BigInt) -> ExactWeights {
        let mut numer = vec![BigInt::zero(); self.n_rows];
        for ((counts, factors), tree) in tally.counts.iter().zip(&self.leaf_factor).zip(&self.trees) {
            for ((c, a), leaf) in counts.iter().zip(factors).zip(&tree.leaves) {
                if *c == 0 {
                    continue;
                }
                let scaled = a * BigInt::from(*c);
                for &(r, m) in &leaf.members {
                    numer[r as usize] += &scaled * BigInt::from(m);
                }
            }
        }
        ExactWeights { numer, denom: self.denominator() * extra_denominator }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{SamplePolicy, Stamp};
    use nalgebra::{DMatrix, DVector};
    use rand_distr::StandardNormal;

    fn design(t: usize, seed: u64) -> HorizonDesign {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::<f64>::from_fn(t, 3, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
        let y: Vec<f64> = (0..t)
            .map(|i| x[(i, 1)] + 0.5 * x[(i, 2)].powi(2) + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        HorizonDesign {
            horizon: 0,
            y: DVector::from_vec(y),
            x,
            shock_col: 1,
            column_names: vec!["const".into(), "s".into(), "z".into()],
            dates: (0..t as i64).map(|i| Stamp::monthly(2000, 1).advance(i)).collect(),
            rows: (0..t).collect(),
            policy: SamplePolicy::Maximal,
        }
    }

    #[test]
    fn single_leaf_forest_predicts_mean_with_uniform_weights() {
        let d = design(30, 1);
        let params = ForestParams { n_trees: 1, bootstrap: false, min_node_size: 100, ..Default::default() };
        let f = fit_forest(&d, &params).unwrap();
        let mean = exact::round(&(d.y.iter().map(|v| exact::rational(*v)).sum::<BigRational>()
            / BigRational::from_integer(30.into())));
        assert_eq!(f.predict(&[1.0, 5.0, -5.0]), mean);
        let w = f.weights_exact(&[1.0, 0.0, 0.0]).to_f64();
        assert!(w.iter().all(|v| *v == 1.0 / 30.0));
    }

    #[test]
    fn duality_is_exact() {
        let d = design(80, 2);
        let params = ForestParams { n_trees: 40, seed: 9, ..Default::default() };
        let f = fit_forest(&d, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let q = [1.0, rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let w = f.weights_exact(&q);
            assert_eq!(w.dot(f.targets()), f.predict_exact(&q));
            assert_eq!(w.sum(), BigRational::one());
            let wf = w.to_f64();
            assert!(wf.iter().all(|v| *v >= 0.0));
            assert!((wf.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            // the rounded tree-average route agrees with the float mean of leaf means
            let direct: f64 = f.trees.iter().map(|t| t.predict(&[q[1], q[2]])).sum::<f64>() / 40.0;
            assert!((f.predict(&q) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let d = design(60, 4);
        let params = ForestParams { n_trees: 10, seed: 5, ..Default::default() };
        let a = fit_forest(&d, &params).unwrap();
        let b = fit_forest(&d, &params).unwrap();
        assert_eq!(a.trees, b.trees);
        let c = fit_forest(&d, &ForestParams { seed: 6, ..params }).unwrap();
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn params_are_validated() {
        assert!(ForestParams { n_trees: 0, ..Default::default() }.validate().is_err());
        assert!(ForestParams { split_fraction: 0.0, ..Default::default() }.validate().is_err());
        assert!(ForestParams { min_node_size: 0, ..Default::default() }.validate().is_err());
        assert_eq!(ForestParams::default().mtry(10), 1);
        assert_eq!(ForestParams::default().mtry(31), 2);
    }
}
