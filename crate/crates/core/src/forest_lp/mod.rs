//! Random-forest local projections.
//!
//! One forest per horizon predicts `y_{t+h}` from the design row. The impulse
//! response at a context row is the difference between two forest
//! predictions whose rows only differ in the shock entry (`delta` versus 0),
//! and because each prediction is a convex combination of training targets,
//! so is its weight vector: `w(delta) = w^delta - w^0`.
//!
//! Contexts are the design rows of the dates shared by every horizon, i.e.
//! the rows of the longest horizon. Averages over contexts, trees or clusters
//! are carried out on exact integer numerators (see [`forest`]) and rounded
//! once.

mod forest;
pub mod tree;

pub use forest::{fit_forest, tree_seed, Forest, ForestParams, LeafTally};

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{HorizonDesign, LpSpec, Stamp};
use crate::exact::{self, ExactWeights};
use crate::stats;
use crate::{LpError, Result};

/// Forests for horizons `0..=H` plus the shared context rows.
#[derive(Debug, Clone)]
pub struct ForestLp {
    pub forests: Vec<Forest>,
    /// Context rows (full design rows), one per shared date.
    pub contexts: DMatrix<f64>,
    pub context_dates: Vec<Stamp>,
    pub shock_col: usize,
    pub params: ForestParams,
}

impl ForestLp {
    pub fn horizons(&self) -> usize {
        self.forests.len()
    }

    pub fn n_contexts(&self) -> usize {
        self.contexts.nrows()
    }

    pub fn context(&self, tau: usize) -> Vec<f64> {
        self.contexts.row(tau).iter().copied().collect()
    }

    fn scenario(&self, context: &[f64], dose: f64) -> Vec<f64> {
        let mut row = context.to_vec();
        row[self.shock_col] = dose;
        row
    }
}

/// Resolves the default forced-split set (shock and target lags) and the
/// optional removal of contemporaneous controls.
pub fn resolve_params(spec: &LpSpec, params: &ForestParams, contemporaneous_in_forest: bool) -> ForestParams {
    let mut p = params.clone();
    let names = spec.column_names();
    if p.always_split.is_none() {
        let mut always = vec![spec.shock.clone()];
        always.extend(spec.target_lag_cols().into_iter().map(|j| names[j].clone()));
        p.always_split = Some(always);
    }
    if !contemporaneous_in_forest {
        for j in spec.contemporaneous_cols() {
            if !p.exclude.contains(&names[j]) {
                p.exclude.push(names[j].clone());
            }
        }
    }
    p
}

/// Fits one forest per horizon.
///
/// `params` is used as given; call [`resolve_params`] first to get the
/// defaults tied to a specification.
pub fn fit_forest_lp(designs: &[HorizonDesign], params: &ForestParams) -> Result<ForestLp> {
    let last = designs
        .last()
        .ok_or_else(|| LpError::InvalidArgument("no horizons to fit".into()))?;
    let n_ctx = last.n_obs();
    for d in designs {
        if d.dates[..n_ctx] != last.dates[..] || d.x.rows(0, n_ctx) != last.x {
            return Err(LpError::InvalidArgument(format!(
                "horizon {} does not share its leading rows with horizon {}",
                d.horizon, last.horizon
            )));
        }
    }
    // trees are fit in parallel inside each forest
    let forests = designs.iter().map(|d| fit_forest(d, params)).collect::<Result<Vec<_>>>()?;
    Ok(ForestLp {
        forests,
        contexts: last.x.clone(),
        context_dates: last.dates.clone(),
        shock_col: last.shock_col,
        params: params.clone(),
    })
}

/// Scenario and IRF weights of one context at one horizon.
#[derive(Debug, Clone)]
pub struct ScenarioWeights {
    pub w_delta: ExactWeights,
    pub w_zero: ExactWeights,
    pub w_irf: ExactWeights,
}

#[derive(Debug, Clone)]
pub struct ConditionalIrf {
    pub irf: Vec<f64>,
    pub exact: Vec<BigRational>,
    pub weights: Vec<ScenarioWeights>,
    pub delta: f64,
}

/// IRF path at one context row, with its scenario weights.
pub fn scenario_irf(fit: &ForestLp, context: &[f64], delta: f64) -> ConditionalIrf {
    let hi = fit.scenario(context, delta);
    let lo = fit.scenario(context, 0.0);
    let mut irf = Vec::new();
    let mut exact_v = Vec::new();
    let mut weights = Vec::new();
    for f in &fit.forests {
        let w_delta = f.weights_exact(&hi);
        let w_zero = f.weights_exact(&lo);
        let w_irf = ExactWeights {
            numer: w_delta.numer.iter().zip(&w_zero.numer).map(|(a, b)| a - b).collect(),
            denom: w_delta.denom.clone(),
        };
        let e = f.predict_exact(&hi) - f.predict_exact(&lo);
        irf.push(exact::round(&e));
        exact_v.push(e);
        weights.push(ScenarioWeights { w_delta, w_zero, w_irf });
    }
    ConditionalIrf { irf, exact: exact_v, weights, delta }
}

/// Conditional IRFs of every context: the data clustered downstream.
#[derive(Debug, Clone)]
pub struct IrfMatrix {
    /// `values[tau][h]`.
    pub values: Vec<Vec<f64>>,
    /// `numer[h][tau]` over `denom[h]`, in the horizon's target scale.
    pub numer: Vec<Vec<BigInt>>,
    pub denom: Vec<BigInt>,
    pub dates: Vec<Stamp>,
    pub delta: f64,
}

impl IrfMatrix {
    pub fn exact(&self, fit: &ForestLp, tau: usize, h: usize) -> BigRational {
        fit.forests[h].targets().ratio(self.numer[h][tau].clone(), self.denom[h].clone())
    }

    pub fn n_contexts(&self) -> usize {
        self.values.len()
    }
}

pub fn conditional_irf_matrix(fit: &ForestLp, delta: f64) -> IrfMatrix {
    let n = fit.n_contexts();
    let mut numer = Vec::with_capacity(fit.horizons());
    let mut denom = Vec::with_capacity(fit.horizons());
    let mut values = vec![Vec::with_capacity(fit.horizons()); n];
    for f in &fit.forests {
        let col: Vec<BigInt> = (0..n)
            .into_par_iter()
            .map(|tau| {
                let ctx = fit.context(tau);
                let mut t = f.empty_tally();
                f.tally_add(&mut t, &fit.scenario(&ctx, delta), 1);
                f.tally_add(&mut t, &fit.scenario(&ctx, 0.0), -1);
                f.tally_numerator(&t)
            })
            .collect();
        let d = f.denominator();
        for (tau, num) in col.iter().enumerate() {
            values[tau].push(exact::round(&f.targets().ratio(num.clone(), d.clone())));
        }
        numer.push(col);
        denom.push(d);
    }
    IrfMatrix { values, numer, denom, dates: fit.context_dates.clone(), delta }
}

/// IRF and weights averaged over a set of contexts.
#[derive(Debug, Clone)]
pub struct AveragedIrf {
    pub irf: Vec<f64>,
    pub exact: Vec<BigRational>,
    /// Per horizon, over that horizon's training rows.
    pub weights: Vec<ExactWeights>,
    pub members: usize,
    pub delta: f64,
}

impl AveragedIrf {
    pub fn weights_f64(&self, h: usize) -> Vec<f64> {
        self.weights[h].to_f64()
    }
}

fn tally_contexts(fit: &ForestLp, f: &Forest, members: &[usize], delta: f64) -> LeafTally {
    let mut t = f.empty_tally();
    for &tau in members {
        let ctx = fit.context(tau);
        f.tally_add(&mut t, &fit.scenario(&ctx, delta), 1);
        f.tally_add(&mut t, &fit.scenario(&ctx, 0.0), -1);
    }
    t
}

/// Mean IRF and mean IRF weights over the contexts in `members`.
pub fn subset_irf(fit: &ForestLp, delta: f64, members: &[usize]) -> Result<AveragedIrf> {
    if members.is_empty() {
        return Err(LpError::InvalidArgument("empty context set".into()));
    }
    if let Some(bad) = members.iter().find(|&&m| m >= fit.n_contexts()) {
        return Err(LpError::InvalidArgument(format!("context {bad} out of range")));
    }
    let m = BigInt::from(members.len());
    let per_h: Vec<(BigRational, ExactWeights)> = fit
        .forests
        .par_iter()
        .map(|f| {
            let t = tally_contexts(fit, f, members, delta);
            let e = f.targets().ratio(f.tally_numerator(&t), f.denominator() * &m);
            (e, f.tally_weights(&t, m.clone()))
        })
        .collect();
    let (exact_v, weights): (Vec<_>, Vec<_>) = per_h.into_iter().unzip();
    Ok(AveragedIrf {
        irf: exact_v.iter().map(exact::round).collect(),
        exact: exact_v,
        weights,
        members: members.len(),
        delta,
    })
}

/// IRF averaged over every context.
pub fn unconditional_irf(fit: &ForestLp, delta: f64) -> AveragedIrf {
    let all: Vec<usize> = (0..fit.n_contexts()).collect();
    subset_irf(fit, delta, &all).expect("at least one context")
}

/// Context-averaged IRF path without weights; cheaper when only the path is needed.
pub fn unconditional_path(fit: &ForestLp, delta: f64) -> Vec<f64> {
    let all: Vec<usize> = (0..fit.n_contexts()).collect();
    let m = BigInt::from(all.len());
    fit.forests
        .par_iter()
        .map(|f| {
            let t = tally_contexts(fit, f, &all, delta);
            exact::round(&f.targets().ratio(f.tally_numerator(&t), f.denominator() * &m))
        })
        .collect()
}

/// Percentile band of single-tree, context-averaged IRFs.
#[derive(Debug, Clone, Serialize)]
pub struct TreeBand {
    pub lower_pct: f64,
    pub upper_pct: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `per_tree[h][b]`.
    pub per_tree: Vec<Vec<f64>>,
    #[serde(skip)]
    pub per_tree_exact: Vec<Vec<BigRational>>,
}

pub fn tree_band(fit: &ForestLp, delta: f64, lower_pct: f64, upper_pct: f64) -> Result<TreeBand> {
    let b = fit.forests.first().map_or(0, Forest::n_trees);
    if b < 10 {
        return Err(LpError::InvalidArgument(format!("tree band needs at least 10 trees, have {b}")));
    }
    if !(0.0..=100.0).contains(&lower_pct) || !(0.0..=100.0).contains(&upper_pct) || lower_pct > upper_pct {
        return Err(LpError::InvalidArgument(format!("bad percentile pair ({lower_pct}, {upper_pct})")));
    }
    let all: Vec<usize> = (0..fit.n_contexts()).collect();
    let m = BigInt::from(all.len());
    let per_tree_exact: Vec<Vec<BigRational>> = fit
        .forests
        .par_iter()
        .map(|f| {
            let t = tally_contexts(fit, f, &all, delta);
            let d = f.leaf_lcm() * &m;
            f.tally_tree_numerators(&t)
                .into_iter()
                .map(|n| f.targets().ratio(n, d.clone()))
                .collect()
        })
        .collect();
    let per_tree: Vec<Vec<f64>> = per_tree_exact.iter().map(|v| v.iter().map(exact::round).collect()).collect();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for v in &per_tree {
        lower.push(stats::quantile(v, lower_pct / 100.0)?);
        upper.push(stats::quantile(v, upper_pct / 100.0)?);
    }
    Ok(TreeBand { lower_pct, upper_pct, lower, upper, per_tree, per_tree_exact })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::build_designs;
    use crate::synthetic;
    use num_traits::Zero;

    fn small_fit(n_trees: usize) -> ForestLp {
        let frame = synthetic::asymmetric(120, 0.3, 17);
        let mut spec = LpSpec::new("y", "s", 2);
        spec.lags = 1;
        let designs = build_designs(&frame, &spec).unwrap();
        let params = resolve_params(&spec, &ForestParams { n_trees, seed: 3, ..Default::default() }, true);
        fit_forest_lp(&designs, &params).unwrap()
    }

    #[test]
    fn zero_dose_gives_zero_irf() {
        let fit = small_fit(12);
        let c = scenario_irf(&fit, &fit.context(0), 0.0);
        assert!(c.irf.iter().all(|v| *v == 0.0));
        assert!(c.weights.iter().all(|w| w.w_irf.numer.iter().all(Zero::is_zero)));
    }

    #[test]
    fn unconditional_is_mean_of_conditional() {
        let fit = small_fit(12);
        let m = conditional_irf_matrix(&fit, 1.0);
        let u = unconditional_irf(&fit, 1.0);
        let n = BigRational::from_integer(m.n_contexts().into());
        for h in 0..fit.horizons() {
            let s: BigRational = (0..m.n_contexts()).map(|tau| m.exact(&fit, tau, h)).sum();
            assert_eq!(&s / &n, u.exact[h]);
            assert!(u.weights[h].sum().is_zero());
            assert_eq!(u.weights[h].dot(fit.forests[h].targets()), u.exact[h]);
        }
        assert_eq!(unconditional_path(&fit, 1.0), u.irf);
    }

    #[test]
    fn mean_tree_irf_is_forest_irf() {
        let fit = small_fit(12);
        let band = tree_band(&fit, 1.0, 16.0, 84.0).unwrap();
        let u = unconditional_irf(&fit, 1.0);
        for h in 0..fit.horizons() {
            let s: BigRational = band.per_tree_exact[h].iter().sum();
            assert_eq!(s / BigRational::from_integer(12.into()), u.exact[h]);
            assert!(band.lower[h] <= band.upper[h]);
        }
        assert!(tree_band(&small_fit(5), 1.0, 16.0, 84.0).is_err());
    }
}
