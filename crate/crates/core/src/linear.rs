//! OLS local projections and their exact weight decomposition.
//!
//! For a design `X = [1, s, Z]` the shock coefficient is linear in the
//! target, `beta_h = w' y_h`, where `w` is the shock row of `(X'X)^{-1} X'`.
//! Each observation contributes `c_t = w_t y_{t+h}` and the running sum of
//! contributions (the evidence curve) ends at `beta_h`.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{HorizonDesign, SamplePolicy, Stamp};
use crate::linalg::{self, QrSolver};
use crate::{LpError, Result};

/// One horizon of a linear LP.
#[derive(Debug, Clone, Serialize)]
pub struct LinearLpFit {
    pub horizon: usize,
    pub beta: f64,
    /// Coefficients on every column except the shock, in design order
    /// (the intercept first).
    pub gamma: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub weights: Vec<f64>,
    pub contributions: Vec<f64>,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub y: Vec<f64>,
    pub dates: Vec<Stamp>,
    pub policy: SamplePolicy,
}

#[derive(Debug, Clone, Serialize)]
pub struct PurifiedShock {
    /// Residual of the shock on all other regressors.
    pub s_tilde: Vec<f64>,
    /// `s_tilde / Var(s_tilde)` with the 1/T variance.
    pub s_star: Vec<f64>,
    pub variance: f64,
    pub dates: Vec<Stamp>,
}

impl PurifiedShock {
    /// `s_tilde / (s_tilde' s_tilde)`, the FWL form of the weights.
    pub fn weights(&self) -> Vec<f64> {
        let ss: f64 = self.s_tilde.iter().map(|v| v * v).sum();
        self.s_tilde.iter().map(|v| v / ss).collect()
    }
}

/// Running sum of contributions over the sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceCurve {
    pub cumulative: Vec<f64>,
    pub dates: Vec<Stamp>,
}

impl EvidenceCurve {
    pub fn terminal(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn from_contributions(contributions: &[f64], dates: &[Stamp]) -> Self {
        let cumulative = contributions
            .iter()
            .scan(0.0, |acc, c| {
                *acc += c;
                Some(*acc)
            })
            .collect();
        EvidenceCurve { cumulative, dates: dates.to_vec() }
    }
}

pub fn fit_linear_lp(design: &HorizonDesign) -> Result<LinearLpFit> {
    linalg::ensure_full_rank(&design.x, &design.column_names, design.horizon)?;
    let qr = QrSolver::new(&design.x);
    let b = qr.solve(&design.y);
    let w = qr.projection_row(design.shock_col);
    let fitted = &design.x * &b;
    let residuals = &design.y - &fitted;
    let contributions = w.component_mul(&design.y);
    let gamma = b
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != design.shock_col)
        .map(|(_, v)| *v)
        .collect();
    Ok(LinearLpFit {
        horizon: design.horizon,
        beta: b[design.shock_col],
        gamma,
        coefficients: b.iter().copied().collect(),
        weights: w.iter().copied().collect(),
        contributions: contributions.iter().copied().collect(),
        residuals: residuals.iter().copied().collect(),
        fitted: fitted.iter().copied().collect(),
        y: design.y.iter().copied().collect(),
        dates: design.dates.clone(),
        policy: design.policy,
    })
}

/// Fits every horizon; horizons run in parallel, output order is by horizon.
pub fn fit_linear_path(designs: &[HorizonDesign]) -> Result<Vec<LinearLpFit>> {
    designs.par_iter().map(fit_linear_lp).collect()
}

/// Residualizes the shock on all other columns (intercept, trends, controls).
pub fn purify_shock(design: &HorizonDesign) -> Result<PurifiedShock> {
    linalg::ensure_full_rank(&design.x, &design.column_names, design.horizon)?;
    let others: Vec<usize> = (0..design.n_regressors())
        .filter(|&j| j != design.shock_col)
        .collect();
    let s = DVector::from_vec(design.shock());
    let s_tilde = if others.is_empty() {
        s.clone()
    } else {
        let z = design.x.select_columns(&others);
        QrSolver::new(&z).residual(&s)
    };
    let t = design.n_obs() as f64;
    let tol = linalg::rank_tolerance(design.n_obs(), design.n_regressors(), s.norm());
    if s_tilde.norm() <= tol {
        return Err(LpError::NoExogenousVariation);
    }
    let variance = s_tilde.norm_squared() / t;
    Ok(PurifiedShock {
        s_star: s_tilde.iter().map(|v| v / variance).collect(),
        s_tilde: s_tilde.iter().copied().collect(),
        variance,
        dates: design.dates.clone(),
    })
}

/// Contributions `w_t y_{t+h}` and their evidence curve.
pub fn contributions(fit: &LinearLpFit) -> (Vec<f64>, EvidenceCurve) {
    let c: Vec<f64> = fit.weights.iter().zip(&fit.y).map(|(w, y)| w * y).collect();
    let curve = EvidenceCurve::from_contributions(&c, &fit.dates);
    (c, curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SamplePolicy;
    use nalgebra::DMatrix;

    fn design(x: DMatrix<f64>, y: Vec<f64>) -> HorizonDesign {
        let n = x.nrows();
        let k = x.ncols();
        HorizonDesign {
            horizon: 0,
            y: DVector::from_vec(y),
            x,
            shock_col: 1,
            column_names: (0..k).map(|j| format!("c{j}")).collect(),
            dates: (0..n as i64).map(|i| Stamp::monthly(2000, 1).advance(i)).collect(),
            rows: (0..n).collect(),
            policy: SamplePolicy::Maximal,
        }
    }

    #[test]
    fn perfectly_linear_data() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 1.0, 0.0, 1.0, 1.0]);
        let d = design(x, vec![1.0, 2.0, 3.0]);
        let fit = fit_linear_lp(&d).unwrap();
        assert!((fit.beta - 1.0).abs() < 1e-14);
        let expect = [-0.5, 0.0, 0.5];
        for (w, e) in fit.weights.iter().zip(expect) {
            assert!((w - e).abs() < 1e-14);
        }
        let (c, curve) = contributions(&fit);
        for (a, e) in c.iter().zip([-0.5, 0.0, 1.5]) {
            assert!((a - e).abs() < 1e-14);
        }
        for (a, e) in curve.cumulative.iter().zip([-0.5, -0.5, 1.0]) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn intercept_only_controls_demean_the_shock() {
        let s = [0.3, -1.2, 2.5, 0.7, -0.1];
        let mut x = DMatrix::from_element(5, 2, 1.0);
        for (i, v) in s.iter().enumerate() {
            x[(i, 1)] = *v;
        }
        let d = design(x, vec![1.0, 0.0, 2.0, 1.0, 3.0]);
        let p = purify_shock(&d).unwrap();
        let mean = s.iter().sum::<f64>() / 5.0;
        for (a, v) in p.s_tilde.iter().zip(s) {
            assert!((a - (v - mean)).abs() < 1e-14);
        }
    }

    #[test]
    fn orthogonal_mean_zero_shock_is_untouched() {
        // s sums to zero and is orthogonal to z
        let rows = [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, 1.0],
            [1.0, 1.0, -1.0],
            [1.0, -1.0, -1.0],
        ];
        let x = DMatrix::from_fn(4, 3, |i, j| rows[i][j]);
        let d = design(x, vec![0.5, 1.0, -2.0, 0.25]);
        let p = purify_shock(&d).unwrap();
        assert_eq!(p.s_tilde, vec![1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn explained_shock_fails() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 1.0, 1.0, 4.0, 2.0, 1.0, 6.0, 3.0, 1.0, 8.0, 4.0]);
        let d = design(x, vec![1.0, 2.0, 3.0, 5.0]);
        assert!(matches!(purify_shock(&d), Err(LpError::RankDeficient { .. })));
        assert!(matches!(fit_linear_lp(&d), Err(LpError::RankDeficient { .. })));
    }

    #[test]
    fn zero_weights_give_zero_curve() {
        let curve = EvidenceCurve::from_contributions(&[0.0; 4], &[Stamp::annual(2000); 4]);
        assert!(curve.cumulative.iter().all(|v| *v == 0.0));
        assert_eq!(curve.terminal(), 0.0);
    }
}
