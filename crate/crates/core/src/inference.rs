//! Newey-West standard errors and normal confidence bands for the shock
//! coefficient of a linear local projection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::HorizonDesign;
use crate::linalg::QrSolver;
use crate::linear::LinearLpFit;
use crate::{LpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HacOptions {
    /// Bartlett bandwidth; `None` uses `h + 1`.
    pub bandwidth: Option<usize>,
    /// Multiply the variance by `T / (T - K)`.
    pub dof_correction: bool,
}

impl Default for HacOptions {
    fn default() -> Self {
        HacOptions { bandwidth: None, dof_correction: true }
    }
}

impl HacOptions {
    pub fn bandwidth_for(&self, horizon: usize) -> usize {
        self.bandwidth.unwrap_or(horizon + 1)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HacBand {
    pub horizon: usize,
    pub beta: f64,
    pub se: f64,
    pub bandwidth: usize,
    pub dof_correction: bool,
    /// Full sandwich covariance of all coefficients, row-major K x K.
    #[serde(skip)]
    pub covariance: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Bartlett kernel weights `1 - l/(L+1)` for `l = 1..=L`.
pub fn bartlett_weights(bandwidth: usize) -> Vec<f64> {
    (1..=bandwidth).map(|l| 1.0 - l as f64 / (bandwidth as f64 + 1.0)).collect()
}

/// Long-run variance of the score series `g_t = X_t v_t` (rows of `scores`),
/// normalized by `1/T`.
pub fn long_run_variance(scores: &DMatrix<f64>, bandwidth: usize) -> DMatrix<f64> {
    let t = scores.nrows();
    let k = scores.ncols();
    let gamma = |l: usize| -> DMatrix<f64> {
        let mut g = DMatrix::zeros(k, k);
        for s in l..t {
            let a = scores.row(s);
            let b = scores.row(s - l);
            g += a.transpose() * b;
        }
        g / t as f64
    };
    let mut s = gamma(0);
    for (l, kl) in (1..=bandwidth).zip(bartlett_weights(bandwidth)) {
        let g = gamma(l);
        s += (&g + g.transpose()) * kl;
    }
    s
}

pub fn newey_west_se(design: &HorizonDesign, fit: &LinearLpFit, opts: &HacOptions) -> Result<HacBand> {
    let t = design.n_obs();
    let k = design.n_regressors();
    let bw = opts.bandwidth_for(design.horizon);
    if bw >= t {
        return Err(LpError::InvalidArgument(format!(
            "bandwidth {bw} must be below the {t} observations of horizon {}",
            design.horizon
        )));
    }
    let v = DVector::from_column_slice(&fit.residuals);
    let mut scores = design.x.clone();
    for (mut row, vt) in scores.row_iter_mut().zip(v.iter()) {
        row *= *vt;
    }
    let s = long_run_variance(&scores, bw);
    let p = QrSolver::new(&design.x).precision();
    let mut cov = &p * s * &p * t as f64;
    if opts.dof_correction {
        cov *= t as f64 / (t - k) as f64;
    }
    // symmetrize away rounding asymmetry
    let cov = (&cov + cov.transpose()) * 0.5;
    let j = design.shock_col;
    Ok(HacBand {
        horizon: design.horizon,
        beta: fit.beta,
        se: cov[(j, j)].max(0.0).sqrt(),
        bandwidth: bw,
        dof_correction: opts.dof_correction,
        covariance: cov,
    })
}

/// Two-sided normal quantile for a central coverage `level`.
pub fn z_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(LpError::InvalidArgument(format!("band level {level} outside (0, 1)")));
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf((1.0 + level) / 2.0))
}

pub fn confidence_band(beta: f64, se: f64, level: f64) -> Result<Band> {
    let z = z_value(level)?;
    Ok(Band { level, lower: beta - z * se, upper: beta + z * se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{SamplePolicy, Stamp};
    use crate::linear::fit_linear_lp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn design(x: DMatrix<f64>, y: Vec<f64>, horizon: usize) -> HorizonDesign {
        let n = x.nrows();
        let k = x.ncols();
        HorizonDesign {
            horizon,
            y: DVector::from_vec(y),
            x,
            shock_col: 1,
            column_names: (0..k).map(|j| format!("c{j}")).collect(),
            dates: (0..n as i64).map(|i| Stamp::quarterly(1950, 1).advance(i)).collect(),
            rows: (0..n).collect(),
            policy: SamplePolicy::Maximal,
        }
    }

    fn random(t: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::<f64>::from_fn(t, 3, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
        let y = (0..t)
            .map(|i| 0.5 * x[(i, 1)] - 0.2 * x[(i, 2)] + (1.0 + x[(i, 1)].abs()) * rng.sample::<f64, _>(StandardNormal))
            .collect();
        (x, y)
    }

    #[test]
    fn zero_bandwidth_is_white() {
        let (x, y) = random(80, 2);
        let d = design(x.clone(), y, 0);
        let fit = fit_linear_lp(&d).unwrap();
        let hac = newey_west_se(&d, &fit, &HacOptions { bandwidth: Some(0), dof_correction: false }).unwrap();
        // HC0 through an explicit inverse and explicit meat sum
        let inv = x.tr_mul(&x).try_inverse().unwrap();
        let mut meat = DMatrix::zeros(3, 3);
        for (i, r) in x.row_iter().enumerate() {
            meat += r.transpose() * r * fit.residuals[i].powi(2);
        }
        let hc0 = &inv * meat * &inv;
        assert!((hac.covariance.clone() - &hc0).amax() <= 1e-10 * hc0.amax());
        assert!((hac.se - hc0[(1, 1)].sqrt()).abs() < 1e-10 * hac.se);
    }

    #[test]
    fn perfect_fit_has_zero_se() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.5]);
        let y: Vec<f64> = (0..4).map(|i| 2.0 + 3.0 * x[(i, 1)]).collect();
        let d = design(x, y, 1);
        let fit = fit_linear_lp(&d).unwrap();
        let hac = newey_west_se(&d, &fit, &HacOptions::default()).unwrap();
        assert!(hac.se < 1e-12);
        let b = confidence_band(fit.beta, 0.0, 0.84).unwrap();
        assert_eq!(b.lower, b.upper);
    }

    #[test]
    fn bandwidth_must_be_below_sample() {
        let (x, y) = random(10, 4);
        let d = design(x, y, 0);
        let fit = fit_linear_lp(&d).unwrap();
        let opts = HacOptions { bandwidth: Some(10), dof_correction: true };
        assert!(newey_west_se(&d, &fit, &opts).is_err());
    }

    #[test]
    fn bartlett_weights_decrease() {
        let w = bartlett_weights(4);
        for (a, b) in w.iter().zip([0.8, 0.6, 0.4, 0.2]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(w.windows(2).all(|p| p[0] > p[1]) && w[3] > 0.0);
        assert!(bartlett_weights(0).is_empty());
    }

    #[test]
    fn hac_covariance_is_psd() {
        let (x, y) = random(120, 9);
        let d = design(x, y, 3);
        let fit = fit_linear_lp(&d).unwrap();
        let hac = newey_west_se(&d, &fit, &HacOptions::default()).unwrap();
        let ev = hac.covariance.clone().symmetric_eigen().eigenvalues;
        assert!(ev.min() >= -1e-10 * ev.amax());
    }

    #[test]
    fn band_quantiles() {
        let b = confidence_band(0.0, 1.0, 0.84).unwrap();
        assert!((b.upper - 1.4051).abs() < 1e-4);
        let b = confidence_band(3.0, 2.0, 0.95).unwrap();
        assert!((b.lower + 0.92).abs() < 1e-2 && (b.upper - 6.92).abs() < 1e-2);
        assert!(confidence_band(0.0, 1.0, 1.0).is_err());
    }
}
