use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::HorizonDesign;
use crate::linalg::{self, QrSolver};
use crate::linear::LinearLpFit;
use crate::{LpError, Result};

/// Split of each observation's weight into a fitted and a residual part.
#[derive(Debug, Clone, Serialize)]
pub struct InfluenceSplit {
    pub beta: f64,
    /// `w_t * yhat_{t+h}`; sums to beta.
    pub systematic: Vec<f64>,
    /// `w_t * vhat_{t+h}`; sums to zero.
    pub residual_part: Vec<f64>,
    /// Hat-matrix diagonal.
    pub leverage: Vec<f64>,
    /// `beta - beta_(-t)` from refitting without observation `t`.
    pub loo_influence: Vec<f64>,
    /// Largest `|residual_part_t - (1 - H_tt) LOOI_t|`.
    pub max_identity_violation: f64,
}

pub fn influence_split(design: &HorizonDesign, fit: &LinearLpFit) -> Result<InfluenceSplit> {
    let t = design.n_obs();
    let k = design.n_regressors();
    if t <= k + 1 {
        return Err(LpError::InsufficientRows { horizon: design.horizon, rows: t.saturating_sub(1), cols: k });
    }
    let leverage = QrSolver::new(&design.x).leverage();
    let systematic: Vec<f64> = fit.weights.iter().zip(&fit.fitted).map(|(w, f)| w * f).collect();
    let residual_part: Vec<f64> = fit.weights.iter().zip(&fit.residuals).map(|(w, v)| w * v).collect();
    let j = design.shock_col;
    let loo_influence = (0..t)
        .into_par_iter()
        .map(|drop| {
            let keep: Vec<usize> = (0..t).filter(|&r| r != drop).collect();
            let x = design.x.select_rows(&keep);
            let y = DVector::from_iterator(keep.len(), keep.iter().map(|&r| design.y[r]));
            linalg::ensure_full_rank(&x, &design.column_names, design.horizon)?;
            Ok(fit.beta - QrSolver::new(&x).solve(&y)[j])
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_identity_violation = residual_part
        .iter()
        .zip(&leverage)
        .zip(&loo_influence)
        .map(|((r, h), l)| (r - (1.0 - h) * l).abs())
        .fold(0.0, f64::max);
    Ok(InfluenceSplit { beta: fit.beta, systematic, residual_part, leverage, loo_influence, max_identity_violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{SamplePolicy, Stamp};
    use crate::linear::fit_linear_lp;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn design(t: usize, k: usize, seed: u64) -> HorizonDesign {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(t, k, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
        let y = DVector::from_fn(t, |_, _| rng.sample::<f64, _>(StandardNormal));
        HorizonDesign {
            horizon: 0,
            y,
            x,
            shock_col: 1,
            column_names: (0..k).map(|j| format!("c{j}")).collect(),
            dates: (0..t as i64).map(|i| Stamp::annual(1900).advance(i)).collect(),
            rows: (0..t).collect(),
            policy: SamplePolicy::Maximal,
        }
    }

    #[test]
    fn projection_identities() {
        let d = design(30, 3, 4);
        let fit = fit_linear_lp(&d).unwrap();
        let s = influence_split(&d, &fit).unwrap();
        let scale = fit.beta.abs().max(1.0);
        assert!((s.systematic.iter().sum::<f64>() - fit.beta).abs() <= 1e-10 * scale);
        assert!(s.residual_part.iter().sum::<f64>().abs() <= 1e-10 * scale);
        assert!(s.max_identity_violation <= 1e-8);
        // independent check of one leave-one-out refit via normal equations
        let keep: Vec<usize> = (1..30).collect();
        let x = d.x.select_rows(&keep);
        let y = DVector::from_iterator(29, keep.iter().map(|&r| d.y[r]));
        let b = (x.tr_mul(&x)).try_inverse().unwrap() * x.tr_mul(&y);
        assert!((s.loo_influence[0] - (fit.beta - b[1])).abs() < 1e-10);
    }

    #[test]
    fn too_few_rows() {
        let d = design(4, 3, 1);
        let fit = fit_linear_lp(&d).unwrap();
        assert!(matches!(influence_split(&d, &fit), Err(LpError::InsufficientRows { .. })));
    }
}
