use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{HorizonDesign, Stamp};
use crate::linalg::{self, QrSolver};
use crate::linear::{EvidenceCurve, LinearLpFit};
use crate::{LpError, Result};

/// Three views of how the sample builds up a coefficient, aligned by date.
#[derive(Debug, Clone, Serialize)]
pub struct WindowPaths {
    pub horizon: usize,
    pub dates: Vec<Stamp>,
    /// Running sum of contributions from the full-sample fit.
    pub cumulative: Vec<f64>,
    /// Coefficient refit on rows `0..=t`; `None` until the design has full rank.
    pub expanding: Vec<Option<f64>>,
    /// Coefficient refit on the `omega` rows ending at `t`.
    pub rolling: Vec<Option<f64>>,
    pub omega: usize,
}

fn refit(design: &HorizonDesign, start: usize, end: usize) -> Option<f64> {
    if end - start <= design.n_regressors() {
        return None;
    }
    let sub = design.slice_rows(start, end);
    if linalg::numerical_rank(&sub.x).0 < sub.n_regressors() {
        return None;
    }
    Some(QrSolver::new(&sub.x).solve(&sub.y)[design.shock_col])
}

pub fn window_paths(design: &HorizonDesign, fit: &LinearLpFit, omega: usize) -> Result<WindowPaths> {
    let t = design.n_obs();
    let k = design.n_regressors();
    if omega < k + 2 || omega > t {
        return Err(LpError::InvalidArgument(format!(
            "rolling window {omega} must lie in [{}, {t}]",
            k + 2
        )));
    }
    let expanding: Vec<Option<f64>> = (1..=t).into_par_iter().map(|end| refit(design, 0, end)).collect();
    let rolling: Vec<Option<f64>> = (1..=t)
        .into_par_iter()
        .map(|end| if end >= omega { refit(design, end - omega, end) } else { None })
        .collect();
    let curve = EvidenceCurve::from_contributions(&fit.contributions, &fit.dates);
    Ok(WindowPaths {
        horizon: design.horizon,
        dates: design.dates.clone(),
        cumulative: curve.cumulative,
        expanding,
        rolling,
        omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_designs, LpSpec};
    use crate::linear::fit_linear_lp;
    use crate::synthetic;

    #[test]
    fn terminal_points_equal_the_full_fit() {
        let frame = synthetic::distributed_lag(150, 0.8, 0.5, 3);
        let mut spec = LpSpec::new("y", "s", 1);
        spec.lags = 1;
        let d = &build_designs(&frame, &spec).unwrap()[1];
        let fit = fit_linear_lp(d).unwrap();
        let p = window_paths(d, &fit, d.n_obs()).unwrap();
        assert_eq!(*p.expanding.last().unwrap(), Some(fit.beta));
        let rolled: Vec<f64> = p.rolling.iter().flatten().copied().collect();
        assert_eq!(rolled, vec![fit.beta]);
        assert!((p.cumulative.last().unwrap() - fit.beta).abs() < 1e-10);
        assert!(p.expanding[..d.n_regressors()].iter().all(Option::is_none));
        assert!(window_paths(d, &fit, 3).is_err());
    }
}
