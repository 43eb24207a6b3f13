use serde::{Deserialize, Serialize};

use crate::stats;
use crate::{LpError, Result};

/// Which series the percentile thresholds are computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimBasis {
    Weights,
    Contributions,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrimResult {
    pub beta: f64,
    pub trimmed_beta: f64,
    pub lower_threshold: Option<f64>,
    pub upper_threshold: Option<f64>,
    /// Indices whose weight was set to zero.
    pub trimmed: Vec<usize>,
}

/// Zeroes the observations at or beyond the `lower_pct` and `upper_pct`
/// empirical percentiles and returns the coefficient without re-estimating.
///
/// The trimmed coefficient is `beta` minus the removed contributions, so a
/// `(0, 100)` pair, which trims nothing, returns `beta` unchanged.
pub fn trimmed_irf(
    beta: f64,
    weights: &[f64],
    contributions: &[f64],
    lower_pct: f64,
    upper_pct: f64,
    basis: TrimBasis,
) -> Result<TrimResult> {
    if weights.len() != contributions.len() || weights.is_empty() {
        return Err(LpError::InvalidArgument("weights and contributions must be nonempty and aligned".into()));
    }
    if !(0.0 <= lower_pct && lower_pct <= upper_pct && upper_pct <= 100.0) {
        return Err(LpError::InvalidArgument(format!("bad percentile pair ({lower_pct}, {upper_pct})")));
    }
    let base = match basis {
        TrimBasis::Weights => weights,
        TrimBasis::Contributions => contributions,
    };
    let lower = if lower_pct > 0.0 { Some(stats::quantile(base, lower_pct / 100.0)?) } else { None };
    let upper = if upper_pct < 100.0 { Some(stats::quantile(base, upper_pct / 100.0)?) } else { None };
    let trimmed: Vec<usize> = base
        .iter()
        .enumerate()
        .filter(|(_, v)| lower.is_some_and(|l| **v <= l) || upper.is_some_and(|u| **v >= u))
        .map(|(t, _)| t)
        .collect();
    if trimmed.len() == weights.len() {
        return Err(LpError::TrimmedEverything);
    }
    let removed: f64 = trimmed.iter().map(|&t| contributions[t]).sum();
    Ok(TrimResult {
        beta,
        trimmed_beta: beta - removed,
        lower_threshold: lower,
        upper_threshold: upper,
        trimmed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(t: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..t).map(|_| rng.random::<f64>() - 0.5).collect();
        let c: Vec<f64> = w.iter().map(|v| v * (rng.random::<f64>() * 4.0 - 1.0)).collect();
        (w, c)
    }

    #[test]
    fn full_range_is_identity() {
        let (w, c) = random(50, 1);
        let r = trimmed_irf(0.7, &w, &c, 0.0, 100.0, TrimBasis::Weights).unwrap();
        assert_eq!(r.trimmed_beta, 0.7);
        assert!(r.trimmed.is_empty());
    }

    #[test]
    fn one_percent_tails_drop_the_extremes() {
        let (w, c) = random(100, 2);
        let beta: f64 = c.iter().sum();
        let r = trimmed_irf(beta, &w, &c, 1.0, 99.0, TrimBasis::Weights).unwrap();
        let imax = (0..100).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
        let imin = (0..100).min_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
        let mut expect = vec![imin, imax];
        expect.sort();
        assert_eq!(r.trimmed, expect);
        assert!((r.trimmed_beta - (beta - c[imin] - c[imax])).abs() < 1e-14);
    }

    #[test]
    fn matches_masked_sum() {
        for seed in 0..10 {
            let (w, c) = random(83, seed);
            let beta: f64 = c.iter().sum();
            for basis in [TrimBasis::Weights, TrimBasis::Contributions] {
                let r = trimmed_irf(beta, &w, &c, 5.0, 90.0, basis).unwrap();
                let base = if basis == TrimBasis::Weights { &w } else { &c };
                let mut sorted = base.clone();
                sorted.sort_by(f64::total_cmp);
                // thresholds by hand, then a masked dot product
                let q = |p: f64| {
                    let pos = p * 82.0;
                    let lo = pos.floor() as usize;
                    sorted[lo] + (pos - lo as f64) * (sorted[(lo + 1).min(82)] - sorted[lo])
                };
                let (lo, hi) = (q(0.05), q(0.90));
                let oracle: f64 = (0..83).filter(|&t| base[t] > lo && base[t] < hi).map(|t| c[t]).sum();
                assert!((r.trimmed_beta - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trimming_everything_fails() {
        let w = [1.0, 1.0, 1.0];
        assert!(matches!(trimmed_irf(1.0, &w, &w, 50.0, 50.0, TrimBasis::Weights), Err(LpError::TrimmedEverything)));
    }
}
