use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::exact::{self, ScaledVector};
use crate::linear::LinearLpFit;
use crate::{LpError, Result};

/// Share of total absolute mass held by the largest `Q` percent of entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Share {
    pub share: f64,
    /// Number of entries counted as the top group.
    pub count: usize,
    /// True when `floor(Q T / 100)` was 0 and one entry was used instead.
    pub floored: bool,
}

/// Sums are exact, so uniform inputs give exactly `Q/100` whenever
/// `Q T / 100` is an integer.
pub fn concentration(values: &[f64], q: f64) -> Result<Share> {
    if values.is_empty() {
        return Err(LpError::TooShort("concentration of an empty vector".into()));
    }
    if !(q > 0.0 && q <= 100.0) {
        return Err(LpError::InvalidArgument(format!("top share {q} outside (0, 100]")));
    }
    let scaled = ScaledVector::new(values);
    let mut abs: Vec<BigInt> = scaled.ints.iter().map(Signed::abs).collect();
    let total: BigInt = abs.iter().sum();
    if total.is_zero() {
        return Err(LpError::AllZero("concentration"));
    }
    abs.sort_unstable_by(|a, b| b.cmp(a));
    let raw = (q * values.len() as f64 / 100.0 + 1e-9).floor() as usize;
    let count = raw.clamp(1, values.len());
    let top: BigInt = abs[..count].iter().sum();
    Ok(Share {
        share: exact::round(&BigRational::new(top, total)),
        count,
        floored: raw == 0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationRow {
    pub horizon: usize,
    pub wc: f64,
    pub cc: f64,
    pub floored: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    pub q: f64,
    pub rows: Vec<ConcentrationRow>,
    /// Set when every horizon shares one design, so WC is a single number.
    pub wc_horizon_invariant: bool,
}

impl ConcentrationReport {
    pub fn wc(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.wc).collect()
    }

    pub fn cc(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.cc).collect()
    }
}

pub fn concentration_report(fits: &[LinearLpFit], q: f64, common_sample: bool) -> Result<ConcentrationReport> {
    let rows = fits
        .iter()
        .map(|f| {
            let wc = concentration(&f.weights, q)?;
            let cc = concentration(&f.contributions, q)?;
            Ok(ConcentrationRow { horizon: f.horizon, wc: wc.share, cc: cc.share, floored: wc.floored || cc.floored })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConcentrationReport { q, rows, wc_horizon_invariant: common_sample })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_floor() {
        let s = concentration(&[0.1; 10], 10.0).unwrap();
        assert_eq!(s.share, 0.1);
        assert_eq!(s.count, 1);
        assert!(!s.floored);
        let s = concentration(&[-0.3; 20], 10.0).unwrap();
        assert_eq!(s.share, 0.1);
    }

    #[test]
    fn single_dominant_weight() {
        let mut w = vec![0.91];
        w.extend([0.01; 9]);
        assert_eq!(concentration(&w, 10.0).unwrap().share, 0.91);
    }

    #[test]
    fn small_samples_floor_at_one() {
        let s = concentration(&[1.0, 2.0, 3.0], 10.0).unwrap();
        assert!(s.floored);
        assert_eq!(s.count, 1);
        assert_eq!(s.share, 0.5);
    }

    #[test]
    fn errors() {
        assert!(matches!(concentration(&[0.0; 4], 10.0), Err(LpError::AllZero(_))));
        assert!(concentration(&[], 10.0).is_err());
        assert!(concentration(&[1.0], 0.0).is_err());
    }

    #[test]
    fn scale_and_sign_invariance_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w: Vec<f64> = (0..57).map(|_| rng.random::<f64>() - 0.5).collect();
        let base = concentration(&w, 10.0).unwrap().share;
        let scaled: Vec<f64> = w.iter().map(|v| v * -3.0).collect();
        assert!((concentration(&scaled, 10.0).unwrap().share - base).abs() < 1e-15);
        let mut prev = 0.0;
        for q in 1..=100 {
            let s = concentration(&w, q as f64).unwrap().share;
            assert!(s >= prev);
            assert!(s >= q as f64 / 100.0 - 1e-12 || concentration(&w, q as f64).unwrap().floored);
            prev = s;
        }
        assert_eq!(prev, 1.0);
    }
}
