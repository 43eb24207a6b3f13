//! Small descriptive statistics used across modules.

use crate::{LpError, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population (1/n) variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

/// Empirical quantile with linear interpolation between order statistics
/// (`(n-1) p` positioning). `p` is a probability in `[0, 1]`.
pub fn quantile(x: &[f64], p: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(LpError::InvalidArgument("quantile of an empty series".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(LpError::InvalidArgument(format!("quantile level {p} outside [0, 1]")));
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&s, p))
}

pub(crate) fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let pos = (s.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        s[lo]
    } else {
        s[lo] + frac * (s[hi] - s[lo])
    }
}
