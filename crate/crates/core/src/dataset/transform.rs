//! Stationarity and smoothing transforms on series and frames.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::TimeSeriesFrame;
use crate::{LpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    LogDiff,
    Diff,
    /// `x_t + x_{t+1} + ... + x_{t+h}`.
    CumulativeLeadSum(usize),
    Standardize,
    /// Trailing mean over `window` observations.
    MovingAverage(usize),
}

impl Transform {
    /// Rows lost at the start and at the end of the sample.
    pub fn trimmed_rows(self) -> (usize, usize) {
        match self {
            Transform::LogDiff | Transform::Diff => (1, 0),
            Transform::CumulativeLeadSum(h) => (0, h),
            Transform::Standardize => (0, 0),
            Transform::MovingAverage(w) => (w.saturating_sub(1), 0),
        }
    }

    pub fn apply(self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Transform::LogDiff => log_diff(x),
            Transform::Diff => diff(x),
            Transform::CumulativeLeadSum(h) => cumulative_lead_sum(x, h),
            Transform::Standardize => standardize(x),
            Transform::MovingAverage(w) => moving_average(x, w),
        }
    }
}

pub fn diff(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(LpError::TooShort("diff needs at least two observations".into()));
    }
    Ok(x.windows(2).map(|w| w[1] - w[0]).collect())
}

pub fn log_diff(x: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = x.iter().find(|v| **v <= 0.0) {
        return Err(LpError::InvalidArgument(format!("log of non-positive value {v}")));
    }
    let logs: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    diff(&logs)
}

pub fn cumulative_lead_sum(x: &[f64], h: usize) -> Result<Vec<f64>> {
    if h >= x.len() {
        return Err(LpError::TooShort(format!(
            "lead sum of {h} periods on {} observations",
            x.len()
        )));
    }
    Ok((0..x.len() - h).map(|t| x[t..=t + h].iter().sum()).collect())
}

/// Z-score with the population (1/T) variance.
pub fn standardize(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(LpError::TooShort("standardize on an empty series".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(LpError::InvalidArgument("standardize on a constant series".into()));
    }
    let sd = var.sqrt();
    Ok(x.iter().map(|v| (v - mean) / sd).collect())
}

/// Trailing moving average; the first `window - 1` points are dropped.
pub fn moving_average(x: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(LpError::InvalidArgument("moving-average window must be >= 1".into()));
    }
    if window > x.len() {
        return Err(LpError::TooShort(format!(
            "moving-average window {window} exceeds {} observations",
            x.len()
        )));
    }
    let w = window as f64;
    Ok(x.windows(window).map(|win| win.iter().sum::<f64>() / w).collect())
}

/// Applies `op` to the named columns and trims every column to the rows the
/// transform leaves defined, so the frame stays aligned.
pub fn transform(frame: &TimeSeriesFrame, columns: &[&str], op: Transform) -> Result<TimeSeriesFrame> {
    let (head, tail) = op.trimmed_rows();
    if head + tail >= frame.len() {
        return Err(LpError::TooShort(format!(
            "{op:?} on a frame of {} rows",
            frame.len()
        )));
    }
    for c in columns {
        frame.column(c)?;
    }
    let end = frame.len() - tail;
    let mut out = IndexMap::new();
    for (name, values) in frame.columns() {
        let col = if columns.contains(&name.as_str()) {
            op.apply(values)?
        } else {
            values[head..end].to_vec()
        };
        out.insert(name.clone(), col);
    }
    TimeSeriesFrame::new(frame.dates()[head..end].to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Stamp;

    #[test]
    fn standardize_z_scores() {
        let z = standardize(&[2.0, 4.0, 6.0]).unwrap();
        let expect = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in z.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let mean = z.iter().sum::<f64>() / 3.0;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-15);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diff_small() {
        assert_eq!(diff(&[1.0, 3.0, 6.0]).unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn lead_sum_matches_hand_sum() {
        let g = [0.5, -1.0, 2.0, 0.25, 3.0];
        let out = cumulative_lead_sum(&g, 2).unwrap();
        // independent brute force: explicit three-term sums
        let mut hand = Vec::new();
        for t in 0..g.len() - 2 {
            hand.push(g[t] + g[t + 1] + g[t + 2]);
        }
        assert_eq!(out, hand);
        assert!(cumulative_lead_sum(&g, 5).is_err());
    }

    #[test]
    fn moving_average_edges() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), vec![1.5, 2.5, 3.5]);
        assert_eq!(moving_average(&[1.0, 2.0], 1).unwrap(), vec![1.0, 2.0]);
        assert!(moving_average(&[1.0], 2).is_err());
    }

    #[test]
    fn frame_transform_keeps_alignment() {
        let dates: Vec<Stamp> = (0..4).map(|i| Stamp::monthly(2000, 1).advance(i)).collect();
        let mut cols = IndexMap::new();
        cols.insert("y".to_string(), vec![1.0, 3.0, 6.0, 10.0]);
        cols.insert("s".to_string(), vec![0.0, 1.0, 2.0, 3.0]);
        let f = TimeSeriesFrame::new(dates, cols).unwrap();
        let d = transform(&f, &["y"], Transform::Diff).unwrap();
        assert_eq!(d.column("y").unwrap(), &[2.0, 3.0, 4.0]);
        assert_eq!(d.column("s").unwrap(), &[1.0, 2.0, 3.0]);
        assert_eq!(d.dates()[0].to_string(), "2000-02");
        assert!(transform(&f, &["y"], Transform::MovingAverage(5)).is_err());
    }
}
