//! Per-horizon regression systems.
//!
//! Column order of every design matrix:
//!
//! ```text
//! const | trend1..trendD | shock_t | [controls_t] | y_{t-1} s_{t-1} z1_{t-1} .. | y_{t-2} ..
//! ```
//!
//! Contemporaneous controls only appear when `contemporaneous_controls` is set.
//! Row `r` of horizon `h` is dated `t = p + r` (index into the frame) and is
//! paired with the target dated `t + h`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{transform, Stamp, TimeSeriesFrame};
use crate::linalg;
use crate::{LpError, Result};

/// Which rows each horizon uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplePolicy {
    /// Every horizon keeps all rows it can align.
    Maximal,
    /// Every horizon is cut to the rows available at the longest horizon.
    Common,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSpec {
    pub target: String,
    pub shock: String,
    #[serde(default)]
    pub controls: Vec<String>,
    #[serde(default)]
    pub lags: usize,
    pub horizons: usize,
    #[serde(default)]
    pub trend_degree: usize,
    #[serde(default)]
    pub cumulate: bool,
    #[serde(default)]
    pub standardize_shock: bool,
    #[serde(default)]
    pub common_sample: bool,
    #[serde(default)]
    pub contemporaneous_controls: bool,
}

impl LpSpec {
    pub fn new(target: &str, shock: &str, horizons: usize) -> Self {
        LpSpec {
            target: target.to_string(),
            shock: shock.to_string(),
            controls: Vec::new(),
            lags: 0,
            horizons,
            trend_degree: 0,
            cumulate: false,
            standardize_shock: false,
            common_sample: false,
            contemporaneous_controls: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.controls.contains(&self.shock) {
            return Err(LpError::InvalidSpec(format!(
                "shock `{}` is also listed as a control",
                self.shock
            )));
        }
        if self.target == self.shock {
            return Err(LpError::InvalidSpec("target and shock are the same column".into()));
        }
        if self.trend_degree > 4 {
            return Err(LpError::InvalidSpec(format!(
                "trend degree {} exceeds 4",
                self.trend_degree
            )));
        }
        Ok(())
    }

    pub fn sample_policy(&self) -> SamplePolicy {
        if self.common_sample {
            SamplePolicy::Common
        } else {
            SamplePolicy::Maximal
        }
    }

    /// Names of the columns of every design, in order.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["const".to_string()];
        names.extend((1..=self.trend_degree).map(|d| format!("trend{d}")));
        names.push(self.shock.clone());
        if self.contemporaneous_controls {
            names.extend(self.controls.iter().cloned());
        }
        for l in 1..=self.lags {
            names.push(format!("{}_lag{l}", self.target));
            names.push(format!("{}_lag{l}", self.shock));
            names.extend(self.controls.iter().map(|c| format!("{c}_lag{l}")));
        }
        names
    }

    pub fn shock_col(&self) -> usize {
        1 + self.trend_degree
    }

    /// Indices of the target's own lags.
    pub fn target_lag_cols(&self) -> Vec<usize> {
        let start = self.shock_col() + 1 + if self.contemporaneous_controls { self.controls.len() } else { 0 };
        let block = 2 + self.controls.len();
        (0..self.lags).map(|l| start + l * block).collect()
    }

    /// Indices of contemporaneous control columns (empty unless enabled).
    pub fn contemporaneous_cols(&self) -> Vec<usize> {
        if !self.contemporaneous_controls {
            return Vec::new();
        }
        let s = self.shock_col();
        (s + 1..s + 1 + self.controls.len()).collect()
    }
}

/// One horizon's regression `y_{t+h} = X_t b + v_{t+h}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonDesign {
    pub horizon: usize,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub shock_col: usize,
    pub column_names: Vec<String>,
    /// Date of each row's regressors (the shock date `t`).
    pub dates: Vec<Stamp>,
    /// Frame index of each row's date.
    pub rows: Vec<usize>,
    pub policy: SamplePolicy,
}

impl HorizonDesign {
    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_regressors(&self) -> usize {
        self.x.ncols()
    }

    pub fn shock(&self) -> Vec<f64> {
        self.x.column(self.shock_col).iter().copied().collect()
    }

    pub fn y_slice(&self) -> &[f64] {
        self.y.as_slice()
    }

    /// The first `n` rows, keeping everything else.
    pub fn truncate(&self, n: usize) -> HorizonDesign {
        HorizonDesign {
            horizon: self.horizon,
            y: self.y.rows(0, n).into_owned(),
            x: self.x.rows(0, n).into_owned(),
            shock_col: self.shock_col,
            column_names: self.column_names.clone(),
            dates: self.dates[..n].to_vec(),
            rows: self.rows[..n].to_vec(),
            policy: self.policy,
        }
    }

    /// Rows `start..end` as a new design.
    pub fn slice_rows(&self, start: usize, end: usize) -> HorizonDesign {
        HorizonDesign {
            horizon: self.horizon,
            y: self.y.rows(start, end - start).into_owned(),
            x: self.x.rows(start, end - start).into_owned(),
            shock_col: self.shock_col,
            column_names: self.column_names.clone(),
            dates: self.dates[start..end].to_vec(),
            rows: self.rows[start..end].to_vec(),
            policy: self.policy,
        }
    }
}

/// Polynomial trend columns on a 0..1 ramp, Gram-Schmidt orthogonalized
/// against the intercept and lower powers and scaled to unit RMS.
fn trend_columns(n: usize, degree: usize) -> Vec<Vec<f64>> {
    let denom = (n.max(2) - 1) as f64;
    let ramp: Vec<f64> = (0..n).map(|i| i as f64 / denom).collect();
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / (n as f64).sqrt(); n]];
    let mut out = Vec::new();
    for d in 1..=degree {
        let mut v: Vec<f64> = ramp.iter().map(|r| r.powi(d as i32)).collect();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                v.iter_mut().zip(b).for_each(|(a, c)| *a -= proj * c);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let unit: Vec<f64> = v.iter().map(|a| a / norm).collect();
        out.push(unit.iter().map(|a| a * (n as f64).sqrt()).collect());
        basis.push(unit);
    }
    out
}

/// Builds one design per horizon `0..=H`.
///
/// The first `p` rows are lag burn-in and horizon `h` loses the last `h`
/// rows. With `common_sample` every horizon keeps exactly the rows of the
/// longest one, so all design matrices are identical.
pub fn build_designs(frame: &TimeSeriesFrame, spec: &LpSpec) -> Result<Vec<HorizonDesign>> {
    spec.validate()?;
    let target = frame.column(&spec.target)?.to_vec();
    let mut shock = frame.column(&spec.shock)?.to_vec();
    if spec.standardize_shock {
        shock = transform::standardize(&shock)?;
    }
    let controls: Vec<&[f64]> = spec
        .controls
        .iter()
        .map(|c| frame.column(c))
        .collect::<Result<_>>()?;

    let n = frame.len();
    let p = spec.lags;
    let names = spec.column_names();
    let k = names.len();
    if n <= p + spec.horizons {
        return Err(LpError::InsufficientRows {
            horizon: spec.horizons,
            rows: n.saturating_sub(p + spec.horizons),
            cols: k,
        });
    }
    let usable = n - p;
    let trends = trend_columns(usable, spec.trend_degree);

    // regressor rows for every usable date, shared by all horizons
    let mut full_x = DMatrix::zeros(usable, k);
    for r in 0..usable {
        let t = p + r;
        let mut c = 0;
        full_x[(r, c)] = 1.0;
        c += 1;
        for tr in &trends {
            full_x[(r, c)] = tr[r];
            c += 1;
        }
        full_x[(r, c)] = shock[t];
        c += 1;
        if spec.contemporaneous_controls {
            for z in &controls {
                full_x[(r, c)] = z[t];
                c += 1;
            }
        }
        for l in 1..=p {
            full_x[(r, c)] = target[t - l];
            full_x[(r, c + 1)] = shock[t - l];
            c += 2;
            for z in &controls {
                full_x[(r, c)] = z[t - l];
                c += 1;
            }
        }
    }

    let mut designs = Vec::with_capacity(spec.horizons + 1);
    for h in 0..=spec.horizons {
        let rows_h = if spec.common_sample { usable - spec.horizons } else { usable - h };
        if rows_h <= k {
            return Err(LpError::InsufficientRows { horizon: h, rows: rows_h, cols: k });
        }
        let y: Vec<f64> = (0..rows_h)
            .map(|r| {
                let t = p + r;
                if spec.cumulate {
                    target[t..=t + h].iter().sum()
                } else {
                    target[t + h]
                }
            })
            .collect();
        let x = full_x.rows(0, rows_h).into_owned();
        linalg::ensure_full_rank(&x, &names, h)?;
        designs.push(HorizonDesign {
            horizon: h,
            y: DVector::from_vec(y),
            x,
            shock_col: spec.shock_col(),
            column_names: names.clone(),
            dates: frame.dates()[p..p + rows_h].to_vec(),
            rows: (p..p + rows_h).collect(),
            policy: spec.sample_policy(),
        });
    }
    Ok(designs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use indexmap::IndexMap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame(n: usize) -> TimeSeriesFrame {
        let dates: Vec<Stamp> = (0..n as i64).map(|i| Stamp::monthly(1990, 1).advance(i)).collect();
        let mut cols = IndexMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        for name in ["y", "s", "z"] {
            cols.insert(name.into(), (0..n).map(|_| rng.random::<f64>() - 0.5).collect());
        }
        TimeSeriesFrame::new(dates, cols).unwrap()
    }

    #[test]
    fn row_counts_shrink_with_horizon() {
        let f = frame(50);
        let mut spec = LpSpec::new("y", "s", 2);
        spec.lags = 12;
        let d = build_designs(&f, &spec).unwrap();
        let rows: Vec<usize> = d.iter().map(|d| d.n_obs()).collect();
        assert_eq!(rows, vec![38, 37, 36]);
    }

    #[test]
    fn minimal_design_is_const_and_shock() {
        let f = frame(20);
        let spec = LpSpec::new("y", "s", 0);
        let d = &build_designs(&f, &spec).unwrap()[0];
        assert_eq!(d.column_names, vec!["const", "s"]);
        assert_eq!(d.shock_col, 1);
        assert!(d.x.column(0).iter().all(|v| *v == 1.0));
    }

    #[test]
    fn common_sample_is_bit_identical() {
        let f = frame(50);
        let mut spec = LpSpec::new("y", "s", 2);
        spec.lags = 12;
        spec.common_sample = true;
        spec.trend_degree = 3;
        let d = build_designs(&f, &spec).unwrap();
        assert!(d.iter().all(|d| d.n_obs() == 36));
        assert_eq!(d[0].x, d[2].x);
        assert_eq!(d[1].x, d[2].x);
    }

    #[test]
    fn too_few_rows_report_the_horizon() {
        let f = frame(12);
        let mut spec = LpSpec::new("y", "s", 6);
        spec.lags = 2;
        spec.controls = vec!["z".into()];
        match build_designs(&f, &spec) {
            Err(LpError::InsufficientRows { horizon, .. }) => assert!(horizon <= 6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shock_in_controls_rejected() {
        let mut spec = LpSpec::new("y", "s", 1);
        spec.controls = vec!["s".into()];
        assert!(spec.validate().is_err());
        spec.controls.clear();
        spec.trend_degree = 5;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn trend_columns_are_orthogonal() {
        let t = trend_columns(40, 3);
        for (i, a) in t.iter().enumerate() {
            assert!(a.iter().sum::<f64>().abs() < 1e-10);
            for b in &t[i + 1..] {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!(dot.abs() < 1e-10);
            }
        }
    }
}
