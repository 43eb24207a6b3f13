//! Run configuration, read from a TOML file.
//!
//! ```toml
//! estimator = "both"
//!
//! [data]
//! path = "data/bundled_synthetic.csv"
//!
//! [spec]
//! target = "y"
//! shock = "s"
//! controls = ["z"]
//! lags = 2
//! horizons = 12
//!
//! [forest]
//! n_trees = 500
//! seed = 7
//! ```
//!
//! Every section and key is optional except `data.path`, `spec.target`,
//! `spec.shock` and `spec.horizons`. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use lpdecomp::diagnostics::TrimBasis;
use lpdecomp::forest_lp::ForestParams;
use lpdecomp::inference::HacOptions;
use lpdecomp::clustering::KMeansOptions;
use lpdecomp::dataset::LpSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Linear,
    Forest,
    #[default]
    Both,
}

impl Estimator {
    pub fn linear(self) -> bool {
        matches!(self, Estimator::Linear | Estimator::Both)
    }

    pub fn forest(self) -> bool {
        matches!(self, Estimator::Forest | Estimator::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default = "default_date_column")]
    pub date_column: String,
    /// Date range such as `1960:` or `1960Q1:2010Q4`, applied before anything else.
    #[serde(default)]
    pub subsample: Option<String>,
}

fn default_date_column() -> String {
    "date".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_node_size: usize,
    pub split_fraction: f64,
    /// Forced split candidates; unset means the shock and the target lags.
    pub always_split: Option<Vec<String>>,
    pub exclude: Vec<String>,
    pub seed: u64,
    pub bootstrap: bool,
    /// Keep contemporaneous controls (when the specification has them) among
    /// the forest features, so the forest sees the same regressors as OLS.
    pub contemporaneous: bool,
    /// Number of conditional-IRF weight files written (earliest contexts first).
    pub scenario_exports: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        let p = ForestParams::default();
        ForestConfig {
            n_trees: p.n_trees,
            min_node_size: p.min_node_size,
            split_fraction: p.split_fraction,
            always_split: None,
            exclude: Vec::new(),
            seed: p.seed,
            bootstrap: p.bootstrap,
            contemporaneous: true,
            scenario_exports: 3,
        }
    }
}

impl ForestConfig {
    pub fn params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            min_node_size: self.min_node_size,
            split_fraction: self.split_fraction,
            always_split: self.always_split.clone(),
            exclude: self.exclude.clone(),
            seed: self.seed,
            bootstrap: self.bootstrap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DosageConfig {
    /// Intervention size in standard deviations of the shock; the sign matters.
    pub delta: f64,
}

impl Default for DosageConfig {
    fn default() -> Self {
        DosageConfig { delta: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimOn {
    #[default]
    Weights,
    Contributions,
}

impl From<TrimOn> for TrimBasis {
    fn from(t: TrimOn) -> TrimBasis {
        match t {
            TrimOn::Weights => TrimBasis::Weights,
            TrimOn::Contributions => TrimBasis::Contributions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// Top share (in percent) used by the concentration statistics.
    pub concentration_q: f64,
    pub trim_lower: f64,
    pub trim_upper: f64,
    pub trim_on: TrimOn,
    /// Moving-average windows applied to exported weights.
    pub ma_windows: Vec<usize>,
    /// Rolling window length for the expanding/rolling estimates; unset skips them.
    pub window: Option<usize>,
    /// Sample restriction for the re-estimation robustness check.
    pub robustness_subsample: Option<String>,
    pub influence: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            concentration_q: 10.0,
            trim_lower: 1.0,
            trim_upper: 99.0,
            trim_on: TrimOn::Weights,
            ma_windows: vec![6],
            window: None,
            robustness_subsample: None,
            influence: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    /// Coverage levels of the Newey-West bands, in (0, 1).
    pub levels: Vec<f64>,
    pub bandwidth: Option<usize>,
    pub dof_correction: bool,
    /// Percentiles of the forest tree band.
    pub tree_band: (f64, f64),
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig { levels: vec![0.84, 0.95], bandwidth: None, dof_correction: true, tree_band: (16.0, 84.0) }
    }
}

impl InferenceConfig {
    pub fn hac(&self) -> HacOptions {
        HacOptions { bandwidth: self.bandwidth, dof_correction: self.dof_correction }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringConfig {
    pub enabled: bool,
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    pub standardize: bool,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        let o = KMeansOptions::default();
        ClusteringConfig {
            enabled: false,
            k: o.k,
            seed: o.seed,
            restarts: o.restarts,
            max_iter: o.max_iter,
            standardize: o.standardize,
        }
    }
}

impl ClusteringConfig {
    pub fn options(&self) -> KMeansOptions {
        KMeansOptions {
            k: self.k,
            seed: self.seed,
            restarts: self.restarts,
            max_iter: self.max_iter,
            standardize: self.standardize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub charts: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("lpdecomp-out"), charts: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub estimator: Estimator,
    pub data: DataConfig,
    pub spec: LpSpec,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub dosage: DosageConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).context("malformed configuration")?;
        Ok(cfg)
    }

    /// Reads a config file; a relative data path is taken relative to the file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = RunConfig::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        if cfg.data.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data.path = dir.join(&cfg.data.path);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.forest.params().validate()?;
        let d = &self.diagnostics;
        ensure!(d.concentration_q > 0.0 && d.concentration_q <= 100.0, "concentration_q must lie in (0, 100]");
        ensure!(
            (0.0..=100.0).contains(&d.trim_lower) && (0.0..=100.0).contains(&d.trim_upper) && d.trim_lower < d.trim_upper,
            "trim percentiles must satisfy 0 <= lower < upper <= 100"
        );
        ensure!(d.ma_windows.iter().all(|&w| w >= 1), "moving-average windows must be positive");
        for &l in &self.inference.levels {
            ensure!(l > 0.0 && l < 1.0, "band level {l} outside (0, 1)");
        }
        let (lo, hi) = self.inference.tree_band;
        ensure!((0.0..=100.0).contains(&lo) && (0.0..=100.0).contains(&hi) && lo < hi, "tree band percentiles out of order");
        if !self.dosage.delta.is_finite() || self.dosage.delta == 0.0 {
            bail!("dosage delta must be finite and nonzero");
        }
        if self.clustering.enabled {
            ensure!(self.clustering.k >= 1, "clustering needs k >= 1");
            ensure!(self.estimator.forest(), "clustering needs the forest estimator");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[data]
path = "x.csv"

[spec]
target = "y"
shock = "s"
horizons = 4
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.estimator, Estimator::Both);
        assert_eq!(c.forest.n_trees, 1000);
        assert_eq!(c.diagnostics.concentration_q, 10.0);
        assert_eq!(c.dosage.delta, 1.0);
        c.validate().unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::from_toml(MINIMAL).unwrap();
        c.spec.controls = vec!["z".into()];
        c.diagnostics.window = Some(40);
        c.forest.always_split = Some(vec!["s".into()]);
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[forest]\ntrees = 3\n");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn invalid_values_are_caught() {
        let mut c = RunConfig::from_toml(MINIMAL).unwrap();
        c.diagnostics.trim_lower = 60.0;
        c.diagnostics.trim_upper = 40.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::from_toml(MINIMAL).unwrap();
        c.dosage.delta = 0.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::from_toml(MINIMAL).unwrap();
        c.estimator = Estimator::Linear;
        c.clustering.enabled = true;
        assert!(c.validate().is_err());
    }
}
