//! Output bundles: CSV tables, charts and a checksummed manifest.
//!
//! Everything is written into a staging directory next to the requested
//! output directory and moved into place only once every artifact and
//! self-check has succeeded. A bundle dropped before [`Bundle::finish`]
//! deletes its staging directory, so failed runs leave nothing behind.
//!
//! The manifest holds no timestamps, paths outside the bundle or thread
//! counts, so identical inputs give byte-identical manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
const TOOL: &str = "lpdecomp";

/// Shortest representation that parses back to the same float.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// A CSV table held in memory.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Table {
        Table { header: header.iter().map(|s| s.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| anyhow::anyhow!("flushing csv: {e}"))
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// One self-check: a measured violation against its tolerance.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub violation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, violation: f64, tolerance: f64) -> Check {
        Check { name: name.into(), violation, tolerance, passed: violation <= tolerance }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub artifacts: Vec<Artifact>,
    pub results: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
}

impl Manifest {
    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

pub struct Bundle {
    target: PathBuf,
    staging: PathBuf,
    artifacts: BTreeMap<String, Artifact>,
    results: BTreeMap<String, Value>,
    checks: Vec<Check>,
    finished: bool,
}

impl Bundle {
    pub fn create(target: &Path) -> Result<Bundle> {
        let name = target
            .file_name()
            .with_context(|| format!("output directory {} has no name", target.display()))?
            .to_string_lossy()
            .into_owned();
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
        let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging).with_context(|| format!("creating {}", staging.display()))?;
        Ok(Bundle {
            target: target.to_path_buf(),
            staging,
            artifacts: BTreeMap::new(),
            results: BTreeMap::new(),
            checks: Vec::new(),
            finished: false,
        })
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.staging.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {rel}"))?;
        let art = Artifact { path: rel.to_string(), bytes: bytes.len() as u64, sha256: hex::encode(Sha256::digest(bytes)) };
        if self.artifacts.insert(rel.to_string(), art).is_some() {
            bail!("artifact {rel} written twice");
        }
        Ok(())
    }

    pub fn table(&mut self, rel: &str, table: &Table) -> Result<()> {
        let bytes = table.to_csv()?;
        self.write(rel, &bytes)
    }

    pub fn record(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.results.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn checks(&self) -> &[Check] {
        &self.checks
    }

    /// Writes the config echo and manifest, then moves the bundle into place.
    ///
    /// Fails, removing everything, when a self-check did not pass. An
    /// existing output directory is replaced only if it holds a manifest
    /// written by this tool or is empty.
    pub fn finish(mut self, command: &str, config_toml: &str) -> Result<Manifest> {
        self.write("config.toml", config_toml.as_bytes())?;
        let manifest = Manifest {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: hex::encode(Sha256::digest(config_toml.as_bytes())),
            artifacts: self.artifacts.values().cloned().collect(),
            results: self.results.clone(),
            checks: self.checks.clone(),
        };
        let failed = manifest.failed_checks();
        if !failed.is_empty() {
            let names: Vec<String> =
                failed.iter().map(|c| format!("{} ({:e} > {:e})", c.name, c.violation, c.tolerance)).collect();
            bail!("self-checks failed: {}", names.join(", "));
        }
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.staging.join(MANIFEST), &text)?;
        replace_dir(&self.staging, &self.target)?;
        self.finished = true;
        Ok(manifest)
    }
}

impl Drop for Bundle {
    fn drop(&mut self) {
        if !self.finished {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

fn owned_by_us(dir: &Path) -> bool {
    let Ok(text) = fs::read_to_string(dir.join(MANIFEST)) else {
        return false;
    };
    serde_json::from_str::<Value>(&text)
        .ok()
        .and_then(|v| v.get("tool").and_then(Value::as_str).map(|t| t == TOOL))
        .unwrap_or(false)
}

fn replace_dir(staging: &Path, target: &Path) -> Result<()> {
    if target.exists() {
        let empty = target.is_dir() && fs::read_dir(target)?.next().is_none();
        if !(empty || target.is_dir() && owned_by_us(target)) {
            bail!(
                "refusing to overwrite {}: it exists and was not written by {TOOL}",
                target.display()
            );
        }
        fs::remove_dir_all(target).with_context(|| format!("removing old {}", target.display()))?;
    }
    fs::rename(staging, target).with_context(|| format!("moving results into {}", target.display()))?;
    Ok(())
}
