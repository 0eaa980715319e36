//! Run reports: itemized stage outputs, check outcomes and a content hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::Result;
use crate::io::write_atomic;

pub const SCHEMA: &str = "fraclab-report/1";

/// One pass/fail decision with its measured value and threshold.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub required: bool,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

/// Library constants that enter pass/fail decisions.
#[derive(Debug, Clone, Serialize)]
pub struct Constants {
    pub slack_constant: f64,
    pub ratio_guard: f64,
    pub gram_condition_limit: f64,
    pub decay_c3: f64,
    pub annulus_rho_nodes: usize,
    pub rectangle_samples: usize,
    pub stagnation_window: usize,
}

impl Default for Constants {
    fn default() -> Self {
        use crate::checks::*;
        Self {
            slack_constant: SLACK_CONSTANT,
            ratio_guard: RATIO_GUARD,
            gram_condition_limit: GRAM_CONDITION_LIMIT,
            decay_c3: DECAY_C3,
            annulus_rho_nodes: ANNULUS_RHO_NODES,
            rectangle_samples: RECTANGLE_SAMPLES,
            stagnation_window: crate::solver::STAGNATION_WINDOW,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub command: String,
    pub versions: BTreeMap<String, String>,
    pub seed: u64,
    pub config: RunConfig,
    pub constants: Constants,
    pub calibration: BTreeMap<String, f64>,
    pub stages: BTreeMap<String, Value>,
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
    /// SHA-256 of the report with `hash` and `timings` removed.
    pub hash: String,
    /// Wall-clock seconds per stage; excluded from the hash.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(config: &RunConfig) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("fraclab".to_string(), env!("CARGO_PKG_VERSION").to_string());
        Self {
            schema: SCHEMA,
            command: config.command.clone(),
            versions,
            seed: config.seed,
            config: config.clone(),
            constants: Constants::default(),
            calibration: BTreeMap::new(),
            stages: BTreeMap::new(),
            checks: Vec::new(),
            passed: true,
            hash: String::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn stage(&mut self, name: &str, value: impl Serialize) -> Result<()> {
        self.stages.insert(name.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, value: f64, threshold: f64, detail: impl Into<String>) {
        let name = name.into();
        let required = self.config.is_required(&name);
        self.checks.push(CheckOutcome { name, required, passed, value, threshold, detail: detail.into() });
    }

    pub fn find(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Sets `passed` and `hash`.
    pub fn finalize(&mut self) -> Result<()> {
        self.passed = self.checks.iter().all(|c| c.passed || !c.required);
        self.hash = content_hash(self)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }
}

/// Hash of the canonical JSON form with `hash` and `timings` removed.
pub fn content_hash(report: &RunReport) -> Result<String> {
    let mut v = serde_json::to_value(report)?;
    if let Value::Object(m) = &mut v {
        m.remove("hash");
        m.remove("timings");
    }
    let bytes = serde_json::to_vec(&v)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Output directory with atomic writes of named artifacts.
#[derive(Debug, Clone)]
pub struct ArtifactDir {
    root: PathBuf,
    pub written: Vec<PathBuf>,
}

impl ArtifactDir {
    pub fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.root.join(name);
        write_atomic(&p, bytes)?;
        self.written.push(p.clone());
        Ok(p)
    }

    /// CSV from a header and rows of numbers.
    pub fn write_table(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| crate::Error::Data(e.to_string()))?;
        self.write(name, &bytes)
    }
}
