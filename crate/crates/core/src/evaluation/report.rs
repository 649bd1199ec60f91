use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::sweep::StabilityCurve;
use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";
pub const CURVE_COLUMNS: [&str; 5] = [
    "sweep_value",
    "same_mean",
    "same_std",
    "diff_mean",
    "diff_std",
];

/// JSON Schema (draft 2020-12) for `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("report.schema.json");

/// SHA-256 of the compact JSON form of `config`, hex encoded. Object keys
/// are sorted, so the hash does not depend on field order.
pub fn config_hash(config: &impl Serialize) -> Result<String> {
    let value = serde_json::to_value(config)?;
    let digest = Sha256::digest(serde_json::to_string(&value)?.as_bytes());
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricEntry {
    pub config_hash: String,
    pub value: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub schema_version: u32,
    pub run_id: String,
    pub seed: u64,
    pub preset: String,
    pub config_hash: String,
    pub metrics: BTreeMap<String, MetricEntry>,
    pub curves: Vec<StabilityCurve>,
    pub artifacts: Vec<String>,
}

impl EvalReport {
    pub fn new(
        run_id: impl Into<String>,
        seed: u64,
        preset: impl Into<String>,
        config: &impl Serialize,
    ) -> Result<EvalReport> {
        Ok(EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            run_id: run_id.into(),
            seed,
            preset: preset.into(),
            config_hash: config_hash(config)?,
            metrics: BTreeMap::new(),
            curves: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    /// Record a metric tagged with this report's config hash.
    pub fn insert(&mut self, name: impl Into<String>, value: &impl Serialize) -> Result<()> {
        let value = serde_json::to_value(value)?;
        self.metrics.insert(
            name.into(),
            MetricEntry {
                config_hash: self.config_hash.clone(),
                value,
            },
        );
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<EvalReport> {
        let r: EvalReport = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("unreadable report: {e}")))?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported report schema version {}",
                r.schema_version
            )));
        }
        Ok(r)
    }
}

/// CSV rows in [`CURVE_COLUMNS`] order, one per grid value. Numbers use the
/// shortest representation that parses back to the same `f64`.
pub fn curve_csv(curve: &StabilityCurve) -> String {
    let mut out = CURVE_COLUMNS.join(",");
    out.push('\n');
    for i in 0..curve.sweep_values.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            curve.sweep_values[i],
            curve.same_mean[i],
            curve.same_std[i],
            curve.diff_mean[i],
            curve.diff_std[i]
        );
    }
    out
}

/// File name of curve `index`.
pub fn curve_file_name(index: usize, curve: &StabilityCurve) -> String {
    let dof: String = curve
        .dof
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect();
    format!("curve_{index}_{dof}.csv")
}

/// Write `report.json` and one CSV per curve into `dir`; returns the paths
/// written, report first.
pub fn emit_report(report: &EvalReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(1 + report.curves.len());
    let path = dir.join(REPORT_FILE);
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    for (i, c) in report.curves.iter().enumerate() {
        let path = dir.join(curve_file_name(i, c));
        std::fs::write(&path, curve_csv(c)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
