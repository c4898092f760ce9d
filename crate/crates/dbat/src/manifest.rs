//! Run manifests: everything needed to repeat a run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RunError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Run,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: Command,
    /// Resolved configuration, defaults included, as config-file strings.
    pub config: BTreeMap<String, String>,
    pub artifact_versions: BTreeMap<String, String>,
    pub seed: u64,
    pub wall_time_seconds: f64,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

pub fn artifact_versions() -> BTreeMap<String, String> {
    [
        ("dbat", env!("CARGO_PKG_VERSION").to_string()),
        ("dbat-core", env!("CARGO_PKG_VERSION").to_string()),
        ("model_format", dbat_core::models::MODEL_FORMAT_VERSION.to_string()),
        ("manifest_format", "1".to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| RunError::config(Some(e.line()), format!("manifest: {e}")))
    }
}

/// True when `text` looks like a JSON manifest rather than key=value text.
pub fn is_manifest(text: &str) -> bool {
    text.trim_start().starts_with('{')
}
