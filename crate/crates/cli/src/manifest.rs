use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Ok,
    Failed,
}

/// Record of one run: what was asked for, what was produced, and headline numbers.
/// Artifact paths are relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub method: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    /// Wall-clock seconds per pipeline stage.
    pub timings: BTreeMap<String, f64>,
    pub artifacts: BTreeMap<String, String>,
    pub summary: BTreeMap<String, Value>,
}

impl RunManifest {
    pub fn new(config_hash: String, seed: u64, method: &str) -> Self {
        Self {
            schema_version: crate::config::SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            seed,
            method: method.to_string(),
            status: Status::Running,
            error: None,
            failed_stage: None,
            timings: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn load(dir: &Path) -> Option<Self> {
        crate::io::read_json(&dir.join(MANIFEST_FILE)).ok()
    }

    pub fn save(&self, dir: &Path) -> crate::io::IoResult<()> {
        crate::io::write_json(&dir.join(MANIFEST_FILE), self)
    }

    /// Artifacts whose files are missing under `dir`.
    pub fn missing_artifacts(&self, dir: &Path) -> Vec<String> {
        self.artifacts
            .values()
            .filter(|p| !dir.join(p).exists())
            .cloned()
            .collect()
    }
}
