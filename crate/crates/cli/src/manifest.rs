//! Run manifest: which stages ran, from which config, and what they wrote.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::LoadedConfig;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Stages in pipeline order.
pub const STAGES: [&str; 5] = ["scale", "size", "optimize", "simulate", "report"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: StageStatus,
    /// Config digest the stage ran under.
    pub config_digest: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Relative to the output directory.
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    /// Digest of the most recent invocation.
    pub config_digest: String,
    /// `key=value` overrides of the most recent invocation.
    pub overrides: Vec<String>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn new(digest: &str, overrides: &[String]) -> Self {
        Self {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: digest.to_string(),
            overrides: overrides.to_vec(),
            stages: BTreeMap::new(),
        }
    }

    /// Reads the manifest of `dir`, or `None` when there is none.
    pub fn load(dir: &Path) -> Result<Option<Self>, CliError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::input(format!("malformed manifest {}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::internal(e.to_string()))?;
        text.push('\n');
        crate::write_file(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    /// Stages whose digest differs from `digest`.
    pub fn stale_stages(&self, digest: &str) -> Vec<String> {
        self.stages
            .iter()
            .filter(|(_, r)| r.config_digest != digest)
            .map(|(s, _)| s.clone())
            .collect()
    }
}

/// Seconds since the epoch, pinned by `SOURCE_DATE_EPOCH` when set.
pub fn timestamp() -> u64 {
    if let Some(v) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
    {
        return v;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// SHA-256 over the canonical config (output directory excluded) and the
/// bytes of every input file.
pub fn config_digest(config: &LoadedConfig) -> Result<String, CliError> {
    let mut canonical = config.canonical.clone();
    canonical.output_dir = Default::default();
    let json = serde_json::to_vec(&canonical).map_err(|e| CliError::internal(e.to_string()))?;
    let mut h = Sha256::new();
    h.update(b"config\0");
    h.update((json.len() as u64).to_le_bytes());
    h.update(&json);
    for (key, path) in config.resolved.input_files() {
        let bytes = std::fs::read(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        h.update(key.as_bytes());
        h.update(b"\0");
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stale_stages_are_listed() {
        let mut m = RunManifest::new("a", &[]);
        let rec = |d: &str| StageRecord {
            status: StageStatus::Ok,
            config_digest: d.into(),
            started_unix: 0,
            finished_unix: 0,
            outputs: vec![],
            message: None,
        };
        m.stages.insert("scale".into(), rec("a"));
        m.stages.insert("size".into(), rec("b"));
        assert_eq!(m.stale_stages("a"), vec!["size".to_string()]);
        assert!(m.stale_stages("c").len() == 2);
    }
}
