//! Reproducibility manifest written beside every artifact-producing run.
//!
//! The manifest records what produced the artifacts: tool version, the
//! subcommand, the full resolved config, and the files written. Data
//! artifacts themselves are pure functions of the config, so a rerun from
//! the manifest's config reproduces them byte for byte; the manifest is
//! the one file that carries wall-clock state and is excluded from that
//! guarantee.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Crate version that produced the run.
    pub tool_version: String,
    /// Subcommand name, e.g. `gen` or `train`.
    pub command: String,
    /// Full resolved configuration, defaults included.
    pub config: RunConfig,
    /// Paths read (data directories, checkpoints, transcript files).
    #[serde(default)]
    pub inputs: Vec<String>,
    /// Paths written, relative to the manifest's directory.
    pub outputs: Vec<String>,
    /// Command-specific facts (sample counts, policies, fitted values).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
    /// Wall-clock start, milliseconds since the Unix epoch.
    pub started_unix_ms: u64,
    /// Run duration in milliseconds.
    pub wall_ms: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: RunConfig) -> Self {
        let started_unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            extra: BTreeMap::new(),
            started_unix_ms,
            wall_ms: 0,
        }
    }

    /// Record the files written and close out the duration.
    pub fn finish(&mut self, outputs: Vec<String>) {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        self.wall_ms = now.saturating_sub(self.started_unix_ms);
        self.outputs = outputs;
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| ConfigError::Parse(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_and_records_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let mut m = RunManifest::new("gen", RunConfig::default());
        m.inputs.push("run.toml".into());
        m.extra.insert("n_labeled".into(), "200".into());
        m.finish(vec!["lexicon.json".into(), "train.jsonl".into()]);
        m.save(&path).unwrap();
        let back = RunManifest::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.command, "gen");
        assert_eq!(back.tool_version, env!("CARGO_PKG_VERSION"));
        assert_eq!(back.outputs.len(), 2);
    }
}
