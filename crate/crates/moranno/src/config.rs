//! On-disk TOML configuration for the command-line tool.
//!
//! One file drives a whole run: lexicon and corpus shape, speaker voice,
//! model dimensions, and training schedule, one section each. Every field
//! has a default, so a config file may state only what it changes — an
//! empty file is the default recipe.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::train::TrainConfig;
use crate::model::{ModelConfig, ModelError};
use crate::synth::corpus::CorpusConfig;
use crate::synth::lexicon::LexiconConfig;
use crate::synth::{SpeakerParams, SynthError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Every knob the tool reads, one section per pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Base seed; per-phase streams are derived from it, so one value
    /// pins the whole run.
    pub seed: u64,
    pub lexicon: LexiconConfig,
    pub corpus: CorpusConfig,
    pub speaker: SpeakerParams,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            lexicon: LexiconConfig::default(),
            corpus: CorpusConfig::default(),
            speaker: SpeakerParams::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        let text =
            toml::to_string_pretty(self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Cross-check every section the way its consumer would.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.lexicon.validate()?;
        self.corpus.validate()?;
        self.speaker.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }
}
