//! A small synthetic speech world with a closed-form ground truth.
//!
//! The world generates everything the annotator consumes: a lexicon of
//! words (some prosodically ambiguous), corpora of labeled utterances, and
//! per-utterance acoustic feature matrices rendered from the labels by a
//! parametric articulation model. Because articulation is invertible at
//! zero noise, every generated sample carries a provably correct label
//! sequence, and estimation code can be tested against known parameters.

pub mod articulate;
pub mod asr;
pub mod corpus;
pub mod lexicon;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::LabelError;

/// Errors from the synthetic world.
#[derive(Debug, Error)]
pub enum SynthError {
    /// A probability or weight outside its valid range.
    #[error("invalid rate: {0}")]
    InvalidRate(String),
    /// Not enough data to estimate speaker parameters.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// Feature matrices with incompatible widths.
    #[error("feature dim mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    /// A lexicon with nothing in it, or one that cannot satisfy the
    /// requested shape.
    #[error("lexicon generation failed: {0}")]
    LexiconShape(String),
    /// Features that do not segment or decode back to labels.
    #[error("features do not decode: {0}")]
    Undecodable(String),
    /// A mora with no embedding (not in the inventory the embeddings were
    /// derived from).
    #[error("no embedding for mora {0:?}")]
    UnknownMora(String),
    /// An operation that needs a non-empty input.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// Persisted world files that do not parse.
    #[error("malformed file: {0}")]
    Malformed(String),
}

/// Parameters of the articulation model: how one speaker turns labels into
/// feature frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeakerParams {
    /// Pitch level at utterance start and after each phrase boundary.
    pub pitch_base: f64,
    /// Pitch level step added after a rise-marked mora.
    pub rise_delta: f64,
    /// Pitch level step subtracted after a fall-marked mora.
    pub fall_delta: f64,
    /// Frames per mora are drawn uniformly from this inclusive range.
    pub tempo_min: u32,
    pub tempo_max: u32,
    /// Standard deviation of Gaussian noise added to every channel.
    pub noise_sigma: f64,
}

impl Default for SpeakerParams {
    fn default() -> Self {
        SpeakerParams {
            pitch_base: 1.0,
            rise_delta: 0.6,
            fall_delta: 0.5,
            tempo_min: 2,
            tempo_max: 5,
            noise_sigma: 0.0,
        }
    }
}

impl SpeakerParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.tempo_min < 2 || self.tempo_max < self.tempo_min {
            return Err(SynthError::InvalidRate(format!(
                "tempo range [{}, {}] must satisfy 2 <= min <= max",
                self.tempo_min, self.tempo_max
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(SynthError::InvalidRate(
                "noise_sigma must be finite and >= 0".into(),
            ));
        }
        for (name, v) in [
            ("pitch_base", self.pitch_base),
            ("rise_delta", self.rise_delta),
            ("fall_delta", self.fall_delta),
        ] {
            if !v.is_finite() {
                return Err(SynthError::InvalidRate(format!("{name} must be finite")));
            }
        }
        if self.rise_delta <= 0.0 || self.fall_delta <= 0.0 {
            return Err(SynthError::InvalidRate(
                "rise_delta and fall_delta must be positive".into(),
            ));
        }
        Ok(())
    }
}
