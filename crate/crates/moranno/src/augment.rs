//! Corpus augmentation: stretch a small labeled corpus with synthesized
//! utterances.
//!
//! The recipe: estimate the speaker's articulation parameters from the
//! labeled seed corpus, pseudo-label text-only transcripts through the
//! text-processing cascade, render those pseudo-labels with the fitted
//! parameters, and merge. The synthesized features are label-faithful by
//! construction — they are rendered *from* the pseudo-labels — so the pairs
//! are internally consistent even where the pseudo-labels disagree with
//! what a human would have annotated.

use serde::{Deserialize, Serialize};

use crate::cascade::{text_process, CascadeError, ResolutionPolicy};
use crate::label::{MoraInventory, TtsLabelSequence};
use crate::model::AcousticFeatures;
use crate::synth::articulate::{articulate, fit_speaker, MoraEmbeddings};
use crate::synth::lexicon::Lexicon;
use crate::synth::{SpeakerParams, SynthError};
use crate::util::derive_seed;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
}

/// Where a sample in an augmented corpus came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Original,
    Synthesized,
}

/// One sample of an augmented corpus.
#[derive(Debug, Clone)]
pub struct AugmentedSample {
    pub id: String,
    pub labels: TtsLabelSequence,
    pub feats: AcousticFeatures,
    pub source: SampleSource,
}

/// Augmentation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentConfig {
    /// Reading policy for pseudo-labeling the transcripts.
    pub policy: ResolutionPolicy,
    /// Seed for the synthesized features.
    pub seed: u64,
}

/// Result of augmentation, with the bookkeeping the caller reports.
#[derive(Debug)]
pub struct AugmentOutcome {
    pub samples: Vec<AugmentedSample>,
    pub fitted: SpeakerParams,
    pub n_original: usize,
    pub n_synthesized: usize,
    /// Synthesized samples dropped because their label string duplicated an
    /// earlier sample.
    pub n_deduped: usize,
}

/// Pseudo-label transcripts through text processing.
pub fn make_pseudo_labels(
    transcripts: &[String],
    lexicon: &Lexicon,
    inventory: &MoraInventory,
    policy: ResolutionPolicy,
) -> Result<Vec<TtsLabelSequence>, CascadeError> {
    transcripts
        .iter()
        .map(|t| Ok(text_process(t, lexicon, inventory, policy)?.labels))
        .collect()
}

/// Render pseudo-labels with the fitted speaker. Sample `i` uses a stream
/// derived from `(seed, "aug", i)`.
pub fn synthesize_pseudo(
    pseudo: &[TtsLabelSequence],
    embeddings: &MoraEmbeddings,
    fitted: &SpeakerParams,
    seed: u64,
) -> Result<Vec<AugmentedSample>, SynthError> {
    pseudo
        .iter()
        .enumerate()
        .map(|(i, labels)| {
            let feats = articulate(labels, embeddings, fitted, derive_seed(seed, "aug", i as u64))?;
            Ok(AugmentedSample {
                id: format!("aug-{i:06}"),
                labels: labels.clone(),
                feats,
                source: SampleSource::Synthesized,
            })
        })
        .collect()
}

/// Merge originals with synthesized samples; all feature widths must agree.
/// With `dedupe`, a synthesized sample whose label string already appeared
/// (in the originals or earlier synthesized samples) is dropped; the second
/// return value counts the drops.
pub fn merge(
    original: Vec<AugmentedSample>,
    synthesized: Vec<AugmentedSample>,
    dedupe: bool,
) -> Result<(Vec<AugmentedSample>, usize), SynthError> {
    let mut out = Vec::with_capacity(original.len() + synthesized.len());
    let mut seen = std::collections::BTreeSet::new();
    let mut dim: Option<usize> = None;
    let mut n_deduped = 0usize;
    for s in original {
        if let Some(d) = dim {
            if s.feats.dim() != d {
                return Err(SynthError::DimMismatch {
                    expected: d,
                    got: s.feats.dim(),
                });
            }
        } else {
            dim = Some(s.feats.dim());
        }
        if dedupe {
            seen.insert(s.labels.serialize_label_string());
        }
        out.push(s);
    }
    for s in synthesized {
        if let Some(d) = dim {
            if s.feats.dim() != d {
                return Err(SynthError::DimMismatch {
                    expected: d,
                    got: s.feats.dim(),
                });
            }
        } else {
            dim = Some(s.feats.dim());
        }
        if !dedupe || seen.insert(s.labels.serialize_label_string()) {
            out.push(s);
        } else {
            n_deduped += 1;
        }
    }
    Ok((out, n_deduped))
}

/// The full pipeline: fit the speaker on the labeled seed corpus,
/// pseudo-label and render the transcripts, merge.
pub fn augment_dataset(
    labeled: &[(String, TtsLabelSequence, AcousticFeatures)],
    transcripts: &[String],
    lexicon: &Lexicon,
    inventory: &MoraInventory,
    cfg: &AugmentConfig,
) -> Result<AugmentOutcome, AugmentError> {
    let fit_input: Vec<(TtsLabelSequence, AcousticFeatures)> = labeled
        .iter()
        .map(|(_, l, f)| (l.clone(), f.clone()))
        .collect();
    let fitted = fit_speaker(&fit_input)?;
    let embeddings = MoraEmbeddings::derive(inventory);
    let pseudo = make_pseudo_labels(transcripts, lexicon, inventory, cfg.policy)?;
    let synthesized = synthesize_pseudo(&pseudo, &embeddings, &fitted, cfg.seed)?;
    let n_synthesized = synthesized.len();
    let original: Vec<AugmentedSample> = labeled
        .iter()
        .map(|(id, labels, feats)| AugmentedSample {
            id: id.clone(),
            labels: labels.clone(),
            feats: feats.clone(),
            source: SampleSource::Original,
        })
        .collect();
    let n_original = original.len();
    let (samples, n_deduped) = merge(original, synthesized, true)?;
    Ok(AugmentOutcome {
        samples,
        fitted,
        n_original,
        n_synthesized: n_synthesized - n_deduped,
        n_deduped,
    })
}
