//! moranno — audio-conditioned phonemic and prosodic label annotation for
//! TTS corpora.
//!
//! The crate covers the full experimental loop around a sequence-to-sequence
//! annotator that transcribes acoustic features into mixed label sequences
//! (mora tokens interleaved with prosody symbols):
//!
//! * [`label`] — label sequences, parsing, validation.
//! * [`vocab`] — deterministic token/id vocabulary and strict codec.
//! * [`metrics`] — edit distance, CER, prosody F1, and the multi-system
//!   evaluation protocol with phoneme-exact filtering.
//! * [`model`] — the from-scratch encoder-decoder transformer: training with
//!   Adam and a warmup/decay schedule, greedy/beam decoding, checkpoints.
//! * [`synth`] — a synthetic mora language: lexicon sampling, corpus
//!   generation, feature articulation and its exact inverse, speaker fitting,
//!   and an ASR error surrogate.
//! * [`cascade`] — the text-only baseline: recognition surrogate plus
//!   dictionary lookup with prior-based homograph resolution.
//! * [`augment`] — TTS-based data augmentation: pseudo labels on unlabeled
//!   text, synthesized features, merged training sets.
//! * [`cli`] — the `moranno` command-line orchestrator.
//!
//! Everything downstream of a seed is deterministic: reruns with the same
//! configuration produce byte-identical corpora, checkpoints, and reports.

pub mod augment;
pub mod cascade;
pub mod cli;
pub mod config;
pub mod experiments;
pub mod manifest;
pub mod label;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod util;
pub mod vocab;
