//! Scripted end-to-end studies.
//!
//! Two self-contained drivers, each a pure function of its config:
//!
//! * [`run_homograph_experiment`] — does audio conditioning resolve homograph
//!   readings that a text-only pipeline must guess? Trains an annotator on a
//!   synthetic corpus, then scores it against the text pipeline run on clean
//!   and on ASR-corrupted transcripts.
//! * [`run_augment_experiment`] — does synthesizing features for unlabeled
//!   transcripts help a small labeled set? Trains a baseline on the labeled
//!   seed alone and a second model on seed + synthesized data, same recipe.
//!
//! Everything downstream of the config is deterministic: phase seeds are
//! derived from the experiment seed, and both drivers produce identical
//! reports (wall time aside) when rerun with the same config.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::augment::{augment_dataset, AugmentConfig, AugmentError};
use crate::cascade::{cascade_annotate, text_process, CascadeError, ResolutionPolicy};
use crate::label::{MoraInventory, TtsLabelSequence};
use crate::metrics::{default_excluded, evaluation_protocol, EvalReport, MetricError};
use crate::model::decode::{annotate, DecodeMode};
use crate::model::train::{train, TrainConfig, TrainPair};
use crate::model::{init_model, AcousticFeatures, AnnotatorModel, ModelConfig, ModelError};
use crate::synth::articulate::MoraEmbeddings;
use crate::synth::corpus::{gen_corpus, utterance_features, CorpusConfig, Utterance};
use crate::synth::lexicon::{gen_lexicon, Lexicon, LexiconConfig};
use crate::synth::{SpeakerParams, SynthError};
use crate::util::derive_seed;
use crate::vocab::{encode, VocabError, Vocabulary};

/// System name for the audio-conditioned annotator.
pub const SYS_ANNOTATOR: &str = "annotator";
/// System name for the text pipeline on clean transcripts.
pub const SYS_PIPELINE_CLEAN: &str = "pipeline-clean";
/// System name for the text pipeline behind the ASR surrogate.
pub const SYS_PIPELINE_ASR: &str = "pipeline-asr";
/// System name for the model trained on the labeled seed only.
pub const SYS_BASELINE: &str = "baseline";
/// System name for the model trained on seed + synthesized data.
pub const SYS_AUGMENTED: &str = "augmented";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    /// The config asks for something the pieces cannot deliver.
    #[error("experiment setup: {0}")]
    Setup(String),
}

/// Config for the homograph-disambiguation comparison.
///
/// The experiment seed drives lexicon, corpus, model init, and the ASR
/// surrogate through derived per-phase seeds; batching randomness stays
/// under `train.seed` so the training recipe is a self-contained config.
#[derive(Debug, Clone)]
pub struct HomographExperimentConfig {
    pub lexicon: LexiconConfig,
    pub corpus: CorpusConfig,
    pub speaker: SpeakerParams,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Reading policy for the text pipeline systems.
    pub policy: ResolutionPolicy,
    /// Word corruption rate for the ASR-surrogate system.
    pub asr_err_rate: f64,
    pub decode: DecodeMode,
    pub seed: u64,
}

impl Default for HomographExperimentConfig {
    fn default() -> Self {
        HomographExperimentConfig {
            lexicon: LexiconConfig::default(),
            corpus: CorpusConfig::default(),
            speaker: SpeakerParams {
                noise_sigma: 0.08,
                ..SpeakerParams::default()
            },
            model: ModelConfig::default(),
            train: TrainConfig {
                steps: 20000,
                eval_every: 400,
                ..TrainConfig::default()
            },
            policy: ResolutionPolicy::MajorityPrior,
            asr_err_rate: 0.05,
            decode: DecodeMode::Greedy,
            seed: 1,
        }
    }
}

/// Reading accuracy over homograph word instances for one system.
///
/// An instance is one occurrence of a homograph word in a test utterance
/// from the all-system phoneme-exact subset. It counts as correct when the
/// hypothesis prosody matches the reference over the word's mora span,
/// excluding the word-final mora (which carries utterance punctuation —
/// pause, boundary, question — rather than the reading).
#[derive(Debug, Clone, Serialize)]
pub struct HomographAccuracy {
    pub system: String,
    pub n_correct: usize,
    pub n_instances: usize,
    pub accuracy: f64,
}

/// Everything the homograph experiment measured.
#[derive(Debug, Serialize)]
pub struct HomographReport {
    pub eval: EvalReport,
    pub homograph: Vec<HomographAccuracy>,
    /// Homograph word instances in the scored subset (same for every system).
    pub n_homograph_instances: usize,
    /// Words the ASR surrogate swapped across the test split.
    pub n_asr_corrupted: usize,
    /// Test utterances whose decoded ids needed grammar repair.
    pub n_annotator_repaired: usize,
    /// Fallback spellings in the clean text pipeline (0 when every test
    /// word is in the lexicon, as corpus-generated text guarantees).
    pub n_fallback: usize,
    pub best_step: usize,
    pub best_val_loss: f64,
    pub model_params: usize,
    pub wall_ms: u64,
}

/// Config for the synthesized-data augmentation study.
///
/// The corpus train split supplies both datasets: the first `n_labeled`
/// utterances act as the labeled seed (labels and features), the next
/// `n_text_only` contribute transcripts only.
#[derive(Debug, Clone)]
pub struct AugmentExperimentConfig {
    pub lexicon: LexiconConfig,
    pub corpus: CorpusConfig,
    pub speaker: SpeakerParams,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Reading policy for pseudo-labeling the transcripts.
    pub policy: ResolutionPolicy,
    pub n_labeled: usize,
    pub n_text_only: usize,
    pub decode: DecodeMode,
    pub seed: u64,
}

impl Default for AugmentExperimentConfig {
    fn default() -> Self {
        AugmentExperimentConfig {
            lexicon: LexiconConfig::default(),
            // Two-word utterances at a fixed tempo keep feature/label
            // alignment learnable from the 200-utterance seed, so the
            // baseline lands a phoneme-exact subset large enough for the
            // prosody comparison to mean something.
            corpus: CorpusConfig {
                n_train: 2200,
                words_max: 2,
                ..CorpusConfig::default()
            },
            speaker: SpeakerParams {
                tempo_min: 3,
                tempo_max: 3,
                noise_sigma: 0.02,
                ..SpeakerParams::default()
            },
            model: ModelConfig::default(),
            train: TrainConfig {
                steps: 14000,
                eval_every: 400,
                ..TrainConfig::default()
            },
            policy: ResolutionPolicy::MajorityPrior,
            n_labeled: 200,
            n_text_only: 2000,
            decode: DecodeMode::Greedy,
            seed: 1,
        }
    }
}

/// Everything the augmentation study measured. `eval.systems` holds the
/// baseline first, the augmented model second.
#[derive(Debug, Serialize)]
pub struct AugmentReport {
    pub eval: EvalReport,
    /// `(cer_baseline - cer_augmented) / cer_baseline`, micro CER; 0 when
    /// the baseline is already perfect.
    pub cer_rel_reduction: f64,
    /// Speaker parameters recovered from the labeled seed.
    pub fitted: SpeakerParams,
    pub n_labeled: usize,
    pub n_text_only: usize,
    /// Synthesized samples kept after label-level dedup.
    pub n_synthesized: usize,
    pub n_deduped: usize,
    pub baseline_best_val: f64,
    pub augmented_best_val: f64,
    pub wall_ms: u64,
}

impl HomographReport {
    /// Human-readable summary: ranked system table, then reading accuracy.
    pub fn render_text(&self) -> String {
        let mut out = self.eval.render_text();
        out.push_str(&format!(
            "\nhomograph reading accuracy ({} instances on the {}-utterance subset):\n",
            self.n_homograph_instances, self.eval.n_phoneme_exact_all_models
        ));
        for a in &self.homograph {
            out.push_str(&format!(
                "  {:<16} {:.4}  ({}/{})\n",
                a.system, a.accuracy, a.n_correct, a.n_instances
            ));
        }
        out.push_str(&format!(
            "asr-corrupted words: {}\nrepaired decodes: {}\nbest step: {} (val loss {:.4})\nmodel parameters: {}\nwall: {} ms\n",
            self.n_asr_corrupted,
            self.n_annotator_repaired,
            self.best_step,
            self.best_val_loss,
            self.model_params,
            self.wall_ms
        ));
        out
    }
}

impl AugmentReport {
    /// Human-readable summary of the baseline-vs-augmented comparison.
    pub fn render_text(&self) -> String {
        let mut out = self.eval.render_text();
        out.push_str(&format!(
            "\nrelative CER reduction: {:.1}%\nlabeled seed: {}  text-only: {}  synthesized kept: {}  deduped: {}\nfitted voice: pitch_base {:.3}, rise {:.3}, fall {:.3}, tempo {}..={}, noise {:.3}\nbest val loss: baseline {:.4}, augmented {:.4}\nwall: {} ms\n",
            100.0 * self.cer_rel_reduction,
            self.n_labeled,
            self.n_text_only,
            self.n_synthesized,
            self.n_deduped,
            self.fitted.pitch_base,
            self.fitted.rise_delta,
            self.fitted.fall_delta,
            self.fitted.tempo_min,
            self.fitted.tempo_max,
            self.fitted.noise_sigma,
            self.baseline_best_val,
            self.augmented_best_val,
            self.wall_ms
        ));
        out
    }
}

/// Features + encoded target for each utterance, features regenerated from
/// the utterance's own seed.
fn make_pairs(
    utts: &[Utterance],
    embeddings: &MoraEmbeddings,
    speaker: &SpeakerParams,
    vocab: &Vocabulary,
) -> Result<Vec<TrainPair>, ExperimentError> {
    utts.iter()
        .map(|u| {
            let feats = utterance_features(u, embeddings, speaker)?;
            let target_ids = encode(&u.labels, vocab)?;
            Ok(TrainPair { feats, target_ids })
        })
        .collect()
}

/// Annotate a split; returns the hypotheses in order plus how many needed
/// grammar repair.
fn annotate_split(
    model: &AnnotatorModel,
    utts: &[Utterance],
    embeddings: &MoraEmbeddings,
    speaker: &SpeakerParams,
    mode: DecodeMode,
) -> Result<(Vec<TtsLabelSequence>, usize), ExperimentError> {
    let mut hyps = Vec::with_capacity(utts.len());
    let mut n_repaired = 0usize;
    for u in utts {
        let feats = utterance_features(u, embeddings, speaker)?;
        let ann = annotate(model, &feats, mode)?;
        n_repaired += usize::from(ann.repaired);
        hyps.push(ann.labels);
    }
    Ok((hyps, n_repaired))
}

/// Mora spans `(start, len)` of homograph word instances in an utterance,
/// recovered from its transcript.
fn homograph_spans(
    grapheme: &str,
    lexicon: &Lexicon,
) -> Result<Vec<(usize, usize)>, ExperimentError> {
    let mut spans = Vec::new();
    let mut offset = 0usize;
    for word in grapheme.split_whitespace() {
        let entry = lexicon.get(word).ok_or_else(|| {
            ExperimentError::Setup(format!("transcript word `{word}` is not in the lexicon"))
        })?;
        if entry.is_homograph() {
            spans.push((offset, entry.moras.len()));
        }
        offset += entry.moras.len();
    }
    Ok(spans)
}

/// Per-system homograph reading accuracy on the subset of test indices
/// where every system was phoneme-exact (so prosody aligns by position).
fn homograph_accuracy(
    references: &[TtsLabelSequence],
    systems: &[(String, Vec<TtsLabelSequence>)],
    test: &[Utterance],
    lexicon: &Lexicon,
) -> Result<(Vec<HomographAccuracy>, usize), ExperimentError> {
    let subset: Vec<usize> = (0..references.len())
        .filter(|&i| {
            systems
                .iter()
                .all(|(_, hyps)| hyps[i].strip_prosody() == references[i].strip_prosody())
        })
        .collect();
    let mut out = Vec::with_capacity(systems.len());
    let mut n_instances_total = 0usize;
    for (name, hyps) in systems {
        let mut n_correct = 0usize;
        let mut n_instances = 0usize;
        for &i in &subset {
            let ref_pros = references[i].prosody();
            let hyp_pros = hyps[i].prosody();
            for (start, len) in homograph_spans(&test[i].grapheme, lexicon)? {
                n_instances += 1;
                // The word-final mora carries utterance punctuation, not the
                // reading, so it stays out of the comparison.
                let end = start + len - 1;
                if ref_pros[start..end] == hyp_pros[start..end] {
                    n_correct += 1;
                }
            }
        }
        n_instances_total = n_instances;
        let accuracy = if n_instances == 0 {
            1.0
        } else {
            n_correct as f64 / n_instances as f64
        };
        out.push(HomographAccuracy {
            system: name.clone(),
            n_correct,
            n_instances,
            accuracy,
        });
    }
    Ok((out, n_instances_total))
}

/// Train an annotator on synthetic audio and score it against the text
/// pipeline on clean and ASR-corrupted transcripts of the same test split.
pub fn run_homograph_experiment(
    cfg: &HomographExperimentConfig,
) -> Result<HomographReport, ExperimentError> {
    let t0 = Instant::now();
    cfg.speaker.validate()?;
    if !(0.0..=1.0).contains(&cfg.asr_err_rate) {
        return Err(ExperimentError::Setup(format!(
            "asr_err_rate {} outside [0, 1]",
            cfg.asr_err_rate
        )));
    }

    let inventory = MoraInventory::default_cv();
    let lexicon = gen_lexicon(&cfg.lexicon, &inventory, derive_seed(cfg.seed, "lexicon", 0))?;
    let corpus = gen_corpus(&lexicon, &cfg.corpus, derive_seed(cfg.seed, "corpus", 0))?;
    let embeddings = MoraEmbeddings::derive(&inventory);
    let vocab = Vocabulary::for_inventory(&inventory)?;

    let train_pairs = make_pairs(&corpus.train, &embeddings, &cfg.speaker, &vocab)?;
    let val_pairs = make_pairs(&corpus.val, &embeddings, &cfg.speaker, &vocab)?;
    let model = init_model(cfg.model, vocab, derive_seed(cfg.seed, "init", 0))?;
    let model_params = model.n_params();
    let trained = train(model, &train_pairs, &val_pairs, &cfg.train)?;

    let (annotated, n_annotator_repaired) = annotate_split(
        &trained.model,
        &corpus.test,
        &embeddings,
        &cfg.speaker,
        cfg.decode,
    )?;

    let mut clean = Vec::with_capacity(corpus.test.len());
    let mut n_fallback = 0usize;
    for u in &corpus.test {
        let out = text_process(&u.grapheme, &lexicon, &inventory, cfg.policy)?;
        n_fallback += out.n_fallback;
        clean.push(out.labels);
    }

    let mut asr_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "asr", 0));
    let mut asr = Vec::with_capacity(corpus.test.len());
    let mut n_asr_corrupted = 0usize;
    for u in &corpus.test {
        let (labels, stats) = cascade_annotate(
            &u.grapheme,
            &lexicon,
            &inventory,
            cfg.policy,
            cfg.asr_err_rate,
            &mut asr_rng,
        )?;
        n_asr_corrupted += stats.n_corrupted;
        asr.push(labels);
    }

    let references: Vec<TtsLabelSequence> = corpus.test.iter().map(|u| u.labels.clone()).collect();
    let systems = vec![
        (SYS_ANNOTATOR.to_string(), annotated),
        (SYS_PIPELINE_CLEAN.to_string(), clean),
        (SYS_PIPELINE_ASR.to_string(), asr),
    ];
    let eval = evaluation_protocol(&references, &systems, &default_excluded())?;
    let (homograph, n_homograph_instances) =
        homograph_accuracy(&references, &systems, &corpus.test, &lexicon)?;

    Ok(HomographReport {
        eval,
        homograph,
        n_homograph_instances,
        n_asr_corrupted,
        n_annotator_repaired,
        n_fallback,
        best_step: trained.best_step,
        best_val_loss: trained.best_val_loss,
        model_params,
        wall_ms: t0.elapsed().as_millis() as u64,
    })
}

/// Train a baseline on a small labeled seed and a second model on the seed
/// plus synthesized features for text-only transcripts; score both.
pub fn run_augment_experiment(
    cfg: &AugmentExperimentConfig,
) -> Result<AugmentReport, ExperimentError> {
    let t0 = Instant::now();
    cfg.speaker.validate()?;
    if cfg.n_labeled == 0 || cfg.n_text_only == 0 {
        return Err(ExperimentError::Setup(
            "n_labeled and n_text_only must both be > 0".into(),
        ));
    }
    if cfg.corpus.n_train < cfg.n_labeled + cfg.n_text_only {
        return Err(ExperimentError::Setup(format!(
            "train split of {} cannot supply {} labeled + {} text-only utterances",
            cfg.corpus.n_train, cfg.n_labeled, cfg.n_text_only
        )));
    }

    let inventory = MoraInventory::default_cv();
    let lexicon = gen_lexicon(&cfg.lexicon, &inventory, derive_seed(cfg.seed, "lexicon", 0))?;
    let corpus = gen_corpus(&lexicon, &cfg.corpus, derive_seed(cfg.seed, "corpus", 0))?;
    let embeddings = MoraEmbeddings::derive(&inventory);
    let vocab = Vocabulary::for_inventory(&inventory)?;

    let labeled: Vec<(String, TtsLabelSequence, AcousticFeatures)> = corpus.train
        [..cfg.n_labeled]
        .iter()
        .map(|u| {
            let feats = utterance_features(u, &embeddings, &cfg.speaker)?;
            Ok((u.id.clone(), u.labels.clone(), feats))
        })
        .collect::<Result<_, ExperimentError>>()?;
    let transcripts: Vec<String> = corpus.train[cfg.n_labeled..cfg.n_labeled + cfg.n_text_only]
        .iter()
        .map(|u| u.grapheme.clone())
        .collect();

    let outcome = augment_dataset(
        &labeled,
        &transcripts,
        &lexicon,
        &inventory,
        &AugmentConfig {
            policy: cfg.policy,
            seed: derive_seed(cfg.seed, "augment", 0),
        },
    )?;

    let baseline_pairs: Vec<TrainPair> = labeled
        .iter()
        .map(|(_, labels, feats)| {
            Ok(TrainPair {
                feats: feats.clone(),
                target_ids: encode(labels, &vocab)?,
            })
        })
        .collect::<Result<_, ExperimentError>>()?;
    let augmented_pairs: Vec<TrainPair> = outcome
        .samples
        .iter()
        .map(|s| {
            Ok(TrainPair {
                feats: s.feats.clone(),
                target_ids: encode(&s.labels, &vocab)?,
            })
        })
        .collect::<Result<_, ExperimentError>>()?;
    let val_pairs = make_pairs(&corpus.val, &embeddings, &cfg.speaker, &vocab)?;

    // Same init for both models so the comparison isolates the data.
    let init_seed = derive_seed(cfg.seed, "init", 0);
    let baseline_model = init_model(cfg.model, vocab.clone(), init_seed)?;
    let augmented_model = init_model(cfg.model, vocab, init_seed)?;
    let baseline = train(baseline_model, &baseline_pairs, &val_pairs, &cfg.train)?;
    let augmented = train(augmented_model, &augmented_pairs, &val_pairs, &cfg.train)?;

    let (baseline_hyps, _) = annotate_split(
        &baseline.model,
        &corpus.test,
        &embeddings,
        &cfg.speaker,
        cfg.decode,
    )?;
    let (augmented_hyps, _) = annotate_split(
        &augmented.model,
        &corpus.test,
        &embeddings,
        &cfg.speaker,
        cfg.decode,
    )?;

    let references: Vec<TtsLabelSequence> = corpus.test.iter().map(|u| u.labels.clone()).collect();
    let systems = vec![
        (SYS_BASELINE.to_string(), baseline_hyps),
        (SYS_AUGMENTED.to_string(), augmented_hyps),
    ];
    let eval = evaluation_protocol(&references, &systems, &default_excluded())?;

    let cer_baseline = eval.systems[0].cer_micro;
    let cer_augmented = eval.systems[1].cer_micro;
    let cer_rel_reduction = if cer_baseline > 0.0 {
        (cer_baseline - cer_augmented) / cer_baseline
    } else {
        0.0
    };

    Ok(AugmentReport {
        eval,
        cer_rel_reduction,
        fitted: outcome.fitted,
        n_labeled: cfg.n_labeled,
        n_text_only: cfg.n_text_only,
        n_synthesized: outcome.n_synthesized,
        n_deduped: outcome.n_deduped,
        baseline_best_val: baseline.best_val_loss,
        augmented_best_val: augmented.best_val_loss,
        wall_ms: t0.elapsed().as_millis() as u64,
    })
}
