//! Command-line interface: reproducible pipeline commands over the library.
//!
//! Commands: `gen`, `train`, `annotate`, `evaluate`, `augment`,
//! `experiment`. Every artifact-producing command writes a manifest beside
//! its outputs recording the resolved config, inputs, and outputs; given
//! the same config and seed, artifacts are byte-identical across reruns
//! (the manifest itself carries wall-clock and is the one exception).
//!
//! Exit codes are stable per error category: 2 usage, 3 config, 4 data
//! generation, 5 model, 6 cascade, 7 augmentation, 8 evaluation,
//! 9 vocabulary, 10 experiment, 11 I/O.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_dataset, AugmentConfig, AugmentError};
use crate::cascade::{cascade_annotate_seeded, CascadeError, ResolutionPolicy};
use crate::config::{ConfigError, RunConfig};
use crate::experiments::{
    run_augment_experiment, run_homograph_experiment, AugmentExperimentConfig, ExperimentError,
    HomographExperimentConfig,
};
use crate::label::{parse_label_string, MoraInventory, TtsLabelSequence};
use crate::manifest::RunManifest;
use crate::metrics::{evaluation_protocol, parse_excluded_labels, MetricError};
use crate::model::checkpoint;
use crate::model::decode::{annotate, DecodeMode};
use crate::model::train::{train, TrainLogRow, TrainPair};
use crate::model::{init_model, AnnotatorModel, ModelError};
use crate::synth::articulate::MoraEmbeddings;
use crate::synth::corpus::{gen_corpus, load_split, save_split, utterance_features, Utterance};
use crate::synth::lexicon::{gen_lexicon, Lexicon};
use crate::synth::SynthError;
use crate::util::derive_seed;
use crate::vocab::{encode, Vocabulary, VocabError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("data generation: {0}")]
    Synth(#[from] SynthError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("cascade: {0}")]
    Cascade(#[from] CascadeError),
    #[error("augmentation: {0}")]
    Augment(#[from] AugmentError),
    #[error("evaluation: {0}")]
    Metric(#[from] MetricError),
    #[error("vocabulary: {0}")]
    Vocab(#[from] VocabError),
    #[error("experiment: {0}")]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Stable exit code per error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Config(_) => 3,
            CliError::Synth(_) => 4,
            CliError::Model(_) => 5,
            CliError::Cascade(_) => 6,
            CliError::Augment(_) => 7,
            CliError::Metric(_) => 8,
            CliError::Vocab(_) => 9,
            CliError::Experiment(_) => 10,
            CliError::Io(_) => 11,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "moranno",
    version,
    about = "Audio-conditioned phonemic and prosodic label annotation toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Base seed, overriding the config file's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML config file; omitted fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Threads for data-parallel stages (1 = sequential, 0 = all cores).
    /// Results are identical at any thread count.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Comma-separated prosody symbols excluded from scoring.
    #[arg(long, global = true, default_value = "_,?")]
    pub excluded_labels: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemArg {
    /// Trained audio-conditioned annotator.
    Model,
    /// Text pipeline behind the recognition-error surrogate.
    Cascade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    /// Highest-weight reading wins.
    Majority,
    /// First listed reading wins.
    First,
}

impl From<PolicyArg> for ResolutionPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Majority => ResolutionPolicy::MajorityPrior,
            PolicyArg::First => ResolutionPolicy::FirstEntry,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    /// Annotator vs text pipeline on homograph disambiguation.
    Homograph,
    /// Labeled seed alone vs seed + synthesized data.
    Augment,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a lexicon, corpus splits, transcripts, and the vocabulary.
    Gen {
        /// Also write per-utterance feature files under features/<split>/.
        #[arg(long)]
        features: bool,
    },
    /// Train an annotator on a generated corpus directory.
    Train {
        /// Directory produced by `gen`.
        #[arg(long)]
        data: PathBuf,
        /// Keep encoder parameters at their initialization.
        #[arg(long)]
        freeze_encoder: bool,
    },
    /// Label a corpus split with a trained model or the text cascade.
    Annotate {
        /// Directory produced by `gen`.
        #[arg(long)]
        data: PathBuf,
        /// Split to annotate: train, val, or test.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, value_enum, default_value_t = SystemArg::Model)]
        system: SystemArg,
        /// Checkpoint path (system = model).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Beam width; 1 decodes greedily.
        #[arg(long, default_value_t = 1)]
        beam: usize,
        /// Word corruption rate (system = cascade).
        #[arg(long, default_value_t = 0.0)]
        err_rate: f64,
        /// Reading policy (system = cascade).
        #[arg(long, value_enum, default_value_t = PolicyArg::Majority)]
        policy: PolicyArg,
    },
    /// Score hypothesis files against a reference split.
    Evaluate {
        /// Directory produced by `gen`.
        #[arg(long)]
        data: PathBuf,
        /// Reference split.
        #[arg(long, default_value = "test")]
        split: String,
        /// Hypothesis file as name=path; repeat per system.
        #[arg(long = "hyp", value_name = "NAME=PATH", required = true)]
        hyps: Vec<String>,
    },
    /// Fit a voice on labeled data, then synthesize features for
    /// text-only transcripts.
    Augment {
        /// Directory produced by `gen`; its train split is the labeled pool.
        #[arg(long)]
        labeled: PathBuf,
        /// Transcript file, one utterance per line.
        #[arg(long)]
        text: PathBuf,
        /// Labeled utterances taken from the head of the train split.
        #[arg(long, default_value_t = 200)]
        n_labeled: usize,
        /// Reading policy for pseudo-labeling.
        #[arg(long, value_enum, default_value_t = PolicyArg::Majority)]
        policy: PolicyArg,
    },
    /// Run a scripted end-to-end study and write its report.
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
        /// Word corruption rate for the ASR-surrogate system (homograph).
        #[arg(long, default_value_t = 0.05)]
        asr_err_rate: f64,
        /// Labeled seed size (augment).
        #[arg(long, default_value_t = 200)]
        n_labeled: usize,
        /// Text-only transcript count (augment).
        #[arg(long, default_value_t = 2000)]
        n_text_only: usize,
    },
}

/// Entry point used by the binary: parse, run, exit nonzero on error.
pub fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    std::fs::create_dir_all(&cli.out)?;
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Gen { features } => cmd_gen(&cli, cfg, *features),
        Command::Train {
            data,
            freeze_encoder,
        } => cmd_train(&cli, cfg, data, *freeze_encoder),
        Command::Annotate {
            data,
            split,
            system,
            model,
            beam,
            err_rate,
            policy,
        } => cmd_annotate(
            &cli,
            cfg,
            data,
            split,
            *system,
            model.as_deref(),
            *beam,
            *err_rate,
            (*policy).into(),
        ),
        Command::Evaluate { data, split, hyps } => cmd_evaluate(&cli, cfg, data, split, hyps),
        Command::Augment {
            labeled,
            text,
            n_labeled,
            policy,
        } => cmd_augment(&cli, cfg, labeled, text, *n_labeled, (*policy).into()),
        Command::Experiment {
            name,
            asr_err_rate,
            n_labeled,
            n_text_only,
        } => cmd_experiment(&cli, *name, *asr_err_rate, *n_labeled, *n_text_only),
    }
}

/// Resolve the effective config: file (or defaults), then the seed flag.
fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Map an indexed job over 0..n, optionally on a thread pool. Results come
/// back in index order either way, so the thread count never changes them.
fn run_indexed<T, F>(n: usize, jobs: usize, f: F) -> Result<Vec<T>, CliError>
where
    T: Send,
    F: Fn(usize) -> Result<T, CliError> + Sync + Send,
{
    if jobs == 1 {
        (0..n).map(f).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
        pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

/// One line of a label file (JSONL). `labels` is the canonical label
/// string; the optional fields carry per-system diagnostics.
#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    id: String,
    labels: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    repaired: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reached_eos: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_corrupted: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_fallback: Option<usize>,
}

fn write_jsonl(path: &Path, rows: &[LabelRow]) -> Result<(), CliError> {
    let mut out = String::new();
    for row in rows {
        let line = serde_json::to_string(row)
            .map_err(|e| CliError::Invalid(format!("serializing {}: {e}", row.id)))?;
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn read_label_rows(path: &Path) -> Result<Vec<LabelRow>, CliError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Invalid(format!("{}:{}: {e}", path.display(), n + 1)))
        })
        .collect()
}

/// A generated data directory is self-describing: its manifest carries the
/// config that produced it, which later commands reuse so features and
/// lexicon lookups match generation exactly.
fn load_data_config(data: &Path) -> Result<RunConfig, CliError> {
    let path = data.join("manifest.json");
    let manifest = RunManifest::load(&path).map_err(|e| {
        CliError::Invalid(format!(
            "{} is not a generated data directory ({e})",
            data.display()
        ))
    })?;
    manifest.config.validate()?;
    Ok(manifest.config)
}

fn load_lexicon(data: &Path) -> Result<Lexicon, CliError> {
    Ok(Lexicon::load(&data.join("lexicon.json"))?)
}

fn load_utterances(data: &Path, split: &str, inventory: &MoraInventory) -> Result<Vec<Utterance>, CliError> {
    if !matches!(split, "train" | "val" | "test") {
        return Err(CliError::Invalid(format!(
            "unknown split `{split}` (expected train, val, or test)"
        )));
    }
    Ok(load_split(&data.join(format!("{split}.jsonl")), inventory)?)
}

fn save_manifest(out: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    manifest.save(&out.join("manifest.json"))?;
    Ok(())
}

fn cmd_gen(cli: &Cli, cfg: RunConfig, features: bool) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("gen", cfg.clone());
    let inventory = MoraInventory::default_cv();
    let lexicon = gen_lexicon(&cfg.lexicon, &inventory, derive_seed(cfg.seed, "lexicon", 0))?;
    let corpus = gen_corpus(&lexicon, &cfg.corpus, derive_seed(cfg.seed, "corpus", 0))?;
    eprintln!(
        "generated lexicon ({} words, {} homographs) and corpus ({}/{}/{})",
        lexicon.len(),
        lexicon.n_homographs(),
        corpus.train.len(),
        corpus.val.len(),
        corpus.test.len()
    );

    let mut outputs = Vec::new();
    lexicon.save(&cli.out.join("lexicon.json"))?;
    outputs.push("lexicon.json".to_string());
    let vocab = Vocabulary::for_inventory(&inventory)?;
    vocab.dump(&cli.out.join("vocab.tsv"))?;
    outputs.push("vocab.tsv".to_string());
    for (name, utts) in corpus.splits() {
        let file = format!("{name}.jsonl");
        save_split(utts, &cli.out.join(&file))?;
        outputs.push(file);
        let transcripts: String = utts.iter().map(|u| format!("{}\n", u.grapheme)).collect();
        let file = format!("transcripts-{name}.txt");
        std::fs::write(cli.out.join(&file), transcripts)?;
        outputs.push(file);
    }

    if features {
        let embeddings = MoraEmbeddings::derive(&inventory);
        for (name, utts) in corpus.splits() {
            let dir = cli.out.join("features").join(name);
            std::fs::create_dir_all(&dir)?;
            run_indexed(utts.len(), cli.jobs, |i| {
                let u = &utts[i];
                let feats = utterance_features(u, &embeddings, &cfg.speaker)?;
                feats.save(&dir.join(format!("{}.bin", u.id)))?;
                Ok(())
            })?;
            outputs.push(format!("features/{name}/ ({} files)", utts.len()));
        }
        eprintln!("wrote feature files for all splits");
    }

    manifest.finish(outputs);
    save_manifest(&cli.out, &manifest)
}

fn cmd_train(
    cli: &Cli,
    mut cfg: RunConfig,
    data: &Path,
    freeze_encoder: bool,
) -> Result<(), CliError> {
    // Data-coupled sections come from the data directory so regenerated
    // features match generation; model and train sections stay the user's.
    let data_cfg = load_data_config(data)?;
    cfg.lexicon = data_cfg.lexicon;
    cfg.corpus = data_cfg.corpus;
    cfg.speaker = data_cfg.speaker;
    if freeze_encoder {
        cfg.model.freeze_encoder = true;
    }
    let mut manifest = RunManifest::new("train", cfg.clone());
    manifest.inputs.push(data.display().to_string());

    let inventory = MoraInventory::default_cv();
    let embeddings = MoraEmbeddings::derive(&inventory);
    let vocab = Vocabulary::for_inventory(&inventory)?;
    let train_utts = load_utterances(data, "train", &inventory)?;
    let val_utts = load_utterances(data, "val", &inventory)?;
    let make = |utts: &[Utterance]| -> Result<Vec<TrainPair>, CliError> {
        utts.iter()
            .map(|u| {
                let feats = utterance_features(u, &embeddings, &cfg.speaker)?;
                let target_ids = encode(&u.labels, &vocab)?;
                Ok(TrainPair { feats, target_ids })
            })
            .collect()
    };
    let train_pairs = make(&train_utts)?;
    let val_pairs = make(&val_utts)?;
    eprintln!(
        "training on {} pairs ({} validation), {} steps",
        train_pairs.len(),
        val_pairs.len(),
        cfg.train.steps
    );

    let model = init_model(cfg.model, vocab, derive_seed(cfg.seed, "init", 0))?;
    let result = train(model, &train_pairs, &val_pairs, &cfg.train)?;
    eprintln!(
        "best validation loss {:.6} at step {}",
        result.best_val_loss, result.best_step
    );

    checkpoint::save(&result.model, &cli.out.join("model.ckpt"))?;
    write_train_log(&cli.out.join("train_log.csv"), &result.log)?;
    manifest
        .extra
        .insert("best_step".into(), result.best_step.to_string());
    manifest
        .extra
        .insert("best_val_loss".into(), format!("{:.12e}", result.best_val_loss));
    manifest.finish(vec!["model.ckpt".into(), "train_log.csv".into()]);
    save_manifest(&cli.out, &manifest)
}

fn write_train_log(path: &Path, log: &[TrainLogRow]) -> Result<(), CliError> {
    let mut out = String::from("step,lr,train_loss,val_loss\n");
    for row in log {
        let val = row
            .val_loss
            .map(|v| format!("{v:.12e}"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.12e},{:.12e},{}",
            row.step, row.lr, row.train_loss, val
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_annotate(
    cli: &Cli,
    cfg: RunConfig,
    data: &Path,
    split: &str,
    system: SystemArg,
    model_path: Option<&Path>,
    beam: usize,
    err_rate: f64,
    policy: ResolutionPolicy,
) -> Result<(), CliError> {
    let data_cfg = load_data_config(data)?;
    let inventory = MoraInventory::default_cv();
    let utts = load_utterances(data, split, &inventory)?;
    let mut manifest = RunManifest::new("annotate", cfg.clone());
    manifest.inputs.push(data.display().to_string());

    let (rows, file, extra): (Vec<LabelRow>, String, BTreeMap<String, String>) = match system {
        SystemArg::Model => {
            let path = model_path.ok_or_else(|| {
                CliError::Invalid("--model is required when --system model".into())
            })?;
            manifest.inputs.push(path.display().to_string());
            let model: AnnotatorModel = checkpoint::load(path)?;
            let embeddings = MoraEmbeddings::derive(&inventory);
            let mode = if beam <= 1 {
                DecodeMode::Greedy
            } else {
                DecodeMode::Beam { width: beam }
            };
            let rows = run_indexed(utts.len(), cli.jobs, |i| {
                let u = &utts[i];
                let feats = utterance_features(u, &embeddings, &data_cfg.speaker)?;
                let ann = annotate(&model, &feats, mode)?;
                Ok(LabelRow {
                    id: u.id.clone(),
                    labels: ann.labels.serialize_label_string(),
                    repaired: Some(ann.repaired),
                    score: Some(ann.score),
                    reached_eos: Some(ann.reached_eos),
                    n_corrupted: None,
                    n_fallback: None,
                })
            })?;
            let n_repaired = rows.iter().filter(|r| r.repaired == Some(true)).count();
            let mut extra = BTreeMap::new();
            extra.insert("n_repaired".into(), n_repaired.to_string());
            extra.insert("beam".into(), beam.to_string());
            (rows, format!("{split}-model.jsonl"), extra)
        }
        SystemArg::Cascade => {
            let lexicon = load_lexicon(data)?;
            manifest
                .inputs
                .push(data.join("lexicon.json").display().to_string());
            let rows = run_indexed(utts.len(), cli.jobs, |i| {
                let u = &utts[i];
                let (labels, stats) = cascade_annotate_seeded(
                    &u.grapheme,
                    &lexicon,
                    &inventory,
                    policy,
                    err_rate,
                    derive_seed(cfg.seed, "cascade", i as u64),
                )?;
                Ok(LabelRow {
                    id: u.id.clone(),
                    labels: labels.serialize_label_string(),
                    repaired: None,
                    score: None,
                    reached_eos: None,
                    n_corrupted: Some(stats.n_corrupted),
                    n_fallback: Some(stats.n_fallback),
                })
            })?;
            let n_corrupted: usize = rows.iter().filter_map(|r| r.n_corrupted).sum();
            let mut extra = BTreeMap::new();
            extra.insert("err_rate".into(), format!("{err_rate}"));
            extra.insert("n_corrupted".into(), n_corrupted.to_string());
            (rows, format!("{split}-cascade.jsonl"), extra)
        }
    };

    write_jsonl(&cli.out.join(&file), &rows)?;
    eprintln!("annotated {} utterances -> {file}", rows.len());
    manifest.extra = extra;
    manifest.finish(vec![file]);
    save_manifest(&cli.out, &manifest)
}

fn cmd_evaluate(
    cli: &Cli,
    cfg: RunConfig,
    data: &Path,
    split: &str,
    hyps: &[String],
) -> Result<(), CliError> {
    // Validate flag shapes before touching the filesystem.
    let specs: Vec<(&str, &str)> = hyps
        .iter()
        .map(|spec| {
            spec.split_once('=')
                .filter(|(name, path)| !name.is_empty() && !path.is_empty())
                .ok_or_else(|| CliError::Invalid(format!("--hyp expects NAME=PATH, got `{spec}`")))
        })
        .collect::<Result<_, CliError>>()?;
    let excluded = parse_excluded_labels(&cli.excluded_labels).map_err(CliError::Invalid)?;

    let inventory = MoraInventory::default_cv();
    let refs = load_utterances(data, split, &inventory)?;
    let references: Vec<TtsLabelSequence> = refs.iter().map(|u| u.labels.clone()).collect();

    let mut manifest = RunManifest::new("evaluate", cfg);
    manifest.inputs.push(data.display().to_string());
    let mut systems = Vec::with_capacity(specs.len());
    for (name, path) in specs {
        manifest.inputs.push(path.to_string());
        let rows = read_label_rows(Path::new(path))?;
        let mut by_id: BTreeMap<&str, &str> = BTreeMap::new();
        for row in &rows {
            if by_id.insert(&row.id, &row.labels).is_some() {
                return Err(CliError::Invalid(format!(
                    "{path}: duplicate id `{}`",
                    row.id
                )));
            }
        }
        let hyp_seqs: Vec<TtsLabelSequence> = refs
            .iter()
            .map(|u| {
                let raw = by_id.remove(u.id.as_str()).ok_or_else(|| {
                    CliError::Invalid(format!("{path}: missing id `{}`", u.id))
                })?;
                parse_label_string(raw, &inventory)
                    .map_err(|e| CliError::Invalid(format!("{path}: id `{}`: {e}", u.id)))
            })
            .collect::<Result<_, CliError>>()?;
        if let Some((stray, _)) = by_id.into_iter().next() {
            return Err(CliError::Invalid(format!(
                "{path}: id `{stray}` is not in the {split} split"
            )));
        }
        systems.push((name.to_string(), hyp_seqs));
    }

    let report = evaluation_protocol(&references, &systems, &excluded)?;
    let text = report.render_text();
    print!("{text}");
    std::fs::write(cli.out.join(format!("{split}-report.txt")), &text)?;
    std::fs::write(
        cli.out.join(format!("{split}-report.csv")),
        report.render_csv(),
    )?;
    manifest.finish(vec![
        format!("{split}-report.txt"),
        format!("{split}-report.csv"),
    ]);
    save_manifest(&cli.out, &manifest)
}

fn cmd_augment(
    cli: &Cli,
    cfg: RunConfig,
    labeled_dir: &Path,
    text: &Path,
    n_labeled: usize,
    policy: ResolutionPolicy,
) -> Result<(), CliError> {
    let data_cfg = load_data_config(labeled_dir)?;
    let inventory = MoraInventory::default_cv();
    let embeddings = MoraEmbeddings::derive(&inventory);
    let lexicon = load_lexicon(labeled_dir)?;
    let pool = load_utterances(labeled_dir, "train", &inventory)?;
    if pool.len() < n_labeled {
        return Err(CliError::Invalid(format!(
            "train split has {} utterances, need {n_labeled} labeled",
            pool.len()
        )));
    }
    let labeled: Vec<(String, TtsLabelSequence, crate::model::AcousticFeatures)> = pool
        [..n_labeled]
        .iter()
        .map(|u| {
            let feats = utterance_features(u, &embeddings, &data_cfg.speaker)?;
            Ok((u.id.clone(), u.labels.clone(), feats))
        })
        .collect::<Result<_, CliError>>()?;
    let transcripts: Vec<String> = std::fs::read_to_string(text)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if transcripts.is_empty() {
        return Err(CliError::Invalid(format!(
            "{} contains no transcripts",
            text.display()
        )));
    }

    let outcome = augment_dataset(
        &labeled,
        &transcripts,
        &lexicon,
        &inventory,
        &AugmentConfig {
            policy,
            seed: derive_seed(cfg.seed, "augment", 0),
        },
    )?;
    eprintln!(
        "fitted voice on {n_labeled} utterances; kept {} synthesized ({} deduped)",
        outcome.n_synthesized, outcome.n_deduped
    );

    let feat_dir = cli.out.join("features");
    std::fs::create_dir_all(&feat_dir)?;
    let mut rows = Vec::with_capacity(outcome.samples.len());
    for s in &outcome.samples {
        s.feats.save(&feat_dir.join(format!("{}.bin", s.id)))?;
        rows.push(LabelRow {
            id: s.id.clone(),
            labels: s.labels.serialize_label_string(),
            repaired: None,
            score: None,
            reached_eos: None,
            n_corrupted: None,
            n_fallback: None,
        });
    }
    write_jsonl(&cli.out.join("augmented.jsonl"), &rows)?;
    let fitted = serde_json::to_string_pretty(&outcome.fitted)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    std::fs::write(cli.out.join("speaker.json"), fitted)?;

    let mut manifest = RunManifest::new("augment", cfg);
    manifest.inputs = vec![
        labeled_dir.display().to_string(),
        text.display().to_string(),
    ];
    manifest.extra.insert("n_labeled".into(), n_labeled.to_string());
    manifest
        .extra
        .insert("n_text_only".into(), transcripts.len().to_string());
    manifest
        .extra
        .insert("n_synthesized".into(), outcome.n_synthesized.to_string());
    manifest
        .extra
        .insert("n_deduped".into(), outcome.n_deduped.to_string());
    manifest.extra.insert(
        "policy".into(),
        match policy {
            ResolutionPolicy::MajorityPrior => "majority".into(),
            ResolutionPolicy::FirstEntry => "first".into(),
        },
    );
    manifest.finish(vec![
        "augmented.jsonl".into(),
        "speaker.json".into(),
        format!("features/ ({} files)", outcome.samples.len()),
    ]);
    save_manifest(&cli.out, &manifest)
}

fn cmd_experiment(
    cli: &Cli,
    name: ExperimentName,
    asr_err_rate: f64,
    n_labeled: usize,
    n_text_only: usize,
) -> Result<(), CliError> {
    // Without a config file the experiment's own tuned defaults apply; a
    // config file takes over every section it defines (which, with serde
    // defaults, means all of them).
    let user_cfg = match &cli.config {
        Some(path) => Some(RunConfig::load(path)?),
        None => None,
    };
    let (json, text, command) = match name {
        ExperimentName::Homograph => {
            let mut ecfg = HomographExperimentConfig::default();
            if let Some(rc) = &user_cfg {
                ecfg.lexicon = rc.lexicon;
                ecfg.corpus = rc.corpus;
                ecfg.speaker = rc.speaker;
                ecfg.model = rc.model;
                ecfg.train = rc.train;
                ecfg.seed = rc.seed;
            }
            if let Some(seed) = cli.seed {
                ecfg.seed = seed;
            }
            ecfg.asr_err_rate = asr_err_rate;
            eprintln!(
                "running homograph experiment (seed {}, {} train steps)",
                ecfg.seed, ecfg.train.steps
            );
            let report = run_homograph_experiment(&ecfg)?;
            (
                serde_json::to_string_pretty(&report)
                    .map_err(|e| CliError::Invalid(e.to_string()))?,
                report.render_text(),
                "experiment-homograph",
            )
        }
        ExperimentName::Augment => {
            let mut ecfg = AugmentExperimentConfig::default();
            if let Some(rc) = &user_cfg {
                ecfg.lexicon = rc.lexicon;
                ecfg.corpus = rc.corpus;
                ecfg.speaker = rc.speaker;
                ecfg.model = rc.model;
                ecfg.train = rc.train;
                ecfg.seed = rc.seed;
            }
            if let Some(seed) = cli.seed {
                ecfg.seed = seed;
            }
            ecfg.n_labeled = n_labeled;
            ecfg.n_text_only = n_text_only;
            eprintln!(
                "running augmentation experiment (seed {}, {} train steps)",
                ecfg.seed, ecfg.train.steps
            );
            let report = run_augment_experiment(&ecfg)?;
            (
                serde_json::to_string_pretty(&report)
                    .map_err(|e| CliError::Invalid(e.to_string()))?,
                report.render_text(),
                "experiment-augment",
            )
        }
    };

    print!("{text}");
    let json_file = format!("{command}.json");
    let text_file = format!("{command}.txt");
    std::fs::write(cli.out.join(&json_file), json)?;
    std::fs::write(cli.out.join(&text_file), &text)?;
    let mut manifest = RunManifest::new(command, load_config(cli)?);
    manifest.finish(vec![json_file, text_file]);
    save_manifest(&cli.out, &manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_parses_every_subcommand() {
        for argv in [
            vec!["moranno", "gen", "--features"],
            vec!["moranno", "train", "--data", "d", "--freeze-encoder"],
            vec![
                "moranno", "annotate", "--data", "d", "--system", "cascade", "--err-rate", "0.05",
            ],
            vec![
                "moranno", "annotate", "--data", "d", "--model", "m.ckpt", "--beam", "4",
            ],
            vec![
                "moranno", "evaluate", "--data", "d", "--hyp", "a=x.jsonl", "--hyp", "b=y.jsonl",
            ],
            vec![
                "moranno", "augment", "--labeled", "d", "--text", "t.txt", "--n-labeled", "50",
            ],
            vec!["moranno", "experiment", "homograph", "--seed", "3"],
            vec!["moranno", "experiment", "augment", "--n-labeled", "100"],
        ] {
            if let Err(e) = Cli::try_parse_from(&argv) {
                panic!("{argv:?}: {e}");
            }
        }
    }

    #[test]
    fn hyp_spec_requires_name_equals_path() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let cli = Cli::try_parse_from([
            "moranno",
            "evaluate",
            "--data",
            "d",
            "--hyp",
            "bare",
            "--out",
            out.to_str().unwrap(),
        ])
        .unwrap();
        let err = run(cli).unwrap_err();
        assert!(matches!(&err, CliError::Invalid(m) if m.contains("NAME=PATH")), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn exit_codes_are_distinct() {
        use std::collections::BTreeSet;
        let codes: BTreeSet<i32> = [
            CliError::Invalid(String::new()).exit_code(),
            CliError::Config(ConfigError::Parse(String::new())).exit_code(),
            CliError::Synth(SynthError::EmptyInput("x")).exit_code(),
            CliError::Model(ModelError::EmptyDataset).exit_code(),
            CliError::Metric(MetricError::EmptyReference).exit_code(),
            CliError::Io(std::io::Error::other("x")).exit_code(),
        ]
        .into_iter()
        .collect();
        assert_eq!(codes.len(), 6);
    }
}
