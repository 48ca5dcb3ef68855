//! Corpus generation: utterances sampled from a lexicon, labeled by the
//! sampled readings plus utterance-level prosody, and tied to feature
//! matrices through per-utterance seeds.
//!
//! An utterance is 2-3 words (configurable). Words are drawn uniformly;
//! homograph readings are drawn by their prior weights. The last mora of
//! every non-final word gets a phrase boundary mark, downgraded to a pause
//! at `pause_rate`; the utterance-final mora gets a question mark at
//! `question_rate`. Lexicon readings keep word-final moras neutral, so
//! these overwrites never clobber word-internal prosody.
//!
//! Feature matrices are not stored in the corpus: each utterance carries a
//! `feat_seed`, and [`utterance_features`] re-renders the exact same
//! matrix on demand.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::label::{parse_label_string, MoraInventory, ProsodyLabel, TtsLabelSequence};
use crate::model::AcousticFeatures;
use crate::util::derive_seed;

use super::articulate::{articulate, MoraEmbeddings};
use super::lexicon::Lexicon;
use super::{SpeakerParams, SynthError};

/// Shape of a generated corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Words per utterance, inclusive range.
    pub words_min: usize,
    pub words_max: usize,
    /// Probability that an inter-word boundary is a pause instead of a
    /// phrase boundary.
    pub pause_rate: f64,
    /// Probability that the utterance ends question-marked.
    pub question_rate: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_train: 2000,
            n_val: 200,
            n_test: 800,
            words_min: 2,
            words_max: 3,
            pause_rate: 0.15,
            question_rate: 0.1,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.words_min == 0 || self.words_max < self.words_min {
            return Err(SynthError::InvalidRate(format!(
                "words range [{}, {}] must satisfy 1 <= min <= max",
                self.words_min, self.words_max
            )));
        }
        for (name, r) in [
            ("pause_rate", self.pause_rate),
            ("question_rate", self.question_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(SynthError::InvalidRate(format!("{name} {r} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// One sampled utterance. Features regenerate from `feat_seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub grapheme: String,
    pub labels: TtsLabelSequence,
    pub feat_seed: u64,
}

/// A three-way split corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<Utterance>,
    pub val: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

impl Corpus {
    pub fn splits(&self) -> [(&'static str, &[Utterance]); 3] {
        [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ]
    }
}

/// Sample one utterance's words, readings, and utterance-level marks.
pub fn sample_utterance(
    lexicon: &Lexicon,
    cfg: &CorpusConfig,
    rng: &mut ChaCha8Rng,
) -> (String, TtsLabelSequence) {
    let n_words = rng.random_range(cfg.words_min..=cfg.words_max);
    let mut graphemes = Vec::with_capacity(n_words);
    let mut items = Vec::new();
    for w in 0..n_words {
        let entry = &lexicon.entries()[rng.random_range(0..lexicon.len())];
        let reading = if entry.readings.len() == 1 {
            &entry.readings[0]
        } else {
            let mut pick = rng.random::<f64>();
            let mut chosen = entry.readings.last().unwrap();
            for r in &entry.readings {
                if pick < r.weight {
                    chosen = r;
                    break;
                }
                pick -= r.weight;
            }
            chosen
        };
        graphemes.push(entry.grapheme.as_str());
        for (mora, &p) in entry.moras.iter().zip(&reading.prosody) {
            items.push((mora.clone(), p));
        }
        let last = items.last_mut().expect("entries have at least one mora");
        if w + 1 < n_words {
            last.1 = if rng.random::<f64>() < cfg.pause_rate {
                ProsodyLabel::Pause
            } else {
                ProsodyLabel::PhraseBoundary
            };
        } else if rng.random::<f64>() < cfg.question_rate {
            last.1 = ProsodyLabel::Question;
        }
    }
    (graphemes.join(" "), TtsLabelSequence::from_pairs(items))
}

/// Generate a full corpus. Every utterance draws from its own stream
/// (derived from `seed` and its global index), so the corpus is a pure
/// function of `(lexicon, config, seed)` and insertion order never leaks
/// between utterances.
pub fn gen_corpus(lexicon: &Lexicon, cfg: &CorpusConfig, seed: u64) -> Result<Corpus, SynthError> {
    cfg.validate()?;
    if lexicon.is_empty() {
        return Err(SynthError::LexiconShape("empty lexicon".into()));
    }
    let mut global = 0u64;
    let mut make_split = |name: &str, count: usize| -> Vec<Utterance> {
        (0..count)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "utt", global));
                let (grapheme, labels) = sample_utterance(lexicon, cfg, &mut rng);
                let feat_seed = derive_seed(seed, "feat", global);
                global += 1;
                Utterance {
                    id: format!("{name}-{i:06}"),
                    grapheme,
                    labels,
                    feat_seed,
                }
            })
            .collect()
    };
    Ok(Corpus {
        train: make_split("train", cfg.n_train),
        val: make_split("val", cfg.n_val),
        test: make_split("test", cfg.n_test),
    })
}

/// Render (or re-render) the feature matrix for one utterance.
pub fn utterance_features(
    utt: &Utterance,
    embeddings: &MoraEmbeddings,
    speaker: &SpeakerParams,
) -> Result<AcousticFeatures, SynthError> {
    articulate(&utt.labels, embeddings, speaker, utt.feat_seed)
}

#[derive(Serialize, Deserialize)]
struct UttRow {
    id: String,
    grapheme: String,
    labels: String,
    feat_seed: u64,
}

/// Write one split as JSON lines: `{id, grapheme, labels, feat_seed}`.
pub fn save_split(utts: &[Utterance], path: &Path) -> Result<(), SynthError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for u in utts {
        let row = UttRow {
            id: u.id.clone(),
            grapheme: u.grapheme.clone(),
            labels: u.labels.serialize_label_string(),
            feat_seed: u.feat_seed,
        };
        let line = serde_json::to_string(&row).map_err(|e| SynthError::Malformed(e.to_string()))?;
        writeln!(file, "{line}")?;
    }
    file.flush()?;
    Ok(())
}

/// Read a split back, validating every label line against the inventory.
pub fn load_split(path: &Path, inventory: &MoraInventory) -> Result<Vec<Utterance>, SynthError> {
    let file = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: UttRow = serde_json::from_str(&line).map_err(|e| {
            SynthError::Malformed(format!("{}:{}: {e}", path.display(), n + 1))
        })?;
        let labels = parse_label_string(&row.labels, inventory).map_err(|e| {
            SynthError::Malformed(format!("{}:{}: {e}", path.display(), n + 1))
        })?;
        out.push(Utterance {
            id: row.id,
            grapheme: row.grapheme,
            labels,
            feat_seed: row.feat_seed,
        });
    }
    Ok(out)
}
