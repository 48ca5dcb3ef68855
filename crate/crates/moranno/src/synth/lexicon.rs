//! Lexicon generation: words with phoneme spellings and weighted prosody
//! readings.
//!
//! Two word classes exist. Plain words (2-4 moras) have a single flat
//! reading. Homographs (exactly 5 moras) have two readings that share the
//! phoneme spelling but place a rise and a fall at disjoint positions, so
//! the readings differ only prosodically and never overlap on any marked
//! position. Word-final moras always carry the neutral label, leaving room
//! for utterance-level boundary marks to overwrite them.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::label::{Mora, MoraInventory, ProsodyLabel, ProsodySeq};
use crate::util::derive_seed;

use super::SynthError;

/// One reading: a prosody pattern over the word's moras plus its prior
/// probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub prosody: ProsodySeq,
    pub weight: f64,
}

/// One word: surface form, phoneme spelling, and one or more readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexEntry {
    pub grapheme: String,
    pub moras: Vec<Mora>,
    pub readings: Vec<Reading>,
}

impl LexEntry {
    pub fn is_homograph(&self) -> bool {
        self.readings.len() > 1
    }
}

/// A generated word list with grapheme lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LexEntry>", into = "Vec<LexEntry>")]
pub struct Lexicon {
    entries: Vec<LexEntry>,
    #[serde(skip)]
    by_grapheme: BTreeMap<String, usize>,
}

impl TryFrom<Vec<LexEntry>> for Lexicon {
    type Error = SynthError;

    fn try_from(entries: Vec<LexEntry>) -> Result<Self, Self::Error> {
        Lexicon::new(entries)
    }
}

impl From<Lexicon> for Vec<LexEntry> {
    fn from(l: Lexicon) -> Self {
        l.entries
    }
}

impl Lexicon {
    pub fn new(entries: Vec<LexEntry>) -> Result<Self, SynthError> {
        if entries.is_empty() {
            return Err(SynthError::LexiconShape("no entries".into()));
        }
        let mut by_grapheme = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.moras.is_empty() {
                return Err(SynthError::LexiconShape(format!(
                    "entry {:?} has no moras",
                    e.grapheme
                )));
            }
            if e.readings.is_empty() {
                return Err(SynthError::LexiconShape(format!(
                    "entry {:?} has no readings",
                    e.grapheme
                )));
            }
            for r in &e.readings {
                if r.prosody.len() != e.moras.len() {
                    return Err(SynthError::LexiconShape(format!(
                        "entry {:?}: reading length {} != word length {}",
                        e.grapheme,
                        r.prosody.len(),
                        e.moras.len()
                    )));
                }
                if !(r.weight > 0.0 && r.weight <= 1.0) {
                    return Err(SynthError::InvalidRate(format!(
                        "entry {:?}: reading weight {} outside (0, 1]",
                        e.grapheme, r.weight
                    )));
                }
            }
            let total: f64 = e.readings.iter().map(|r| r.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(SynthError::InvalidRate(format!(
                    "entry {:?}: reading weights sum to {total}, expected 1",
                    e.grapheme
                )));
            }
            if by_grapheme.insert(e.grapheme.clone(), i).is_some() {
                return Err(SynthError::LexiconShape(format!(
                    "duplicate grapheme {:?}",
                    e.grapheme
                )));
            }
        }
        Ok(Lexicon {
            entries,
            by_grapheme,
        })
    }

    pub fn entries(&self) -> &[LexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, grapheme: &str) -> Option<&LexEntry> {
        self.by_grapheme.get(grapheme).map(|&i| &self.entries[i])
    }

    pub fn n_homographs(&self) -> usize {
        self.entries.iter().filter(|e| e.is_homograph()).count()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), SynthError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| SynthError::Malformed(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| SynthError::Malformed(e.to_string()))
    }
}

/// Shape of a generated lexicon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LexiconConfig {
    pub n_words: usize,
    /// Fraction of words that are homographs (rounded to nearest count).
    pub homograph_rate: f64,
    /// Prior of the majority reading of each homograph.
    pub majority_weight: f64,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        LexiconConfig {
            n_words: 100,
            homograph_rate: 0.2,
            majority_weight: 0.7,
        }
    }
}

impl LexiconConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_words == 0 {
            return Err(SynthError::LexiconShape("n_words must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.homograph_rate) {
            return Err(SynthError::InvalidRate(format!(
                "homograph_rate {} outside [0, 1]",
                self.homograph_rate
            )));
        }
        if !(self.majority_weight > 0.5 && self.majority_weight < 1.0) {
            return Err(SynthError::InvalidRate(format!(
                "majority_weight {} outside (0.5, 1)",
                self.majority_weight
            )));
        }
        Ok(())
    }
}

/// Homograph readings mark a rise and a fall somewhere in the first four
/// moras. The two readings of one word take position pairs from the same
/// partition of {0,1,2,3}, so they never agree on any marked position.
const HOMOGRAPH_SPLITS: [[(usize, usize); 2]; 3] = [
    [(0, 1), (2, 3)],
    [(0, 2), (1, 3)],
    [(0, 3), (1, 2)],
];

const HOMOGRAPH_LEN: usize = 5;

/// Generate a lexicon: unique phoneme spellings, flat plain words, and
/// position-disjoint two-reading homographs.
pub fn gen_lexicon(
    cfg: &LexiconConfig,
    inventory: &MoraInventory,
    seed: u64,
) -> Result<Lexicon, SynthError> {
    cfg.validate()?;
    if inventory.len() < 4 {
        return Err(SynthError::LexiconShape(format!(
            "need at least 4 mora types, inventory has {}",
            inventory.len()
        )));
    }
    let n_homographs = (cfg.n_words as f64 * cfg.homograph_rate).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "lexicon", 0));
    let mut seen = std::collections::BTreeSet::new();
    let mut entries = Vec::with_capacity(cfg.n_words);
    let tokens = inventory.tokens();
    for w in 0..cfg.n_words {
        let homograph = w < n_homographs;
        let len = if homograph {
            HOMOGRAPH_LEN
        } else {
            rng.random_range(2..=4usize)
        };
        // Rejection-sample a fresh phoneme spelling. The space is vast
        // compared to any realistic word count, so this terminates fast.
        let moras: Vec<Mora> = loop {
            let cand: Vec<Mora> = (0..len)
                .map(|_| Mora::from_raw(tokens[rng.random_range(0..tokens.len())].clone()))
                .collect();
            let key: Vec<String> = cand.iter().map(|m| m.as_str().to_string()).collect();
            if seen.insert(key) {
                break cand;
            }
        };
        let grapheme: String = moras.iter().map(|m| m.as_str()).collect();
        let readings = if homograph {
            let split = HOMOGRAPH_SPLITS[rng.random_range(0..HOMOGRAPH_SPLITS.len())];
            let mut readings = Vec::with_capacity(2);
            for (k, &(rise_at, fall_at)) in split.iter().enumerate() {
                let mut prosody = vec![ProsodyLabel::Pad; len];
                prosody[rise_at] = ProsodyLabel::Rise;
                prosody[fall_at] = ProsodyLabel::Fall;
                readings.push(Reading {
                    prosody,
                    weight: if k == 0 {
                        cfg.majority_weight
                    } else {
                        1.0 - cfg.majority_weight
                    },
                });
            }
            readings
        } else {
            vec![Reading {
                prosody: vec![ProsodyLabel::Pad; len],
                weight: 1.0,
            }]
        };
        entries.push(LexEntry {
            grapheme,
            moras,
            readings,
        });
    }
    Lexicon::new(entries)
}
