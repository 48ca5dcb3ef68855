//! Mixed phonemic/prosodic label sequences.
//!
//! A TTS label sequence interleaves mora tokens with prosody symbols:
//! `m1 p1 m2 p2 ...`. Every mora carries exactly one prosody label, so a
//! sequence of M moras serializes to exactly 2M whitespace-separated tokens.
//! The canonical serialization uses a single space between tokens.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use thiserror::Error;

/// Prosodic event attached to a single mora.
///
/// The six symbols are whole tokens in the label alphabet; they never
/// combine with mora tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProsodyLabel {
    /// `_` — silent pause after the mora.
    #[serde(rename = "_")]
    Pause,
    /// `[` — pitch rise after the mora.
    #[serde(rename = "[")]
    Rise,
    /// `]` — pitch fall after the mora.
    #[serde(rename = "]")]
    Fall,
    /// `#` — accent-phrase boundary; the pitch level resets.
    #[serde(rename = "#")]
    PhraseBoundary,
    /// `?` — interrogative boundary pitch movement.
    #[serde(rename = "?")]
    Question,
    /// `*` — no prosodic event (padding label).
    #[serde(rename = "*")]
    Pad,
}

impl ProsodyLabel {
    /// All labels, in enum declaration order.
    pub const ALL: [ProsodyLabel; 6] = [
        ProsodyLabel::Pause,
        ProsodyLabel::Rise,
        ProsodyLabel::Fall,
        ProsodyLabel::PhraseBoundary,
        ProsodyLabel::Question,
        ProsodyLabel::Pad,
    ];

    /// The single-character surface symbol.
    pub fn symbol(self) -> &'static str {
        match self {
            ProsodyLabel::Pause => "_",
            ProsodyLabel::Rise => "[",
            ProsodyLabel::Fall => "]",
            ProsodyLabel::PhraseBoundary => "#",
            ProsodyLabel::Question => "?",
            ProsodyLabel::Pad => "*",
        }
    }

    /// Parse a surface symbol; `None` if `s` is not one of the six symbols.
    pub fn from_symbol(s: &str) -> Option<Self> {
        ProsodyLabel::ALL.iter().copied().find(|p| p.symbol() == s)
    }
}

impl fmt::Display for ProsodyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Errors raised by label parsing and construction.
#[derive(Debug, Error)]
pub enum LabelError {
    /// A token that is neither an inventory mora nor a prosody symbol.
    #[error("unknown token `{0}`: neither an inventory mora nor a prosody symbol")]
    UnknownToken(String),
    /// The token stream breaks the alternating mora/prosody grammar.
    #[error("grammar violation: {0}")]
    GrammarViolation(String),
    /// A mora token that is empty, whitespace-bearing, or collides with a
    /// prosody symbol.
    #[error("invalid mora token `{0}`: {1}")]
    InvalidMora(String, &'static str),
    /// The same mora token listed twice in an inventory.
    #[error("duplicate mora token `{0}` in inventory")]
    DuplicateMora(String),
    /// Inventory file I/O failure.
    #[error("inventory file error: {0}")]
    Io(#[from] std::io::Error),
}

/// A single mora token (e.g. `ka`).
///
/// Invariants enforced by [`Mora::new`]: non-empty, no whitespace, and not
/// equal to any prosody symbol. [`Mora::from_raw`] skips the checks so that
/// [`validate`] can inspect ill-formed data.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mora(String);

impl Mora {
    /// Construct a checked mora token.
    pub fn new(token: &str) -> Result<Self, LabelError> {
        if token.is_empty() {
            return Err(LabelError::InvalidMora(token.to_string(), "empty"));
        }
        if token.chars().any(char::is_whitespace) {
            return Err(LabelError::InvalidMora(
                token.to_string(),
                "contains whitespace",
            ));
        }
        if ProsodyLabel::from_symbol(token).is_some() {
            return Err(LabelError::InvalidMora(
                token.to_string(),
                "collides with a prosody symbol",
            ));
        }
        Ok(Mora(token.to_string()))
    }

    /// Construct without validation (for building data that `validate`
    /// is expected to flag).
    pub fn from_raw(token: impl Into<String>) -> Self {
        Mora(token.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Mora {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Phoneme stream: the mora tokens of a sequence in order.
pub type PhonemeSeq = Vec<Mora>;
/// Prosody stream: the prosody labels of a sequence in order.
pub type ProsodySeq = Vec<ProsodyLabel>;

/// The set of mora tokens a corpus admits.
///
/// Order of first insertion is preserved; lookups are set-backed. The
/// default inventory is 30 ASCII consonant-vowel syllables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct MoraInventory {
    tokens: Vec<String>,
    set: BTreeSet<String>,
}

impl TryFrom<Vec<String>> for MoraInventory {
    type Error = LabelError;
    fn try_from(tokens: Vec<String>) -> Result<Self, LabelError> {
        MoraInventory::new(tokens)
    }
}

impl From<MoraInventory> for Vec<String> {
    fn from(inv: MoraInventory) -> Vec<String> {
        inv.tokens
    }
}

impl MoraInventory {
    /// Build an inventory from unique, well-formed mora tokens.
    pub fn new<I, S>(tokens: I) -> Result<Self, LabelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut list = Vec::new();
        let mut set = BTreeSet::new();
        for token in tokens {
            let token = token.into();
            Mora::new(&token)?;
            if !set.insert(token.clone()) {
                return Err(LabelError::DuplicateMora(token));
            }
            list.push(token);
        }
        Ok(MoraInventory { tokens: list, set })
    }

    /// The default 30-syllable inventory: the five vowels plus the k/s/t/n/m
    /// consonant rows.
    pub fn default_cv() -> Self {
        let vowels = ["a", "i", "u", "e", "o"];
        let mut tokens: Vec<String> = vowels.iter().map(|v| v.to_string()).collect();
        for c in ["k", "s", "t", "n", "m"] {
            for v in vowels {
                tokens.push(format!("{c}{v}"));
            }
        }
        MoraInventory::new(tokens).expect("default inventory is well-formed")
    }

    pub fn contains(&self, token: &str) -> bool {
        self.set.contains(token)
    }

    /// Tokens in insertion order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Read an inventory from a plain text file, one token per line.
    /// Blank lines are ignored.
    pub fn load(path: &Path) -> Result<Self, LabelError> {
        let text = std::fs::read_to_string(path)?;
        MoraInventory::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }

    /// Write the inventory as a plain text file, one token per line.
    pub fn save(&self, path: &Path) -> Result<(), LabelError> {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// An utterance-level label sequence: `(mora, prosody)` pairs in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtsLabelSequence {
    items: Vec<(Mora, ProsodyLabel)>,
}

impl TtsLabelSequence {
    pub fn from_pairs(items: Vec<(Mora, ProsodyLabel)>) -> Self {
        TtsLabelSequence { items }
    }

    /// Number of moras (M). The serialized form has 2M tokens.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[(Mora, ProsodyLabel)] {
        &self.items
    }

    /// Canonical label string: tokens joined by single spaces.
    pub fn serialize_label_string(&self) -> String {
        let mut parts = Vec::with_capacity(self.items.len() * 2);
        for (m, p) in &self.items {
            parts.push(m.as_str().to_string());
            parts.push(p.symbol().to_string());
        }
        parts.join(" ")
    }

    /// Split into the two aligned streams (same length M).
    pub fn split_streams(&self) -> (PhonemeSeq, ProsodySeq) {
        let phonemes = self.items.iter().map(|(m, _)| m.clone()).collect();
        let prosody = self.items.iter().map(|(_, p)| *p).collect();
        (phonemes, prosody)
    }

    /// Phoneme stream only, prosody dropped.
    pub fn strip_prosody(&self) -> PhonemeSeq {
        self.items.iter().map(|(m, _)| m.clone()).collect()
    }

    /// Prosody stream only.
    pub fn prosody(&self) -> ProsodySeq {
        self.items.iter().map(|(_, p)| *p).collect()
    }
}

/// Parse a whitespace-separated label string against an inventory.
///
/// The grammar demands strict alternation, mora first: even positions must
/// be inventory moras, odd positions prosody symbols, and the total token
/// count must be even and non-zero.
pub fn parse_label_string(
    text: &str,
    inventory: &MoraInventory,
) -> Result<TtsLabelSequence, LabelError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(LabelError::GrammarViolation(
            "empty label string (a sequence has at least one mora)".into(),
        ));
    }
    let mut items = Vec::with_capacity(tokens.len() / 2);
    let mut pending: Option<Mora> = None;
    for (i, tok) in tokens.iter().enumerate() {
        let prosody = ProsodyLabel::from_symbol(tok);
        if i % 2 == 0 {
            // mora slot
            match prosody {
                Some(p) => {
                    return Err(LabelError::GrammarViolation(format!(
                        "prosody symbol `{}` at position {i} where a mora was expected",
                        p.symbol()
                    )));
                }
                None => {
                    if !inventory.contains(tok) {
                        return Err(LabelError::UnknownToken(tok.to_string()));
                    }
                    pending = Some(Mora::new(tok)?);
                }
            }
        } else {
            // prosody slot
            match prosody {
                Some(p) => {
                    items.push((pending.take().expect("mora precedes prosody"), p));
                }
                None => {
                    let detail = if inventory.contains(tok) {
                        format!("mora `{tok}` at position {i} where a prosody symbol was expected")
                    } else {
                        return Err(LabelError::UnknownToken(tok.to_string()));
                    };
                    return Err(LabelError::GrammarViolation(detail));
                }
            }
        }
    }
    if pending.is_some() {
        return Err(LabelError::GrammarViolation(
            "dangling mora: odd token count leaves the final mora unlabeled".into(),
        ));
    }
    Ok(TtsLabelSequence::from_pairs(items))
}

/// A single invariant breach found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Zero moras: utterance-level sequences must have M >= 1.
    EmptySequence,
    /// Mora token at `index` is empty or whitespace-bearing.
    MalformedMora { index: usize, token: String },
    /// Mora token at `index` equals a prosody symbol.
    TokenCollision { index: usize, token: String },
    /// Mora token at `index` is not in the active inventory.
    UnknownMora { index: usize, token: String },
}

/// Check every type invariant of a sequence against an inventory.
///
/// Returns an empty list iff the sequence is well-formed: at least one mora,
/// every mora token non-empty, collision-free, and inventory-backed.
pub fn validate(seq: &TtsLabelSequence, inventory: &MoraInventory) -> Vec<Violation> {
    let mut out = Vec::new();
    if seq.is_empty() {
        out.push(Violation::EmptySequence);
    }
    for (i, (mora, _)) in seq.items().iter().enumerate() {
        let tok = mora.as_str();
        if tok.is_empty() || tok.chars().any(char::is_whitespace) {
            out.push(Violation::MalformedMora {
                index: i,
                token: tok.to_string(),
            });
        } else if ProsodyLabel::from_symbol(tok).is_some() {
            out.push(Violation::TokenCollision {
                index: i,
                token: tok.to_string(),
            });
        } else if !inventory.contains(tok) {
            out.push(Violation::UnknownMora {
                index: i,
                token: tok.to_string(),
            });
        }
    }
    out
}
