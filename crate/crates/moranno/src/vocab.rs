//! Token/id vocabulary and the strict sequence codec.
//!
//! Id assignment is deterministic: inventory moras in sorted order, then the
//! six prosody symbols in a fixed order (Rise, Fall, PhraseBoundary, Pause,
//! Question, Pad), then the control tokens BOS, EOS, PAD_CTL. A 30-mora
//! inventory therefore yields 39 ids with `a = 0`, `[ = 30`, BOS = 36,
//! EOS = 37, PAD_CTL = 38.
//!
//! The codec is strict: ill-formed id streams are typed errors, never
//! best-effort output. Model-facing repair lives in the annotator layer.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::label::{Mora, MoraInventory, ProsodyLabel, TtsLabelSequence};

/// Prosody symbols in vocabulary id order (after the sorted moras).
pub const PROSODY_ID_ORDER: [ProsodyLabel; 6] = [
    ProsodyLabel::Rise,
    ProsodyLabel::Fall,
    ProsodyLabel::PhraseBoundary,
    ProsodyLabel::Pause,
    ProsodyLabel::Question,
    ProsodyLabel::Pad,
];

/// Surface forms for the control tokens in vocabulary dumps.
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const PAD_CTL_TOKEN: &str = "<pad>";

/// Errors raised by vocabulary construction and the codec.
#[derive(Debug, Error)]
pub enum VocabError {
    /// A token string assigned twice (mora duplicating a mora, a prosody
    /// symbol, or a control token surface form).
    #[error("duplicate token `{0}` in vocabulary")]
    DuplicateToken(String),
    /// Encoding met a mora token absent from the vocabulary.
    #[error("unknown token `{0}`: not in the vocabulary")]
    UnknownToken(String),
    /// Decoding ran past the end of the id stream without meeting EOS.
    #[error("missing EOS: id stream ended before the terminator")]
    MissingEos,
    /// The id stream breaks the [BOS] mora prosody ... [EOS] grammar.
    #[error("grammar violation: {0}")]
    GrammarViolation(String),
    /// An id outside the vocabulary range.
    #[error("unknown id {0}: vocabulary has {1} ids")]
    UnknownId(u32, usize),
    /// Dump file I/O failure.
    #[error("vocabulary file error: {0}")]
    Io(#[from] std::io::Error),
    /// A dump file that does not parse back into a vocabulary.
    #[error("malformed vocabulary dump: {0}")]
    MalformedDump(String),
}

/// What a vocabulary id stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind<'a> {
    Mora(&'a str),
    Prosody(ProsodyLabel),
    Bos,
    Eos,
    PadCtl,
}

/// Bijective token <-> id map over moras, prosody symbols, and controls.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    /// id -> token surface form.
    tokens: Vec<String>,
    /// token surface form -> id.
    ids: BTreeMap<String, u32>,
    /// Number of mora ids (ids 0..n_moras are moras).
    n_moras: usize,
}

/// Build a vocabulary from mora tokens (sorted internally).
///
/// Rejects duplicates and tokens colliding with prosody symbols or control
/// token surface forms.
pub fn build_vocab<I, S>(moras: I) -> Result<Vocabulary, VocabError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut sorted: Vec<String> = moras.into_iter().map(|s| s.as_ref().to_string()).collect();
    sorted.sort();
    let mut tokens = Vec::with_capacity(sorted.len() + 9);
    let mut ids = BTreeMap::new();
    let reserved: Vec<String> = PROSODY_ID_ORDER
        .iter()
        .map(|p| p.symbol().to_string())
        .chain([
            BOS_TOKEN.to_string(),
            EOS_TOKEN.to_string(),
            PAD_CTL_TOKEN.to_string(),
        ])
        .collect();
    for tok in sorted {
        if reserved.contains(&tok) {
            return Err(VocabError::DuplicateToken(tok));
        }
        if ids.insert(tok.clone(), tokens.len() as u32).is_some() {
            return Err(VocabError::DuplicateToken(tok));
        }
        tokens.push(tok);
    }
    let n_moras = tokens.len();
    for tok in reserved {
        ids.insert(tok.clone(), tokens.len() as u32);
        tokens.push(tok);
    }
    Ok(Vocabulary {
        tokens,
        ids,
        n_moras,
    })
}

impl Vocabulary {
    /// Vocabulary for an inventory: its tokens plus symbols and controls.
    pub fn for_inventory(inventory: &MoraInventory) -> Result<Self, VocabError> {
        build_vocab(inventory.tokens())
    }

    /// Total id count: moras + 6 prosody symbols + 3 controls.
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn n_moras(&self) -> usize {
        self.n_moras
    }

    pub fn bos_id(&self) -> u32 {
        (self.n_moras + 6) as u32
    }

    pub fn eos_id(&self) -> u32 {
        (self.n_moras + 7) as u32
    }

    pub fn pad_ctl_id(&self) -> u32 {
        (self.n_moras + 8) as u32
    }

    pub fn prosody_id(&self, p: ProsodyLabel) -> u32 {
        let offset = PROSODY_ID_ORDER
            .iter()
            .position(|q| *q == p)
            .expect("all prosody labels have ids");
        (self.n_moras + offset) as u32
    }

    /// Id for a mora token, if present.
    pub fn mora_id(&self, token: &str) -> Option<u32> {
        match self.ids.get(token) {
            Some(&id) if (id as usize) < self.n_moras => Some(id),
            _ => None,
        }
    }

    /// Id for any surface form (mora, symbol, or control).
    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    /// Surface form for an id.
    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Classify an id.
    pub fn kind(&self, id: u32) -> Result<TokenKind<'_>, VocabError> {
        let idx = id as usize;
        if idx < self.n_moras {
            return Ok(TokenKind::Mora(&self.tokens[idx]));
        }
        if idx < self.n_moras + 6 {
            return Ok(TokenKind::Prosody(PROSODY_ID_ORDER[idx - self.n_moras]));
        }
        match idx - (self.n_moras + 6) {
            0 => Ok(TokenKind::Bos),
            1 => Ok(TokenKind::Eos),
            2 => Ok(TokenKind::PadCtl),
            _ => Err(VocabError::UnknownId(id, self.size())),
        }
    }

    /// Write the `token<TAB>id` dump, one row per id, ascending.
    pub fn dump(&self, path: &Path) -> Result<(), VocabError> {
        let mut out = String::new();
        for (id, tok) in self.tokens.iter().enumerate() {
            out.push_str(&format!("{tok}\t{id}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Read a `token<TAB>id` dump produced by [`Vocabulary::dump`].
    pub fn load(path: &Path) -> Result<Self, VocabError> {
        let text = std::fs::read_to_string(path)?;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line.split_once('\t').ok_or_else(|| {
                VocabError::MalformedDump(format!("line {}: no tab separator", lineno + 1))
            })?;
            let id: usize = id.parse().map_err(|_| {
                VocabError::MalformedDump(format!("line {}: bad id `{id}`", lineno + 1))
            })?;
            rows.push((tok.to_string(), id));
        }
        if rows.is_empty() {
            return Err(VocabError::MalformedDump("empty dump".into()));
        }
        let mut tokens = vec![String::new(); rows.len()];
        for (tok, id) in rows {
            if id >= tokens.len() || !tokens[id].is_empty() {
                return Err(VocabError::MalformedDump(format!(
                    "ids not contiguous at id {id}"
                )));
            }
            tokens[id] = tok;
        }
        // The trailing 9 ids must be the symbols and controls in order.
        if tokens.len() < 9 {
            return Err(VocabError::MalformedDump("fewer than 9 ids".into()));
        }
        let n_moras = tokens.len() - 9;
        let expected_tail: Vec<String> = PROSODY_ID_ORDER
            .iter()
            .map(|p| p.symbol().to_string())
            .chain([
                BOS_TOKEN.to_string(),
                EOS_TOKEN.to_string(),
                PAD_CTL_TOKEN.to_string(),
            ])
            .collect();
        if tokens[n_moras..] != expected_tail[..] {
            return Err(VocabError::MalformedDump(
                "trailing ids are not the expected symbols and controls".into(),
            ));
        }
        build_vocab(&tokens[..n_moras])
    }
}

/// Encode a sequence as `[BOS, m1, p1, ..., mM, pM, EOS]` (length 2M + 2).
pub fn encode(seq: &TtsLabelSequence, vocab: &Vocabulary) -> Result<Vec<u32>, VocabError> {
    if seq.is_empty() {
        return Err(VocabError::GrammarViolation(
            "cannot encode an empty sequence (M >= 1)".into(),
        ));
    }
    let mut ids = Vec::with_capacity(seq.len() * 2 + 2);
    ids.push(vocab.bos_id());
    for (mora, prosody) in seq.items() {
        let mid = vocab
            .mora_id(mora.as_str())
            .ok_or_else(|| VocabError::UnknownToken(mora.as_str().to_string()))?;
        ids.push(mid);
        ids.push(vocab.prosody_id(*prosody));
    }
    ids.push(vocab.eos_id());
    Ok(ids)
}

/// Decode a strict id stream back into a sequence.
///
/// The stream must start with BOS, alternate mora/prosody ids, and carry an
/// EOS terminator; ids after the first EOS are ignored. Anything else is a
/// typed error — this function never panics, whatever the input.
pub fn decode(ids: &[u32], vocab: &Vocabulary) -> Result<TtsLabelSequence, VocabError> {
    let mut iter = ids.iter().copied();
    match iter.next() {
        Some(id) if id == vocab.bos_id() => {}
        Some(id) => {
            return Err(VocabError::GrammarViolation(format!(
                "stream must start with BOS ({}), got id {id}",
                vocab.bos_id()
            )));
        }
        None => return Err(VocabError::MissingEos),
    }
    let mut items = Vec::new();
    let mut pending: Option<Mora> = None;
    let mut terminated = false;
    for (pos, id) in iter.enumerate() {
        let kind = vocab.kind(id)?;
        if kind == TokenKind::Eos {
            terminated = true;
            break;
        }
        if pending.is_none() {
            // mora slot
            match kind {
                TokenKind::Mora(tok) => pending = Some(Mora::from_raw(tok)),
                other => {
                    return Err(VocabError::GrammarViolation(format!(
                        "expected a mora id at position {}, got {other:?}",
                        pos + 1
                    )));
                }
            }
        } else {
            // prosody slot
            match kind {
                TokenKind::Prosody(p) => {
                    items.push((pending.take().expect("pending mora"), p));
                }
                other => {
                    return Err(VocabError::GrammarViolation(format!(
                        "expected a prosody id at position {}, got {other:?}",
                        pos + 1
                    )));
                }
            }
        }
    }
    if !terminated {
        return Err(VocabError::MissingEos);
    }
    if pending.is_some() {
        return Err(VocabError::GrammarViolation(
            "dangling mora id immediately before EOS".into(),
        ));
    }
    if items.is_empty() {
        return Err(VocabError::GrammarViolation(
            "empty payload: at least one (mora, prosody) pair required".into(),
        ));
    }
    Ok(TtsLabelSequence::from_pairs(items))
}
