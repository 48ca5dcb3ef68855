//! Decoding: greedy and beam search over a step scorer, plus grammar repair
//! that turns an arbitrary generated id stream into a well-formed label
//! sequence.
//!
//! Both searches share the same conventions:
//! - sequences start at `[bos]` and grow one id per step;
//! - suppressed ids (begin marker, padding) are never proposed;
//! - a sequence finishes by emitting `eos` (its log-probability counts
//!   toward the score) or by hitting `max_len` ids, in which case it
//!   finishes as-is with no end-marker term and `reached_eos = false`;
//! - scores are sums of next-token log-probabilities, never
//!   length-normalized;
//! - ties break toward the lexicographically smallest id sequence.
//!
//! Because log-probabilities are non-positive, a finished score strictly
//! above every alive score can never be beaten, which beam search uses as
//! its stopping rule. With a beam wide enough to hold every candidate the
//! search is exhaustive, so the tests can compare it against brute-force
//! enumeration.

use crate::label::{Mora, ProsodyLabel, TtsLabelSequence};
use crate::vocab::{TokenKind, Vocabulary};

use super::net::{decoder_forward, encoder_forward};
use super::tensor::{log_softmax, Mat};
use super::{AcousticFeatures, AnnotatorModel, ModelError};

/// Next-token distribution provider. `prefix` always starts with the begin
/// marker and has at least one id.
pub trait StepScorer {
    /// Log-probabilities over the full vocabulary given the prefix.
    /// All values must be `<= 0`.
    fn log_probs(&self, prefix: &[u32]) -> Result<Vec<f64>, ModelError>;
}

/// Special ids a search needs to know about.
#[derive(Debug, Clone)]
pub struct DecodeTokens {
    pub bos: u32,
    pub eos: u32,
    /// Never proposed during generation.
    pub suppressed: Vec<u32>,
    pub vocab_size: usize,
}

impl DecodeTokens {
    pub fn for_vocab(v: &Vocabulary) -> Self {
        DecodeTokens {
            bos: v.bos_id(),
            eos: v.eos_id(),
            suppressed: vec![v.bos_id(), v.pad_ctl_id()],
            vocab_size: v.size(),
        }
    }
}

/// A finished or in-progress hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Ids including the begin marker and, if reached, the end marker.
    pub ids: Vec<u32>,
    /// Sum of next-token log-probabilities.
    pub score: f64,
    pub reached_eos: bool,
}

fn check_limits(tokens: &DecodeTokens, max_len: usize) -> Result<(), ModelError> {
    if max_len < 2 {
        return Err(ModelError::InvalidConfig(
            "max_len must be at least 2".into(),
        ));
    }
    if tokens.vocab_size == 0 {
        return Err(ModelError::InvalidConfig("empty vocabulary".into()));
    }
    Ok(())
}

/// Greedy decoding: repeatedly take the highest-probability next id
/// (lowest id on exact ties).
pub fn greedy_decode(
    scorer: &dyn StepScorer,
    tokens: &DecodeTokens,
    max_len: usize,
) -> Result<Hypothesis, ModelError> {
    check_limits(tokens, max_len)?;
    let mut ids = vec![tokens.bos];
    let mut score = 0.0;
    loop {
        if ids.len() >= max_len {
            return Ok(Hypothesis {
                ids,
                score,
                reached_eos: false,
            });
        }
        let lp = scorer.log_probs(&ids)?;
        let mut best: Option<(u32, f64)> = None;
        for (id, &l) in lp.iter().enumerate() {
            let id = id as u32;
            if tokens.suppressed.contains(&id) {
                continue;
            }
            match best {
                Some((_, b)) if l <= b => {}
                _ => best = Some((id, l)),
            }
        }
        let (id, l) = best.ok_or_else(|| {
            ModelError::InvalidConfig("every id is suppressed".into())
        })?;
        ids.push(id);
        score += l;
        if id == tokens.eos {
            return Ok(Hypothesis {
                ids,
                score,
                reached_eos: true,
            });
        }
    }
}

/// Beam search keeping `width` hypotheses per step.
///
/// Each step ranks every expansion of every alive hypothesis — end-marker
/// expansions included — and keeps the top `width`. Kept hypotheses that
/// just emitted the end marker move to a finished pool; the rest stay
/// alive. Because the end marker competes for slots like any other id,
/// `width = 1` reproduces greedy decoding exactly, while a width at least
/// as large as the number of candidates discards nothing and therefore
/// returns the global argmax.
///
/// The search stops when nothing is alive or the pool's best score strictly
/// beats the best alive score (no extension can recover, since every added
/// term is `<= 0`). Returns the best finished hypothesis, ties broken by
/// smaller ids.
pub fn beam_decode(
    scorer: &dyn StepScorer,
    tokens: &DecodeTokens,
    width: usize,
    max_len: usize,
) -> Result<Hypothesis, ModelError> {
    check_limits(tokens, max_len)?;
    if width == 0 {
        return Err(ModelError::InvalidConfig("beam width must be > 0".into()));
    }
    let mut alive = vec![Hypothesis {
        ids: vec![tokens.bos],
        score: 0.0,
        reached_eos: false,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    while !alive.is_empty() {
        // Hypotheses at the length cap finish without an end-marker term.
        let mut expandable: Vec<Hypothesis> = Vec::new();
        for h in alive.drain(..) {
            if h.ids.len() >= max_len {
                finished.push(h);
            } else {
                expandable.push(h);
            }
        }
        let mut cands: Vec<Hypothesis> = Vec::new();
        for h in &expandable {
            let lp = scorer.log_probs(&h.ids)?;
            for (id, &l) in lp.iter().enumerate() {
                let id = id as u32;
                if tokens.suppressed.contains(&id) {
                    continue;
                }
                let mut ids = h.ids.clone();
                ids.push(id);
                cands.push(Hypothesis {
                    ids,
                    score: h.score + l,
                    reached_eos: id == tokens.eos,
                });
            }
        }
        cands.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.ids.cmp(&b.ids)));
        cands.truncate(width);
        let mut next_alive = Vec::new();
        for c in cands {
            if c.reached_eos {
                finished.push(c);
            } else {
                next_alive.push(c);
            }
        }
        if let Some(best_finished) = finished
            .iter()
            .map(|h| h.score)
            .max_by(|a, b| a.total_cmp(b))
        {
            if let Some(best_alive) = next_alive.first() {
                if best_finished > best_alive.score {
                    break;
                }
            }
        }
        alive = next_alive;
    }
    finished.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.ids.cmp(&b.ids)));
    finished
        .into_iter()
        .next()
        .ok_or_else(|| ModelError::InvalidConfig("search produced no hypotheses".into()))
}

/// Scorer backed by a trained model: encodes the features once, then runs a
/// decoder forward per prefix.
pub struct ModelScorer<'a> {
    model: &'a AnnotatorModel,
    enc_out: Mat,
}

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a AnnotatorModel, feats: &AcousticFeatures) -> Result<Self, ModelError> {
        let enc = encoder_forward(model, feats)?;
        Ok(ModelScorer {
            model,
            enc_out: enc.out,
        })
    }
}

impl StepScorer for ModelScorer<'_> {
    fn log_probs(&self, prefix: &[u32]) -> Result<Vec<f64>, ModelError> {
        let dec = decoder_forward(self.model, prefix, &self.enc_out)?;
        Ok(log_softmax(dec.logits.row(prefix.len() - 1)))
    }
}

/// A generated payload coerced onto the label grammar.
#[derive(Debug, Clone, PartialEq)]
pub struct RepairedIds {
    /// Well-formed (mora id, prosody id) pairs.
    pub pairs: Vec<(u32, u32)>,
    /// True when anything had to be dropped or inserted.
    pub repaired: bool,
}

/// Force an arbitrary id stream (begin/end markers already stripped) onto
/// the alternating mora/prosody grammar:
/// - a prosody id with no mora pending is dropped;
/// - a mora id while another mora is pending completes the pending one with
///   the neutral "no event" label;
/// - a trailing pending mora is dropped;
/// - control ids are dropped;
/// - an empty result gains one (first mora, "no event") pair, since a label
///   sequence has at least one mora.
///
/// Every correction sets `repaired`.
pub fn repair_token_ids(payload: &[u32], vocab: &Vocabulary) -> RepairedIds {
    let pad_id = vocab.prosody_id(ProsodyLabel::Pad);
    let mut pairs = Vec::new();
    let mut pending: Option<u32> = None;
    let mut repaired = false;
    for &id in payload {
        match vocab.kind(id) {
            Ok(TokenKind::Mora(_)) => {
                if let Some(m) = pending.replace(id) {
                    pairs.push((m, pad_id));
                    repaired = true;
                }
            }
            Ok(TokenKind::Prosody(_)) => match pending.take() {
                Some(m) => pairs.push((m, id)),
                None => repaired = true,
            },
            Ok(TokenKind::Bos) | Ok(TokenKind::Eos) | Ok(TokenKind::PadCtl) | Err(_) => {
                repaired = true;
            }
        }
    }
    if pending.is_some() {
        repaired = true;
    }
    if pairs.is_empty() && vocab.n_moras() > 0 {
        pairs.push((0, pad_id));
        repaired = true;
    }
    RepairedIds { pairs, repaired }
}

/// Search strategy for annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Beam { width: usize },
}

/// One annotated utterance: the labels, whether grammar repair touched the
/// raw ids, the search score, and whether generation ended on its own.
#[derive(Debug, Clone)]
pub struct Annotation {
    pub labels: TtsLabelSequence,
    pub repaired: bool,
    pub score: f64,
    pub reached_eos: bool,
}

/// Annotate one utterance's features: run the search, strip the markers,
/// repair the payload onto the grammar, and map ids back to labels.
pub fn annotate(
    model: &AnnotatorModel,
    feats: &AcousticFeatures,
    mode: DecodeMode,
) -> Result<Annotation, ModelError> {
    let scorer = ModelScorer::new(model, feats)?;
    let tokens = DecodeTokens::for_vocab(&model.vocab);
    let max_len = model.config.max_tgt_len;
    let hyp = match mode {
        DecodeMode::Greedy => greedy_decode(&scorer, &tokens, max_len)?,
        DecodeMode::Beam { width } => beam_decode(&scorer, &tokens, width, max_len)?,
    };
    let payload_end = if hyp.reached_eos {
        hyp.ids.len() - 1
    } else {
        hyp.ids.len()
    };
    let repaired_ids = repair_token_ids(&hyp.ids[1..payload_end], &model.vocab);
    let mut items = Vec::with_capacity(repaired_ids.pairs.len());
    for &(m_id, p_id) in &repaired_ids.pairs {
        let mora = match model.vocab.kind(m_id)? {
            TokenKind::Mora(s) => Mora::from_raw(s.to_string()),
            _ => unreachable!("repair only emits mora ids in first position"),
        };
        let prosody = match model.vocab.kind(p_id)? {
            TokenKind::Prosody(p) => p,
            _ => unreachable!("repair only emits prosody ids in second position"),
        };
        items.push((mora, prosody));
    }
    Ok(Annotation {
        labels: TtsLabelSequence::from_pairs(items),
        repaired: repaired_ids.repaired,
        score: hyp.score,
        reached_eos: hyp.reached_eos,
    })
}
