//! The text-processing cascade baseline: transcript in, labels out, with no
//! access to audio.
//!
//! This is the conventional pipeline the audio-conditioned annotator is
//! measured against. It spells each word from the lexicon, resolves
//! ambiguous readings by a fixed policy (it cannot hear which reading was
//! actually spoken), inserts a phrase boundary after every non-final word,
//! and never produces pauses or question marks (text alone carries no
//! evidence for either). A recognition-error surrogate can corrupt the
//! transcript first, modeling a speech-recognizer front end.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::label::{Mora, MoraInventory, ProsodyLabel, TtsLabelSequence};
use crate::synth::asr::asr_surrogate;
use crate::synth::lexicon::{LexEntry, Lexicon, Reading};
use crate::synth::SynthError;

#[derive(Debug, Error)]
pub enum CascadeError {
    /// A word that is neither in the lexicon nor spellable from inventory
    /// moras.
    #[error("cannot spell word {0:?} from the mora inventory")]
    Unspellable(String),
    #[error("empty transcript")]
    EmptyTranscript,
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// How to pick a reading for an ambiguous word without audio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolutionPolicy {
    /// Highest prior weight, first entry on ties.
    MajorityPrior,
    /// Whatever reading is listed first.
    FirstEntry,
}

fn pick_reading(entry: &LexEntry, policy: ResolutionPolicy) -> &Reading {
    match policy {
        ResolutionPolicy::FirstEntry => &entry.readings[0],
        ResolutionPolicy::MajorityPrior => {
            let mut best = &entry.readings[0];
            for r in &entry.readings[1..] {
                if r.weight > best.weight {
                    best = r;
                }
            }
            best
        }
    }
}

/// Spell an out-of-lexicon word by greedy longest-prefix matching against
/// the inventory tokens.
fn spell_fallback(word: &str, inventory: &MoraInventory) -> Result<Vec<Mora>, CascadeError> {
    // Longest tokens first so "ka" wins over "k" + "a" style splits.
    let mut tokens: Vec<&str> = inventory.tokens().iter().map(|s| s.as_str()).collect();
    tokens.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    let mut rest = word;
    let mut moras = Vec::new();
    'outer: while !rest.is_empty() {
        for t in &tokens {
            if let Some(tail) = rest.strip_prefix(t) {
                moras.push(Mora::from_raw(t.to_string()));
                rest = tail;
                continue 'outer;
            }
        }
        return Err(CascadeError::Unspellable(word.to_string()));
    }
    Ok(moras)
}

/// Labels produced from text alone, plus how many words fell back to
/// spelled-out neutral prosody.
#[derive(Debug, Clone, PartialEq)]
pub struct TextProcessOutput {
    pub labels: TtsLabelSequence,
    pub n_fallback: usize,
}

/// Turn a transcript into labels: per-word reading lookup (or spelled
/// fallback), phrase boundaries between words.
pub fn text_process(
    transcript: &str,
    lexicon: &Lexicon,
    inventory: &MoraInventory,
    policy: ResolutionPolicy,
) -> Result<TextProcessOutput, CascadeError> {
    let words: Vec<&str> = transcript.split_whitespace().collect();
    if words.is_empty() {
        return Err(CascadeError::EmptyTranscript);
    }
    let mut items: Vec<(Mora, ProsodyLabel)> = Vec::new();
    let mut n_fallback = 0usize;
    for (w, word) in words.iter().enumerate() {
        match lexicon.get(word) {
            Some(entry) => {
                let reading = pick_reading(entry, policy);
                for (mora, &p) in entry.moras.iter().zip(&reading.prosody) {
                    items.push((mora.clone(), p));
                }
            }
            None => {
                n_fallback += 1;
                for mora in spell_fallback(word, inventory)? {
                    items.push((mora, ProsodyLabel::Pad));
                }
            }
        }
        if w + 1 < words.len() {
            items
                .last_mut()
                .expect("words spell to at least one mora")
                .1 = ProsodyLabel::PhraseBoundary;
        }
    }
    Ok(TextProcessOutput {
        labels: TtsLabelSequence::from_pairs(items),
        n_fallback,
    })
}

/// Degradation counters from a cascade run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CascadeStats {
    /// Words the recognition surrogate replaced.
    pub n_corrupted: usize,
    /// Words text processing had to spell without a lexicon entry.
    pub n_fallback: usize,
}

/// The full cascade: recognition-error surrogate, then text processing.
pub fn cascade_annotate(
    transcript: &str,
    lexicon: &Lexicon,
    inventory: &MoraInventory,
    policy: ResolutionPolicy,
    err_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(TtsLabelSequence, CascadeStats), CascadeError> {
    let (heard, n_corrupted) = asr_surrogate(transcript, lexicon, err_rate, rng)?;
    let out = text_process(&heard, lexicon, inventory, policy)?;
    Ok((
        out.labels,
        CascadeStats {
            n_corrupted,
            n_fallback: out.n_fallback,
        },
    ))
}

/// Convenience wrapper seeding its own corruption stream, so callers can
/// give each utterance an independent derived seed and process items in
/// parallel without changing the result.
pub fn cascade_annotate_seeded(
    transcript: &str,
    lexicon: &Lexicon,
    inventory: &MoraInventory,
    policy: ResolutionPolicy,
    err_rate: f64,
    seed: u64,
) -> Result<(TtsLabelSequence, CascadeStats), CascadeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cascade_annotate(transcript, lexicon, inventory, policy, err_rate, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::corpus::{gen_corpus, CorpusConfig};
    use crate::synth::lexicon::{gen_lexicon, LexiconConfig};
    use rand::SeedableRng;

    fn inv() -> MoraInventory {
        MoraInventory::default_cv()
    }

    fn entry(grapheme: &str, moras: &[&str], readings: Vec<(Vec<ProsodyLabel>, f64)>) -> LexEntry {
        LexEntry {
            grapheme: grapheme.to_string(),
            moras: moras.iter().map(|m| Mora::from_raw(m.to_string())).collect(),
            readings: readings
                .into_iter()
                .map(|(prosody, weight)| Reading { prosody, weight })
                .collect(),
        }
    }

    #[test]
    fn policies_differ_when_first_entry_is_minority() {
        use ProsodyLabel::*;
        let lex = Lexicon::new(vec![entry(
            "kakiku",
            &["ka", "ki", "ku"],
            vec![
                (vec![Rise, Fall, Pad], 0.3),
                (vec![Fall, Rise, Pad], 0.7),
            ],
        )])
        .unwrap();
        let first = text_process("kakiku", &lex, &inv(), ResolutionPolicy::FirstEntry).unwrap();
        let majority =
            text_process("kakiku", &lex, &inv(), ResolutionPolicy::MajorityPrior).unwrap();
        assert_eq!(first.labels.prosody(), vec![Rise, Fall, Pad]);
        assert_eq!(majority.labels.prosody(), vec![Fall, Rise, Pad]);
    }

    #[test]
    fn boundaries_go_between_words() {
        use ProsodyLabel::*;
        let lex = Lexicon::new(vec![
            entry("ka", &["ka"], vec![(vec![Pad], 1.0)]),
            entry("mi", &["mi"], vec![(vec![Pad], 1.0)]),
            entry("su", &["su"], vec![(vec![Pad], 1.0)]),
        ])
        .unwrap();
        let out = text_process("ka mi su", &lex, &inv(), ResolutionPolicy::MajorityPrior).unwrap();
        assert_eq!(
            out.labels.prosody(),
            vec![PhraseBoundary, PhraseBoundary, Pad]
        );
        assert_eq!(out.n_fallback, 0);
    }

    #[test]
    fn unknown_words_spell_out_neutrally() {
        use ProsodyLabel::*;
        let lex = Lexicon::new(vec![entry("ka", &["ka"], vec![(vec![Pad], 1.0)])]).unwrap();
        let out = text_process("ka kimi", &lex, &inv(), ResolutionPolicy::MajorityPrior).unwrap();
        assert_eq!(out.n_fallback, 1);
        assert_eq!(out.labels.serialize_label_string(), "ka # ki * mi *");

        // Unspellable input surfaces a typed error.
        match text_process("xyz", &lex, &inv(), ResolutionPolicy::MajorityPrior) {
            Err(CascadeError::Unspellable(w)) => assert_eq!(w, "xyz"),
            other => panic!("expected unspellable, got {other:?}"),
        }
        assert!(matches!(
            text_process("  ", &lex, &inv(), ResolutionPolicy::MajorityPrior),
            Err(CascadeError::EmptyTranscript)
        ));
    }

    #[test]
    fn exact_on_unambiguous_text_without_audio_marks() {
        // With no homographs, no pauses, and no questions, text processing
        // reconstructs the corpus labels perfectly.
        let inventory = inv();
        let lex = gen_lexicon(
            &LexiconConfig {
                n_words: 40,
                homograph_rate: 0.0,
                majority_weight: 0.7,
            },
            &inventory,
            3,
        )
        .unwrap();
        let cfg = CorpusConfig {
            n_train: 100,
            n_val: 0,
            n_test: 0,
            pause_rate: 0.0,
            question_rate: 0.0,
            ..CorpusConfig::default()
        };
        let corpus = gen_corpus(&lex, &cfg, 5).unwrap();
        for u in &corpus.train {
            let out =
                text_process(&u.grapheme, &lex, &inventory, ResolutionPolicy::MajorityPrior)
                    .unwrap();
            assert_eq!(
                out.labels.serialize_label_string(),
                u.labels.serialize_label_string(),
                "{}",
                u.grapheme
            );
        }
    }

    #[test]
    fn homograph_recovery_sits_at_the_majority_prior() {
        // The cascade always picks the majority reading, which is right
        // about 70% of the time by construction.
        let inventory = inv();
        let lex = gen_lexicon(
            &LexiconConfig {
                n_words: 30,
                homograph_rate: 1.0,
                majority_weight: 0.7,
            },
            &inventory,
            7,
        )
        .unwrap();
        let cfg = CorpusConfig {
            n_train: 2000,
            n_val: 0,
            n_test: 0,
            words_min: 1,
            words_max: 1,
            pause_rate: 0.0,
            question_rate: 0.0,
        };
        let corpus = gen_corpus(&lex, &cfg, 9).unwrap();
        let mut hits = 0usize;
        for u in &corpus.train {
            let out =
                text_process(&u.grapheme, &lex, &inventory, ResolutionPolicy::MajorityPrior)
                    .unwrap();
            if out.labels.prosody() == u.labels.prosody() {
                hits += 1;
            }
        }
        let acc = hits as f64 / corpus.train.len() as f64;
        assert!((acc - 0.7).abs() < 0.03, "homograph accuracy {acc}");
    }

    #[test]
    fn recognition_errors_corrupt_phonemes() {
        let inventory = inv();
        let lex = gen_lexicon(&LexiconConfig::default(), &inventory, 11).unwrap();
        let cfg = CorpusConfig {
            n_train: 50,
            n_val: 0,
            n_test: 0,
            ..CorpusConfig::default()
        };
        let corpus = gen_corpus(&lex, &cfg, 13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut corrupted_total = 0usize;
        let mut phoneme_mismatches = 0usize;
        for u in &corpus.train {
            let (labels, stats) = cascade_annotate(
                &u.grapheme,
                &lex,
                &inventory,
                ResolutionPolicy::MajorityPrior,
                1.0,
                &mut rng,
            )
            .unwrap();
            corrupted_total += stats.n_corrupted;
            assert_eq!(stats.n_corrupted, u.grapheme.split(' ').count());
            assert_eq!(stats.n_fallback, 0, "replacements are lexicon words");
            if labels.strip_prosody() != u.labels.strip_prosody() {
                phoneme_mismatches += 1;
            }
        }
        assert!(corrupted_total > 0);
        // Replacing every word with a different one almost always changes
        // the phoneme stream.
        assert!(phoneme_mismatches >= 45, "{phoneme_mismatches}/50");
    }

    #[test]
    fn zero_error_cascade_equals_plain_text_processing() {
        let inventory = inv();
        let lex = gen_lexicon(&LexiconConfig::default(), &inventory, 17).unwrap();
        let cfg = CorpusConfig {
            n_train: 20,
            n_val: 0,
            n_test: 0,
            ..CorpusConfig::default()
        };
        let corpus = gen_corpus(&lex, &cfg, 19).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for u in &corpus.train {
            let (labels, stats) = cascade_annotate(
                &u.grapheme,
                &lex,
                &inventory,
                ResolutionPolicy::MajorityPrior,
                0.0,
                &mut rng,
            )
            .unwrap();
            let plain =
                text_process(&u.grapheme, &lex, &inventory, ResolutionPolicy::MajorityPrior)
                    .unwrap();
            assert_eq!(labels, plain.labels);
            assert_eq!(stats.n_corrupted, 0);
        }
    }
}
