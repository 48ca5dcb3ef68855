//! A speech-recognizer surrogate: corrupts a transcript by replacing whole
//! words, modeling recognition errors upstream of text processing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lexicon::Lexicon;
use super::SynthError;

/// Replace each word with probability `err_rate` by a different word drawn
/// uniformly from the lexicon. Returns the corrupted transcript and how
/// many words were replaced.
///
/// A one-word lexicon has no different word to substitute, so nothing is
/// replaced there.
pub fn asr_surrogate(
    transcript: &str,
    lexicon: &Lexicon,
    err_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(String, usize), SynthError> {
    if !(0.0..=1.0).contains(&err_rate) {
        return Err(SynthError::InvalidRate(format!(
            "err_rate {err_rate} outside [0, 1]"
        )));
    }
    if lexicon.is_empty() {
        return Err(SynthError::LexiconShape("empty lexicon".into()));
    }
    let mut out = Vec::new();
    let mut n_corrupted = 0usize;
    for word in transcript.split_whitespace() {
        let corrupt = err_rate > 0.0 && rng.random::<f64>() < err_rate;
        if corrupt {
            let candidates: Vec<&str> = lexicon
                .entries()
                .iter()
                .map(|e| e.grapheme.as_str())
                .filter(|g| *g != word)
                .collect();
            if let Some(&repl) = candidates.get(rng.random_range(0..candidates.len().max(1))) {
                out.push(repl.to_string());
                n_corrupted += 1;
                continue;
            }
        }
        out.push(word.to_string());
    }
    Ok((out.join(" "), n_corrupted))
}

/// Convenience wrapper seeding its own stream.
pub fn asr_surrogate_seeded(
    transcript: &str,
    lexicon: &Lexicon,
    err_rate: f64,
    seed: u64,
) -> Result<(String, usize), SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    asr_surrogate(transcript, lexicon, err_rate, &mut rng)
}
