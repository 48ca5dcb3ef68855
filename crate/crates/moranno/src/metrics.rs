//! Evaluation metrics: edit distance, character (mora) error rate, prosody
//! F1, and the multi-system protocol with phoneme-exact filtering.
//!
//! CER is computed on the phoneme stream. Prosody precision/recall/F1 are
//! micro-averaged over position-aligned prosody streams with `*` (Pad) as
//! the background class; an excluded-label set (default `_` and `?`) keeps
//! labels out of scoring that text-side systems read off punctuation.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::label::{ProsodyLabel, ProsodySeq, TtsLabelSequence};

/// Errors raised by metric computation.
#[derive(Debug, Error)]
pub enum MetricError {
    /// CER against an empty reference is undefined.
    #[error("empty reference: CER denominator would be zero")]
    EmptyReference,
    /// Prosody scoring needs equally long streams.
    #[error("length mismatch: reference has {ref_len} labels, hypothesis {hyp_len}")]
    LengthMismatch { ref_len: usize, hyp_len: usize },
    /// Each system must supply exactly one hypothesis per reference.
    #[error("ragged inputs: system `{system}` supplied {got} hypotheses for {expected} references")]
    RaggedInputs {
        system: String,
        expected: usize,
        got: usize,
    },
}

/// Minimum number of insertions, deletions, and substitutions turning `a`
/// into `b`. Classic dynamic program, O(|a|*|b|).
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (n, m) = (a.len(), b.len());
    if n == 0 {
        return m;
    }
    if m == 0 {
        return n;
    }
    // dp[j] holds the previous row; roll forward one row per element of a.
    let mut dp: Vec<usize> = (0..=m).collect();
    for i in 1..=n {
        let mut prev_diag = dp[0];
        dp[0] = i;
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let next = (dp[j] + 1) // deletion
                .min(dp[j - 1] + 1) // insertion
                .min(prev_diag + cost); // substitution or match
            prev_diag = dp[j];
            dp[j] = next;
        }
    }
    dp[m]
}

/// Character error rate: edit distance over reference length.
pub fn cer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    Ok(levenshtein(reference, hypothesis) as f64 / reference.len() as f64)
}

/// Corpus-level CER, micro-aggregated: total edits over total reference
/// tokens. Also returns the mean of per-utterance CERs for transparency.
pub fn corpus_cer<T: PartialEq>(
    references: &[Vec<T>],
    hypotheses: &[Vec<T>],
) -> Result<(f64, f64), MetricError> {
    if references.len() != hypotheses.len() {
        return Err(MetricError::RaggedInputs {
            system: "<corpus>".into(),
            expected: references.len(),
            got: hypotheses.len(),
        });
    }
    let mut total_edits = 0usize;
    let mut total_len = 0usize;
    let mut sum_cer = 0.0;
    for (r, h) in references.iter().zip(hypotheses) {
        if r.is_empty() {
            return Err(MetricError::EmptyReference);
        }
        let edits = levenshtein(r, h);
        total_edits += edits;
        total_len += r.len();
        sum_cer += edits as f64 / r.len() as f64;
    }
    if total_len == 0 {
        return Err(MetricError::EmptyReference);
    }
    Ok((
        total_edits as f64 / total_len as f64,
        sum_cer / references.len() as f64,
    ))
}

/// Micro counts behind a prosody score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ProsodyCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ProsodyCounts {
    pub fn add(&mut self, other: ProsodyCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// Precision/recall/F1 with the all-zero convention.
    ///
    /// When no in-scope label occurs on either side (all counts zero) the
    /// score is 1.0 by convention: nothing was there to find and nothing
    /// spurious was produced.
    pub fn scores(&self) -> (f64, f64, f64) {
        if self.tp == 0 && self.fp == 0 && self.fn_ == 0 {
            return (1.0, 1.0, 1.0);
        }
        let p = if self.tp + self.fp > 0 {
            self.tp as f64 / (self.tp + self.fp) as f64
        } else {
            0.0
        };
        let r = if self.tp + self.fn_ > 0 {
            self.tp as f64 / (self.tp + self.fn_) as f64
        } else {
            0.0
        };
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        (p, r, f1)
    }
}

/// Position-aligned prosody counts for one utterance pair.
///
/// Scoring rule, applied per position with reference label `r` and
/// hypothesis label `h`:
///
/// * `r` excluded: the position is skipped entirely (no TP, FP, or FN).
/// * otherwise `r` in scope (not Pad): TP if `h == r`, else FN.
/// * additionally `h` in scope (not Pad, not excluded) and `h != r`: FP.
///
/// Excluded labels therefore never contribute to any count: a skipped
/// reference position contributes nothing, and an excluded hypothesis label
/// is never a false positive (though missing an in-scope reference label
/// still counts as FN, whatever was emitted instead).
pub fn prosody_counts(
    reference: &ProsodySeq,
    hypothesis: &ProsodySeq,
    excluded: &BTreeSet<ProsodyLabel>,
) -> Result<ProsodyCounts, MetricError> {
    if reference.len() != hypothesis.len() {
        return Err(MetricError::LengthMismatch {
            ref_len: reference.len(),
            hyp_len: hypothesis.len(),
        });
    }
    let in_scope =
        |l: ProsodyLabel| l != ProsodyLabel::Pad && !excluded.contains(&l);
    let mut counts = ProsodyCounts::default();
    for (&r, &h) in reference.iter().zip(hypothesis) {
        if excluded.contains(&r) {
            continue;
        }
        if in_scope(r) {
            if h == r {
                counts.tp += 1;
            } else {
                counts.fn_ += 1;
            }
        }
        if in_scope(h) && h != r {
            counts.fp += 1;
        }
    }
    Ok(counts)
}

/// Prosody precision/recall/F1 for one aligned pair.
pub fn prosody_f1(
    reference: &ProsodySeq,
    hypothesis: &ProsodySeq,
    excluded: &BTreeSet<ProsodyLabel>,
) -> Result<(f64, f64, f64), MetricError> {
    Ok(prosody_counts(reference, hypothesis, excluded)?.scores())
}

/// The default excluded-label set: pause and question (`_,?`), the labels
/// text-side systems read directly off punctuation.
pub fn default_excluded() -> BTreeSet<ProsodyLabel> {
    BTreeSet::from([ProsodyLabel::Pause, ProsodyLabel::Question])
}

/// Parse a comma-separated excluded-label flag value such as `_,?`.
/// An empty string means no exclusions.
pub fn parse_excluded_labels(raw: &str) -> Result<BTreeSet<ProsodyLabel>, String> {
    let mut out = BTreeSet::new();
    for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let label = ProsodyLabel::from_symbol(part)
            .ok_or_else(|| format!("`{part}` is not a prosody symbol"))?;
        out.insert(label);
    }
    Ok(out)
}

/// Per-system slice of an evaluation report.
#[derive(Debug, Clone, Serialize)]
pub struct SystemReport {
    pub name: String,
    /// Micro CER on phoneme streams over all samples.
    pub cer_micro: f64,
    /// Mean of per-utterance CERs.
    pub cer_mean: f64,
    /// Samples where this system's phoneme stream matches the reference.
    pub n_phoneme_exact: usize,
    /// Prosody scores on the all-system phoneme-exact subset.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ProsodyCounts,
}

/// Output of [`evaluation_protocol`].
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub n_total: usize,
    /// Size of the intersection subset: samples every system got
    /// phoneme-exact. Prosody scores are computed on this subset only.
    pub n_phoneme_exact_all_models: usize,
    /// Excluded labels, by surface symbol.
    pub excluded_labels: Vec<String>,
    pub systems: Vec<SystemReport>,
}

/// Multi-system protocol: CER over all samples; prosody scores only on the
/// subset where every system reproduced the reference phoneme stream
/// exactly, so that prosody comparisons are position-aligned and fair.
pub fn evaluation_protocol(
    references: &[TtsLabelSequence],
    systems: &[(String, Vec<TtsLabelSequence>)],
    excluded: &BTreeSet<ProsodyLabel>,
) -> Result<EvalReport, MetricError> {
    for (name, hyps) in systems {
        if hyps.len() != references.len() {
            return Err(MetricError::RaggedInputs {
                system: name.clone(),
                expected: references.len(),
                got: hyps.len(),
            });
        }
    }
    let ref_phonemes: Vec<_> = references.iter().map(|r| r.strip_prosody()).collect();
    let ref_prosody: Vec<_> = references.iter().map(|r| r.prosody()).collect();

    // Phoneme-exact masks, one per system, then their intersection.
    let masks: Vec<Vec<bool>> = systems
        .iter()
        .map(|(_, hyps)| {
            hyps.iter()
                .zip(&ref_phonemes)
                .map(|(h, rp)| &h.strip_prosody() == rp)
                .collect()
        })
        .collect();
    let subset: Vec<usize> = (0..references.len())
        .filter(|&i| masks.iter().all(|m| m[i]))
        .collect();

    let mut out_systems = Vec::with_capacity(systems.len());
    for ((name, hyps), mask) in systems.iter().zip(&masks) {
        let hyp_phonemes: Vec<_> = hyps.iter().map(|h| h.strip_prosody()).collect();
        let (cer_micro, cer_mean) = corpus_cer(&ref_phonemes, &hyp_phonemes)?;
        let mut counts = ProsodyCounts::default();
        for &i in &subset {
            counts.add(prosody_counts(&ref_prosody[i], &hyps[i].prosody(), excluded)?);
        }
        let (precision, recall, f1) = counts.scores();
        out_systems.push(SystemReport {
            name: name.clone(),
            cer_micro,
            cer_mean,
            n_phoneme_exact: mask.iter().filter(|&&b| b).count(),
            precision,
            recall,
            f1,
            counts,
        });
    }
    Ok(EvalReport {
        n_total: references.len(),
        n_phoneme_exact_all_models: subset.len(),
        excluded_labels: excluded.iter().map(|l| l.symbol().to_string()).collect(),
        systems: out_systems,
    })
}

impl EvalReport {
    /// Key/value text rendering.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("n_total\t{}\n", self.n_total));
        out.push_str(&format!(
            "n_phoneme_exact_all_models\t{}\n",
            self.n_phoneme_exact_all_models
        ));
        out.push_str(&format!(
            "excluded_labels\t{}\n",
            self.excluded_labels.join(",")
        ));
        for s in &self.systems {
            out.push_str(&format!("system\t{}\n", s.name));
            out.push_str(&format!("  cer_micro\t{:.6}\n", s.cer_micro));
            out.push_str(&format!("  cer_mean\t{:.6}\n", s.cer_mean));
            out.push_str(&format!("  n_phoneme_exact\t{}\n", s.n_phoneme_exact));
            out.push_str(&format!("  precision\t{:.6}\n", s.precision));
            out.push_str(&format!("  recall\t{:.6}\n", s.recall));
            out.push_str(&format!("  f1\t{:.6}\n", s.f1));
            out.push_str(&format!(
                "  tp/fp/fn\t{}/{}/{}\n",
                s.counts.tp, s.counts.fp, s.counts.fn_
            ));
        }
        out
    }

    /// CSV rendering, one row per system.
    pub fn render_csv(&self) -> String {
        let mut out = String::from(
            "system,cer_micro,cer_mean,n_phoneme_exact,precision,recall,f1,tp,fp,fn\n",
        );
        for s in &self.systems {
            out.push_str(&format!(
                "{},{:.6},{:.6},{},{:.6},{:.6},{:.6},{},{},{}\n",
                s.name,
                s.cer_micro,
                s.cer_mean,
                s.n_phoneme_exact,
                s.precision,
                s.recall,
                s.f1,
                s.counts.tp,
                s.counts.fp,
                s.counts.fn_
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::{parse_label_string, MoraInventory};
    use proptest::prelude::*;
    use ProsodyLabel::*;

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein(&['a', 'b'], &['a', 'b']), 0);
        assert_eq!(levenshtein(&['a', 'b', 'c'], &['a', 'c']), 1); // deletion
        assert_eq!(levenshtein(&['a', 'c'], &['a', 'b', 'c']), 1); // insertion
        assert_eq!(levenshtein(&['a', 'b'], &['a', 'c']), 1); // substitution
        assert_eq!(levenshtein::<char>(&[], &[]), 0);
        assert_eq!(levenshtein(&[] as &[char], &['x', 'y']), 2);
        let kitten: Vec<char> = "kitten".chars().collect();
        let sitting: Vec<char> = "sitting".chars().collect();
        assert_eq!(levenshtein(&kitten, &sitting), 3);
    }

    // Exhaustive recursion straight off the definition, for cross-checking.
    fn lev_recursive(a: &[u8], b: &[u8]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((ha, ta)), Some((hb, tb))) => {
                if ha == hb {
                    lev_recursive(ta, tb)
                } else {
                    1 + lev_recursive(ta, b)
                        .min(lev_recursive(a, tb))
                        .min(lev_recursive(ta, tb))
                }
            }
        }
    }

    #[test]
    fn levenshtein_matches_recursive_definition_small() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let la = rng.random_range(0..=7);
            let lb = rng.random_range(0..=7);
            let a: Vec<u8> = (0..la).map(|_| rng.random_range(0..4)).collect();
            let b: Vec<u8> = (0..lb).map(|_| rng.random_range(0..4)).collect();
            assert_eq!(levenshtein(&a, &b), lev_recursive(&a, &b));
        }
    }

    #[test]
    fn cer_quarter_on_one_substitution() {
        let reference = ['a', 'b', 'c', 'd'];
        let hypothesis = ['a', 'x', 'c', 'd'];
        assert_eq!(cer(&reference, &hypothesis).unwrap(), 0.25);
    }

    #[test]
    fn cer_empty_reference_rejected() {
        assert!(matches!(
            cer(&[] as &[char], &['a']),
            Err(MetricError::EmptyReference)
        ));
    }

    #[test]
    fn corpus_cer_micro_and_mean() {
        // Hand-derived: lengths 4, 2, 2 with 1, 0, 2 edits.
        let refs = vec![
            vec!['a', 'b', 'c', 'd'],
            vec!['e', 'f'],
            vec!['g', 'h'],
        ];
        let hyps = vec![
            vec!['a', 'x', 'c', 'd'],
            vec!['e', 'f'],
            vec!['x', 'y'],
        ];
        let (micro, mean) = corpus_cer(&refs, &hyps).unwrap();
        assert!((micro - 3.0 / 8.0).abs() < 1e-12);
        assert!((mean - (0.25 + 0.0 + 1.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn prosody_f1_worked_example() {
        // ref [ ] * *  vs hyp [ * * * : one hit, one miss.
        let reference = vec![Rise, Fall, Pad, Pad];
        let hypothesis = vec![Rise, Pad, Pad, Pad];
        let (p, r, f1) = prosody_f1(&reference, &hypothesis, &default_excluded()).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(r, 0.5);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn prosody_f1_perfect_and_convention() {
        let reference = vec![Rise, Fall, Pad];
        let (p, r, f1) = prosody_f1(&reference, &reference.clone(), &default_excluded()).unwrap();
        assert_eq!((p, r, f1), (1.0, 1.0, 1.0));

        // No in-scope labels anywhere: 1.0 by convention.
        let reference = vec![Pause, Pad];
        let hypothesis = vec![Pad, Pad];
        let (p, r, f1) = prosody_f1(&reference, &hypothesis, &default_excluded()).unwrap();
        assert_eq!((p, r, f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn prosody_length_mismatch_rejected() {
        let reference = vec![Rise, Fall];
        let hypothesis = vec![Rise];
        assert!(matches!(
            prosody_f1(&reference, &hypothesis, &default_excluded()),
            Err(MetricError::LengthMismatch {
                ref_len: 2,
                hyp_len: 1
            })
        ));
    }

    #[test]
    fn excluded_labels_contribute_nothing() {
        let excluded = default_excluded();
        // Excluded reference positions are skipped even when the hypothesis
        // disagrees; excluded hypothesis labels are never false positives.
        let reference = vec![Pause, Question, Rise, Pad];
        let hypothesis = vec![Rise, Pad, Rise, Question];
        let c = prosody_counts(&reference, &hypothesis, &excluded).unwrap();
        assert_eq!(c, ProsodyCounts { tp: 1, fp: 0, fn_: 0 });

        // Missing an in-scope label is an FN even if a pause was emitted.
        let reference = vec![Rise, Pad];
        let hypothesis = vec![Pause, Pad];
        let c = prosody_counts(&reference, &hypothesis, &excluded).unwrap();
        assert_eq!(c, ProsodyCounts { tp: 0, fp: 0, fn_: 1 });
    }

    #[test]
    fn parse_excluded_flag() {
        let set = parse_excluded_labels("_,?").unwrap();
        assert_eq!(set, default_excluded());
        assert!(parse_excluded_labels("").unwrap().is_empty());
        assert!(parse_excluded_labels("x").is_err());
    }

    fn seqs(texts: &[&str]) -> Vec<TtsLabelSequence> {
        let inv = MoraInventory::default_cv();
        texts
            .iter()
            .map(|t| parse_label_string(t, &inv).unwrap())
            .collect()
    }

    #[test]
    fn protocol_intersects_masks() {
        // Three systems over five samples with known per-system exactness
        // 11100, 11110, 11101: the intersection is samples 0-2.
        let refs = seqs(&["a *", "ka [", "me ]", "mo *", "su #"]);
        let sys_a = seqs(&["a *", "ka [", "me ]", "su *", "su #"]);
        let sys_b = seqs(&["a *", "ka [", "me ]", "mo *", "a #"]);
        let sys_c = seqs(&["a *", "ka [", "me ]", "mo *", "su #"]);
        let report = evaluation_protocol(
            &refs,
            &[
                ("A".into(), sys_a),
                ("B".into(), sys_b),
                ("C".into(), sys_c),
            ],
            &default_excluded(),
        )
        .unwrap();
        assert_eq!(report.n_total, 5);
        assert_eq!(report.n_phoneme_exact_all_models, 3);
        assert_eq!(report.systems[0].n_phoneme_exact, 4);
        assert_eq!(report.systems[1].n_phoneme_exact, 4);
        assert_eq!(report.systems[2].n_phoneme_exact, 5);
        // All three systems match the references on the subset.
        for s in &report.systems {
            assert_eq!(s.f1, 1.0);
        }
    }

    #[test]
    fn protocol_single_perfect_system() {
        let refs = seqs(&["a [ me ]", "ka * mo #"]);
        let report = evaluation_protocol(
            &refs,
            &[("S".into(), refs.clone())],
            &default_excluded(),
        )
        .unwrap();
        assert_eq!(report.n_phoneme_exact_all_models, 2);
        assert_eq!(report.systems[0].cer_micro, 0.0);
        assert_eq!(report.systems[0].f1, 1.0);
    }

    #[test]
    fn protocol_rejects_ragged_inputs() {
        let refs = seqs(&["a *", "ka ["]);
        let short = seqs(&["a *"]);
        assert!(matches!(
            evaluation_protocol(&refs, &[("S".into(), short)], &default_excluded()),
            Err(MetricError::RaggedInputs { .. })
        ));
    }

    #[test]
    fn protocol_is_deterministic() {
        let refs = seqs(&["a [ me ]", "ka * mo #", "su _ se ?"]);
        let hyps = seqs(&["a [ me *", "ka * mo #", "su _ se ?"]);
        let systems = vec![("S".to_string(), hyps)];
        let a = evaluation_protocol(&refs, &systems, &default_excluded()).unwrap();
        let b = evaluation_protocol(&refs, &systems, &default_excluded()).unwrap();
        assert_eq!(a.render_csv(), b.render_csv());
        assert_eq!(a.render_text(), b.render_text());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        // Metric axioms on random token lists.
        #[test]
        fn levenshtein_axioms(
            a in prop::collection::vec(0u8..5, 0..15),
            b in prop::collection::vec(0u8..5, 0..15),
        ) {
            let d = levenshtein(&a, &b);
            prop_assert_eq!(d, levenshtein(&b, &a)); // symmetry
            prop_assert!(d <= a.len().max(b.len())); // upper bound
            prop_assert!(d >= a.len().abs_diff(b.len())); // lower bound
            prop_assert_eq!(d == 0, a == b); // identity
        }

        #[test]
        fn levenshtein_triangle(
            a in prop::collection::vec(0u8..4, 0..10),
            b in prop::collection::vec(0u8..4, 0..10),
            c in prop::collection::vec(0u8..4, 0..10),
        ) {
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        }
    }
}
