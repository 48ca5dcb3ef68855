//! The articulation model: labels -> feature frames, its exact inverse at
//! zero noise, and speaker parameter estimation.
//!
//! Each mora renders as 2-5 consecutive frames of a 12-channel feature
//! vector:
//!
//! | channels | content                                                  |
//! |----------|----------------------------------------------------------|
//! | 0-7      | a fixed pseudo-random embedding of the mora identity     |
//! | 8        | pitch level, stepped by rise/fall marks, reset at phrase |
//! |          | boundaries, ramped inside question-marked moras          |
//! | 9        | energy: 1 everywhere except pause moras (0)              |
//! | 10       | onset pulse: 1 on each mora's first frame                |
//! | 11       | juncture cue: 1 on the last frame of a boundary mora     |
//!
//! The pitch level sequence is `L_1 = pitch_base`, then after mora m:
//! rise adds `rise_delta`, fall subtracts `fall_delta`, a phrase boundary
//! resets to `pitch_base`, anything else leaves the level alone. A
//! question-marked mora keeps its level for the following mora but ramps
//! `rise_delta` upward across its own frames. Optional Gaussian noise is
//! added to every channel.
//!
//! At zero noise every prosody choice leaves a distinct, recoverable trace,
//! except a rise or fall on the utterance-final mora (no following mora can
//! reveal the step); [`inverse_articulate`] reads such a mora as neutral.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::label::{Mora, MoraInventory, ProsodyLabel, TtsLabelSequence};
use crate::model::tensor::Mat;
use crate::model::AcousticFeatures;
use crate::util::fnv1a64;

use super::{SpeakerParams, SynthError};

/// Total channels per frame.
pub const FEATURE_DIM: usize = 12;
/// Width of the mora identity embedding (channels 0..8).
pub const EMBEDDING_DIM: usize = 8;
const CH_PITCH: usize = 8;
const CH_ENERGY: usize = 9;
const CH_ONSET: usize = 10;
const CH_JUNCTURE: usize = 11;

/// Seed salt for the embedding table; embeddings depend only on the mora
/// token string, never on inventory order.
const EMBEDDING_SALT: u64 = 0x6d6f_7261_5f65_6d62;

/// Fixed per-mora identity vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MoraEmbeddings {
    table: BTreeMap<String, [f64; EMBEDDING_DIM]>,
}

impl MoraEmbeddings {
    /// Derive the embedding of every inventory mora: standard normal
    /// entries from a stream seeded by the token string.
    pub fn derive(inventory: &MoraInventory) -> Self {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut table = BTreeMap::new();
        for tok in inventory.tokens() {
            let mut rng =
                ChaCha8Rng::seed_from_u64(EMBEDDING_SALT ^ fnv1a64(tok.as_bytes()));
            let mut v = [0.0; EMBEDDING_DIM];
            for x in &mut v {
                *x = normal.sample(&mut rng);
            }
            table.insert(tok.clone(), v);
        }
        MoraEmbeddings { table }
    }

    pub fn get(&self, mora: &Mora) -> Option<&[f64; EMBEDDING_DIM]> {
        self.table.get(mora.as_str())
    }

    /// The known mora whose embedding is closest (L2) to `v`.
    pub fn nearest(&self, v: &[f64]) -> Option<&str> {
        let mut best: Option<(&str, f64)> = None;
        for (tok, e) in &self.table {
            let d2: f64 = e.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            match best {
                Some((_, bd)) if d2 >= bd => {}
                _ => best = Some((tok, d2)),
            }
        }
        best.map(|(t, _)| t)
    }
}

/// Pitch level of each mora: base, stepped by the previous mora's mark.
pub fn pitch_levels(labels: &TtsLabelSequence, params: &SpeakerParams) -> Vec<f64> {
    let mut levels = Vec::with_capacity(labels.len());
    let mut level = params.pitch_base;
    for (_, prosody) in labels.items() {
        levels.push(level);
        match prosody {
            ProsodyLabel::Rise => level += params.rise_delta,
            ProsodyLabel::Fall => level -= params.fall_delta,
            ProsodyLabel::PhraseBoundary => level = params.pitch_base,
            ProsodyLabel::Pause | ProsodyLabel::Question | ProsodyLabel::Pad => {}
        }
    }
    levels
}

/// Render labels to feature frames. Frame counts per mora are drawn from
/// the tempo range, then optional Gaussian noise lands on every channel;
/// both use the stream seeded by `seed`, so output is a pure function of
/// `(labels, params, seed)`.
pub fn articulate(
    labels: &TtsLabelSequence,
    embeddings: &MoraEmbeddings,
    params: &SpeakerParams,
    seed: u64,
) -> Result<AcousticFeatures, SynthError> {
    params.validate()?;
    if labels.is_empty() {
        return Err(SynthError::EmptyInput("label sequence"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let durations: Vec<usize> = (0..labels.len())
        .map(|_| rng.random_range(params.tempo_min..=params.tempo_max) as usize)
        .collect();
    let levels = pitch_levels(labels, params);
    let n_frames: usize = durations.iter().sum();
    let mut frames = Mat::zeros(n_frames, FEATURE_DIM);
    let mut row = 0usize;
    for (i, (mora, prosody)) in labels.items().iter().enumerate() {
        let emb = embeddings
            .get(mora)
            .ok_or_else(|| SynthError::UnknownMora(mora.as_str().to_string()))?;
        let d = durations[i];
        for k in 0..d {
            let r = frames.row_mut(row);
            r[..EMBEDDING_DIM].copy_from_slice(emb);
            let ramp = if *prosody == ProsodyLabel::Question {
                params.rise_delta * k as f64 / (d - 1) as f64
            } else {
                0.0
            };
            r[CH_PITCH] = levels[i] + ramp;
            r[CH_ENERGY] = if *prosody == ProsodyLabel::Pause {
                0.0
            } else {
                1.0
            };
            r[CH_ONSET] = if k == 0 { 1.0 } else { 0.0 };
            r[CH_JUNCTURE] = if k == d - 1 && *prosody == ProsodyLabel::PhraseBoundary {
                1.0
            } else {
                0.0
            };
            row += 1;
        }
    }
    if params.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, params.noise_sigma).expect("validated sigma");
        for v in &mut frames.data {
            *v += normal.sample(&mut rng);
        }
    }
    AcousticFeatures::new(frames).map_err(|_| {
        SynthError::Undecodable("articulation produced non-finite values".into())
    })
}

/// Split frames into per-mora segments by the onset channel. Returns frame
/// ranges `[start, end)`.
fn segment_by_onset(feats: &AcousticFeatures) -> Result<Vec<(usize, usize)>, SynthError> {
    let m = feats.frames();
    if m.rows == 0 {
        return Err(SynthError::EmptyInput("feature matrix"));
    }
    if m.cols != FEATURE_DIM {
        return Err(SynthError::DimMismatch {
            expected: FEATURE_DIM,
            got: m.cols,
        });
    }
    if m.at(0, CH_ONSET) <= 0.5 {
        return Err(SynthError::Undecodable(
            "first frame carries no onset pulse".into(),
        ));
    }
    let mut starts: Vec<usize> = (0..m.rows)
        .filter(|&r| m.at(r, CH_ONSET) > 0.5)
        .collect();
    starts.push(m.rows);
    Ok(starts.windows(2).map(|w| (w[0], w[1])).collect())
}

/// Recover the label sequence from feature frames.
///
/// Exact whenever the features were articulated at zero noise and the final
/// mora carries no rise or fall mark; small noise is tolerated as long as
/// no channel crosses its decision threshold.
pub fn inverse_articulate(
    feats: &AcousticFeatures,
    embeddings: &MoraEmbeddings,
    params: &SpeakerParams,
) -> Result<TtsLabelSequence, SynthError> {
    params.validate()?;
    let segments = segment_by_onset(feats)?;
    let m = feats.frames();
    // First-frame pitch per segment is the mora's level; the question ramp
    // only bends later frames.
    let levels: Vec<f64> = segments.iter().map(|&(s, _)| m.at(s, CH_PITCH)).collect();
    let mut items = Vec::with_capacity(segments.len());
    for (i, &(start, end)) in segments.iter().enumerate() {
        let d = end - start;
        let mut mean_emb = [0.0; EMBEDDING_DIM];
        let mut mean_energy = 0.0;
        for r in start..end {
            for (acc, v) in mean_emb.iter_mut().zip(&m.row(r)[..EMBEDDING_DIM]) {
                *acc += v;
            }
            mean_energy += m.at(r, CH_ENERGY);
        }
        for v in &mut mean_emb {
            *v /= d as f64;
        }
        mean_energy /= d as f64;
        let tok = embeddings
            .nearest(&mean_emb)
            .ok_or_else(|| SynthError::Undecodable("empty embedding table".into()))?;
        let mora = Mora::from_raw(tok.to_string());

        let juncture = m.at(end - 1, CH_JUNCTURE) > 0.5;
        let slope = m.at(end - 1, CH_PITCH) - m.at(start, CH_PITCH);
        let prosody = if juncture {
            ProsodyLabel::PhraseBoundary
        } else if mean_energy < 0.5 {
            ProsodyLabel::Pause
        } else if d >= 2 && slope > params.rise_delta * 0.5 {
            ProsodyLabel::Question
        } else if i + 1 < levels.len() {
            let step = levels[i + 1] - levels[i];
            if step > params.rise_delta * 0.5 {
                ProsodyLabel::Rise
            } else if step < -params.fall_delta * 0.5 {
                ProsodyLabel::Fall
            } else {
                ProsodyLabel::Pad
            }
        } else {
            ProsodyLabel::Pad
        };
        items.push((mora, prosody));
    }
    Ok(TtsLabelSequence::from_pairs(items))
}

/// Estimate speaker parameters from labeled features.
///
/// Needs at least 10 utterances and at least one observed rise and fall
/// transition; durations come from onset segmentation, pitch parameters
/// from per-mora levels, and the noise level from energy-channel residuals.
pub fn fit_speaker(
    data: &[(TtsLabelSequence, AcousticFeatures)],
) -> Result<SpeakerParams, SynthError> {
    const MIN_UTTERANCES: usize = 10;
    if data.len() < MIN_UTTERANCES {
        return Err(SynthError::InsufficientData(format!(
            "need at least {MIN_UTTERANCES} labeled utterances, got {}",
            data.len()
        )));
    }
    let mut base_samples = Vec::new();
    let mut rise_samples = Vec::new();
    let mut fall_samples = Vec::new();
    let mut dur_min = usize::MAX;
    let mut dur_max = 0usize;
    let mut energy_sq_sum = 0.0;
    let mut energy_n = 0usize;
    for (labels, feats) in data {
        let segments = segment_by_onset(feats)?;
        if segments.len() != labels.len() {
            return Err(SynthError::Undecodable(format!(
                "{} onset segments but {} labels",
                segments.len(),
                labels.len()
            )));
        }
        let m = feats.frames();
        let levels: Vec<f64> = segments.iter().map(|&(s, _)| m.at(s, CH_PITCH)).collect();
        base_samples.push(levels[0]);
        for (i, (_, prosody)) in labels.items().iter().enumerate() {
            let (start, end) = segments[i];
            let d = end - start;
            dur_min = dur_min.min(d);
            dur_max = dur_max.max(d);
            let expected_energy = if *prosody == ProsodyLabel::Pause {
                0.0
            } else {
                1.0
            };
            for r in start..end {
                let resid = m.at(r, CH_ENERGY) - expected_energy;
                energy_sq_sum += resid * resid;
                energy_n += 1;
            }
            if i + 1 < levels.len() {
                match prosody {
                    ProsodyLabel::Rise => rise_samples.push(levels[i + 1] - levels[i]),
                    ProsodyLabel::Fall => fall_samples.push(levels[i] - levels[i + 1]),
                    ProsodyLabel::PhraseBoundary => base_samples.push(levels[i + 1]),
                    _ => {}
                }
            }
        }
    }
    if rise_samples.is_empty() || fall_samples.is_empty() {
        return Err(SynthError::InsufficientData(
            "no rise or no fall transitions observed".into(),
        ));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(SpeakerParams {
        pitch_base: mean(&base_samples),
        rise_delta: mean(&rise_samples),
        fall_delta: mean(&fall_samples),
        tempo_min: dur_min as u32,
        tempo_max: dur_max as u32,
        noise_sigma: (energy_sq_sum / energy_n as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::IndexedRandom;

    fn inv() -> MoraInventory {
        MoraInventory::default_cv()
    }

    fn seq(pairs: &[(&str, ProsodyLabel)]) -> TtsLabelSequence {
        TtsLabelSequence::from_pairs(
            pairs
                .iter()
                .map(|(m, p)| (Mora::from_raw(m.to_string()), *p))
                .collect(),
        )
    }

    /// Random label sequence whose final mora avoids rise/fall (which are
    /// invisible there), mirroring what real corpora produce.
    fn random_articulable(rng: &mut ChaCha8Rng, inventory: &MoraInventory) -> TtsLabelSequence {
        use ProsodyLabel::*;
        let toks = inventory.tokens();
        let len = rng.random_range(3..10usize);
        let mid = [Rise, Fall, PhraseBoundary, Pause, Pad, Pad];
        let last = [Pause, PhraseBoundary, Question, Pad];
        let items = (0..len)
            .map(|i| {
                let mora = Mora::from_raw(toks[rng.random_range(0..toks.len())].clone());
                let prosody = if i + 1 == len {
                    *last.choose(rng).unwrap()
                } else {
                    *mid.choose(rng).unwrap()
                };
                (mora, prosody)
            })
            .collect();
        TtsLabelSequence::from_pairs(items)
    }

    #[test]
    fn embeddings_are_stable_and_distinct() {
        let e1 = MoraEmbeddings::derive(&inv());
        let e2 = MoraEmbeddings::derive(&inv());
        assert_eq!(e1, e2);
        let a = e1.get(&Mora::from_raw("a")).unwrap();
        let ka = e1.get(&Mora::from_raw("ka")).unwrap();
        assert_ne!(a, ka);
        // Nearest recovers each token from its own embedding.
        for tok in inv().tokens() {
            let e = e1.get(&Mora::from_raw(tok.clone())).unwrap();
            assert_eq!(e1.nearest(e), Some(tok.as_str()));
        }
    }

    #[test]
    fn pitch_levels_follow_marks() {
        use ProsodyLabel::*;
        let labels = seq(&[
            ("a", Pad),
            ("i", Rise),
            ("u", Pad),
            ("e", Fall),
            ("o", PhraseBoundary),
            ("a", Question),
            ("i", Pad),
        ]);
        let p = SpeakerParams::default();
        let levels = pitch_levels(&labels, &p);
        let expect = [1.0, 1.0, 1.6, 1.6, 1.1, 1.0, 1.0];
        for (l, e) in levels.iter().zip(expect) {
            assert!((l - e).abs() < 1e-12, "{levels:?}");
        }
    }

    #[test]
    fn frames_have_documented_structure() {
        use ProsodyLabel::*;
        let labels = seq(&[("a", Pause), ("i", PhraseBoundary), ("u", Pad)]);
        let emb = MoraEmbeddings::derive(&inv());
        let p = SpeakerParams::default();
        let feats = articulate(&labels, &emb, &p, 77).unwrap();
        let segs = segment_by_onset(&feats).unwrap();
        assert_eq!(segs.len(), 3);
        let m = feats.frames();
        for (i, &(s, e)) in segs.iter().enumerate() {
            let d = e - s;
            assert!((2..=5).contains(&d));
            // Onset exactly once per segment.
            for r in s..e {
                assert_eq!(m.at(r, CH_ONSET), if r == s { 1.0 } else { 0.0 });
            }
            // Energy zero on the pause mora, one elsewhere.
            let want_energy = if i == 0 { 0.0 } else { 1.0 };
            for r in s..e {
                assert_eq!(m.at(r, CH_ENERGY), want_energy);
            }
            // Juncture cue only on the boundary mora's final frame.
            for r in s..e {
                let want = if i == 1 && r == e - 1 { 1.0 } else { 0.0 };
                assert_eq!(m.at(r, CH_JUNCTURE), want);
            }
        }
    }

    #[test]
    fn question_ramps_inside_the_mora_only() {
        use ProsodyLabel::*;
        let labels = seq(&[("a", Question), ("i", Pad)]);
        let emb = MoraEmbeddings::derive(&inv());
        let p = SpeakerParams::default();
        let feats = articulate(&labels, &emb, &p, 3).unwrap();
        let segs = segment_by_onset(&feats).unwrap();
        let m = feats.frames();
        let (s, e) = segs[0];
        assert_eq!(m.at(s, CH_PITCH), 1.0);
        assert!((m.at(e - 1, CH_PITCH) - (1.0 + p.rise_delta)).abs() < 1e-12);
        // The following mora starts back at the unchanged level.
        let (s2, _) = segs[1];
        assert_eq!(m.at(s2, CH_PITCH), 1.0);
    }

    #[test]
    fn inverse_is_exact_at_zero_noise() {
        let inventory = inv();
        let emb = MoraEmbeddings::derive(&inventory);
        let p = SpeakerParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for i in 0..200 {
            let labels = random_articulable(&mut rng, &inventory);
            let feats = articulate(&labels, &emb, &p, 1000 + i).unwrap();
            let back = inverse_articulate(&feats, &emb, &p).unwrap();
            assert_eq!(
                back.serialize_label_string(),
                labels.serialize_label_string(),
                "sample {i}"
            );
        }
    }

    #[test]
    fn final_rise_reads_back_neutral() {
        use ProsodyLabel::*;
        let labels = seq(&[("a", Pad), ("i", Rise)]);
        let emb = MoraEmbeddings::derive(&inv());
        let p = SpeakerParams::default();
        let feats = articulate(&labels, &emb, &p, 5).unwrap();
        let back = inverse_articulate(&feats, &emb, &p).unwrap();
        assert_eq!(back.items()[1].1, Pad);
    }

    #[test]
    fn articulation_is_deterministic_in_seed() {
        let inventory = inv();
        let emb = MoraEmbeddings::derive(&inventory);
        let p = SpeakerParams {
            noise_sigma: 0.05,
            ..SpeakerParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let labels = random_articulable(&mut rng, &inventory);
        let a = articulate(&labels, &emb, &p, 42).unwrap();
        let b = articulate(&labels, &emb, &p, 42).unwrap();
        assert_eq!(a, b);
        let c = articulate(&labels, &emb, &p, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fit_recovers_parameters_exactly_without_noise() {
        let inventory = inv();
        let emb = MoraEmbeddings::derive(&inventory);
        let truth = SpeakerParams {
            pitch_base: 1.3,
            rise_delta: 0.45,
            fall_delta: 0.7,
            tempo_min: 2,
            tempo_max: 5,
            noise_sigma: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let data: Vec<_> = (0..60)
            .map(|i| {
                let labels = random_articulable(&mut rng, &inventory);
                let feats = articulate(&labels, &emb, &truth, 7000 + i).unwrap();
                (labels, feats)
            })
            .collect();
        let fit = fit_speaker(&data).unwrap();
        assert!((fit.pitch_base - truth.pitch_base).abs() < 1e-9);
        assert!((fit.rise_delta - truth.rise_delta).abs() < 1e-9);
        assert!((fit.fall_delta - truth.fall_delta).abs() < 1e-9);
        assert_eq!(fit.tempo_min, truth.tempo_min);
        assert_eq!(fit.tempo_max, truth.tempo_max);
        assert!(fit.noise_sigma.abs() < 1e-9);
    }

    #[test]
    fn fit_is_close_under_noise() {
        let inventory = inv();
        let emb = MoraEmbeddings::derive(&inventory);
        let truth = SpeakerParams {
            noise_sigma: 0.1,
            ..SpeakerParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let data: Vec<_> = (0..200)
            .map(|i| {
                let labels = random_articulable(&mut rng, &inventory);
                let feats = articulate(&labels, &emb, &truth, 9000 + i).unwrap();
                (labels, feats)
            })
            .collect();
        let fit = fit_speaker(&data).unwrap();
        for (name, got, want) in [
            ("pitch_base", fit.pitch_base, truth.pitch_base),
            ("rise_delta", fit.rise_delta, truth.rise_delta),
            ("fall_delta", fit.fall_delta, truth.fall_delta),
            ("noise_sigma", fit.noise_sigma, truth.noise_sigma),
        ] {
            let rel = (got - want).abs() / want;
            assert!(rel < 0.05, "{name}: fit {got} vs true {want} ({rel:.4})");
        }
        assert_eq!(fit.tempo_min, truth.tempo_min);
        assert_eq!(fit.tempo_max, truth.tempo_max);
    }

    #[test]
    fn fit_rejects_thin_or_flat_data() {
        let inventory = inv();
        let emb = MoraEmbeddings::derive(&inventory);
        let p = SpeakerParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let thin: Vec<_> = (0..5)
            .map(|i| {
                let labels = random_articulable(&mut rng, &inventory);
                let feats = articulate(&labels, &emb, &p, i).unwrap();
                (labels, feats)
            })
            .collect();
        assert!(matches!(
            fit_speaker(&thin),
            Err(SynthError::InsufficientData(_))
        ));
        // Enough utterances but no rise/fall anywhere.
        let flat: Vec<_> = (0..12)
            .map(|i| {
                let labels = seq(&[("a", ProsodyLabel::Pad), ("i", ProsodyLabel::Pad)]);
                let feats = articulate(&labels, &emb, &p, 100 + i).unwrap();
                (labels, feats)
            })
            .collect();
        assert!(matches!(
            fit_speaker(&flat),
            Err(SynthError::InsufficientData(_))
        ));
    }

    #[test]
    fn wrong_width_rejected() {
        let emb = MoraEmbeddings::derive(&inv());
        let p = SpeakerParams::default();
        let feats = AcousticFeatures::new(Mat::zeros(4, 7)).unwrap();
        assert!(matches!(
            inverse_articulate(&feats, &emb, &p),
            Err(SynthError::DimMismatch {
                expected: 12,
                got: 7
            })
        ));
    }

    #[test]
    fn bad_params_rejected() {
        let p = SpeakerParams {
            tempo_min: 1,
            ..SpeakerParams::default()
        };
        assert!(p.validate().is_err());
        let p = SpeakerParams {
            tempo_min: 4,
            tempo_max: 3,
            ..SpeakerParams::default()
        };
        assert!(p.validate().is_err());
        let p = SpeakerParams {
            noise_sigma: -0.1,
            ..SpeakerParams::default()
        };
        assert!(p.validate().is_err());
    }
}
