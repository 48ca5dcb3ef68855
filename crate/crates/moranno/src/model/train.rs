//! Adam training loop with linear warmup / linear decay and best-validation
//! checkpoint selection.
//!
//! The loop is deliberately single-threaded and fixed-order: sample draws
//! come from one seeded stream, batch gradients accumulate in sample order,
//! and the optimizer touches tensors in the fixed traversal order, so a run
//! is a pure function of `(model seed, data, train config)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::accumulate_loss_grads;
use super::net::sequence_nll;
use super::{AcousticFeatures, AnnotatorModel, ModelError, Params};

/// Optimizer and schedule settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub seed: u64,
    /// Validate (and consider checkpointing) every this many steps; the
    /// final step always validates.
    pub eval_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 8,
            peak_lr: 1e-3,
            warmup_steps: 200,
            seed: 0,
            eval_every: 100,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.steps == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(ModelError::InvalidConfig(
                "steps, batch_size and eval_every must be positive".into(),
            ));
        }
        if self.warmup_steps >= self.steps {
            return Err(ModelError::InvalidConfig(format!(
                "warmup_steps {} must be < steps {}",
                self.warmup_steps, self.steps
            )));
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err(ModelError::InvalidConfig("peak_lr must be positive".into()));
        }
        Ok(())
    }
}

/// One training sample: feature frames plus the full `[BOS]..[EOS]` id
/// sequence.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub feats: AcousticFeatures,
    pub target_ids: Vec<u32>,
}

/// Learning rate at 1-based `step`: linear ramp to `peak_lr` over
/// `warmup_steps`, then linear decay reaching 0 at `steps`.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> f64 {
    if step <= cfg.warmup_steps {
        cfg.peak_lr * step as f64 / cfg.warmup_steps.max(1) as f64
    } else {
        cfg.peak_lr * (cfg.steps - step) as f64 / (cfg.steps - cfg.warmup_steps) as f64
    }
}

/// One logged step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Present on validation steps.
    pub val_loss: Option<f64>,
}

/// Outcome of a run: the best-validation model and the full step log.
#[derive(Debug)]
pub struct TrainResult {
    pub model: AnnotatorModel,
    pub best_step: usize,
    pub best_val_loss: f64,
    pub final_model: AnnotatorModel,
    pub log: Vec<TrainLogRow>,
}

/// Index of the minimum value, first occurrence winning ties.
pub fn select_best(vals: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in vals.iter().enumerate() {
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

struct Adam {
    m: Params,
    v: Params,
    t: usize,
}

impl Adam {
    fn new(model: &AnnotatorModel) -> Self {
        Adam {
            m: Params::zeros(&model.config, model.vocab.size()),
            v: Params::zeros(&model.config, model.vocab.size()),
            t: 0,
        }
    }

    /// One bias-corrected Adam update. With `freeze_encoder`, encoder
    /// tensors (and their moments) are left untouched.
    fn step(&mut self, model: &mut AnnotatorModel, grads: &Params, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let skip_encoder = model.config.freeze_encoder;
        let n_enc = model.params.encoder_tensors().len();
        let params = model.params.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        let gs = grads.tensors();
        for (idx, (((p, m), v), g)) in params
            .into_iter()
            .zip(ms)
            .zip(vs)
            .zip(gs)
            .enumerate()
        {
            if skip_encoder && idx < n_enc {
                continue;
            }
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
                v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
                let mh = m.data[i] / bc1;
                let vh = v.data[i] / bc2;
                p.data[i] -= lr * mh / (vh.sqrt() + cfg.eps);
            }
        }
    }
}

/// Mean sequence NLL over a dataset, forward only.
pub fn dataset_loss(model: &AnnotatorModel, data: &[TrainPair]) -> Result<f64, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut total = 0.0;
    for p in data {
        total += sequence_nll(model, &p.feats, &p.target_ids)?;
    }
    Ok(total / data.len() as f64)
}

/// Train `model` on `train_data`, tracking `val_data` loss, and return the
/// checkpoint with the lowest validation loss (earliest step on ties).
///
/// Batches draw `batch_size` independent sample indices per step from a
/// dedicated seeded stream; each sample runs a full forward/backward and
/// gradients are averaged before the Adam update.
pub fn train(
    mut model: AnnotatorModel,
    train_data: &[TrainPair],
    val_data: &[TrainPair],
    cfg: &TrainConfig,
) -> Result<TrainResult, ModelError> {
    cfg.validate()?;
    if train_data.is_empty() || val_data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&model);
    let mut grads = Params::zeros(&model.config, model.vocab.size());
    let mut log = Vec::new();
    let mut best: Option<(usize, f64, AnnotatorModel)> = None;
    for step in 1..=cfg.steps {
        grads.zero();
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size {
            let idx = rng.random_range(0..train_data.len());
            let pair = &train_data[idx];
            batch_loss += accumulate_loss_grads(&model, &pair.feats, &pair.target_ids, &mut grads)?;
        }
        batch_loss /= cfg.batch_size as f64;
        let inv_b = 1.0 / cfg.batch_size as f64;
        for t in grads.tensors_mut() {
            t.scale(inv_b);
        }
        let lr = lr_at(step, cfg);
        adam.step(&mut model, &grads, lr, cfg);

        let validate = step % cfg.eval_every == 0 || step == cfg.steps;
        let val_loss = if validate {
            let vl = dataset_loss(&model, val_data)?;
            let better = match &best {
                Some((_, b, _)) => vl < *b,
                None => true,
            };
            if better {
                best = Some((step, vl, model.clone()));
            }
            Some(vl)
        } else {
            None
        };
        log.push(TrainLogRow {
            step,
            lr,
            train_loss: batch_loss,
            val_loss,
        });
    }
    let (best_step, best_val_loss, best_model) = best.expect("final step always validates");
    Ok(TrainResult {
        model: best_model,
        best_step,
        best_val_loss,
        final_model: model,
        log,
    })
}
