//! Forward and backward passes.
//!
//! Layout conventions:
//! - Activations are `seq_len x d_model`, one row per position.
//! - A projection `W` is `out x in`; applying it is `X.matmul_nt(W)` and the
//!   matching gradients are `dX = dY.matmul_nn(W)`, `dW = dY.matmul_tn(X)`.
//! - Blocks are pre-norm residual: `x + f(rmsnorm(x))`, with one extra
//!   rmsnorm after the last layer of each stack. Norms carry no learnable
//!   parameters and there are no bias vectors anywhere.

// Kernels mix indices across several buffers at once; indexed loops are the
// house style here.
#![allow(clippy::needless_range_loop)]

use super::tensor::{log_softmax, softmax_slice, Mat};
use super::{AcousticFeatures, AnnotatorModel, DecLayerParams, EncLayerParams, ModelError, Params};

/// Variance floor inside rmsnorm.
pub const RMS_EPS: f64 = 1e-8;

/// Sinusoidal position table, `len x d`: even columns sin, odd columns cos,
/// wavelengths geometric in 10000^(2j/d).
pub fn positional_encoding(len: usize, d: usize) -> Mat {
    Mat::from_fn(len, d, |pos, i| {
        let j = (i / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * j / d as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Row-wise rmsnorm: `y = x / sqrt(mean(x^2) + eps)`. Returns the output and
/// the per-row reciprocal norms needed by the backward pass.
fn rmsnorm(x: &Mat) -> (Mat, Vec<f64>) {
    let mut out = x.clone();
    let mut rinv = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let ms = x.row(r).iter().map(|v| v * v).sum::<f64>() / x.cols as f64;
        let ri = 1.0 / (ms + RMS_EPS).sqrt();
        rinv.push(ri);
        for v in out.row_mut(r) {
            *v *= ri;
        }
    }
    (out, rinv)
}

/// Gradient of rmsnorm w.r.t. its input:
/// `dx_i = rinv * dy_i - (x_i * rinv^3 / d) * sum_j dy_j x_j`.
fn rmsnorm_bwd(x: &Mat, rinv: &[f64], d_out: &Mat) -> Mat {
    let mut dx = Mat::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let xr = x.row(r);
        let dyr = d_out.row(r);
        let ri = rinv[r];
        let dot: f64 = xr.iter().zip(dyr).map(|(a, b)| a * b).sum();
        let coef = ri * ri * ri * dot / x.cols as f64;
        let dxr = dx.row_mut(r);
        for i in 0..xr.len() {
            dxr[i] = ri * dyr[i] - coef * xr[i];
        }
    }
    dx
}

/// Everything attention needs to replay itself backwards: the projected
/// q/k/v, per-head attention probabilities, and the concatenated context.
struct AttnCache {
    q: Mat,
    k: Mat,
    v: Mat,
    /// One `q_len x k_len` matrix of softmax rows per head; masked slots
    /// hold exact zeros.
    aw: Vec<Mat>,
    /// Concatenated per-head context, `q_len x d_model`.
    ctx: Mat,
}

/// Multi-head scaled dot-product attention. With `causal`, query i attends
/// to keys 0..=i only.
fn attention(q: Mat, k: Mat, v: Mat, n_heads: usize, causal: bool) -> AttnCache {
    let d = q.cols;
    let hd = d / n_heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let (ql, kl) = (q.rows, k.rows);
    let mut aw = Vec::with_capacity(n_heads);
    let mut ctx = Mat::zeros(ql, d);
    for h in 0..n_heads {
        let off = h * hd;
        let mut a = Mat::zeros(ql, kl);
        for i in 0..ql {
            let limit = if causal { (i + 1).min(kl) } else { kl };
            let qi = &q.row(i)[off..off + hd];
            let row = a.row_mut(i);
            for j in 0..limit {
                let kj = &k.row(j)[off..off + hd];
                row[j] = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
            }
            softmax_slice(&mut row[..limit]);
        }
        for i in 0..ql {
            let limit = if causal { (i + 1).min(kl) } else { kl };
            for j in 0..limit {
                let w = a.at(i, j);
                let vj = &v.row(j)[off..off + hd];
                let ci = &mut ctx.row_mut(i)[off..off + hd];
                for (c, vv) in ci.iter_mut().zip(vj) {
                    *c += w * vv;
                }
            }
        }
        aw.push(a);
    }
    AttnCache { q, k, v, aw, ctx }
}

/// Backward through attention: given the gradient of the concatenated
/// context, produce gradients of q, k, v.
fn attention_bwd(cache: &AttnCache, d_ctx: &Mat, n_heads: usize, causal: bool) -> (Mat, Mat, Mat) {
    let d = cache.q.cols;
    let hd = d / n_heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let (ql, kl) = (cache.q.rows, cache.k.rows);
    let mut dq = Mat::zeros(ql, d);
    let mut dk = Mat::zeros(kl, d);
    let mut dv = Mat::zeros(kl, d);
    let mut d_aw = vec![0.0; kl];
    let mut d_score = vec![0.0; kl];
    for h in 0..n_heads {
        let off = h * hd;
        let a = &cache.aw[h];
        for i in 0..ql {
            let limit = if causal { (i + 1).min(kl) } else { kl };
            let gi = &d_ctx.row(i)[off..off + hd];
            let ar = a.row(i);
            // dv[j] += a[i][j] * g_i ; d_aw[j] = <g_i, v[j]>
            for j in 0..limit {
                let vj = &cache.v.row(j)[off..off + hd];
                d_aw[j] = gi.iter().zip(vj).map(|(a, b)| a * b).sum::<f64>();
                let w = ar[j];
                let dvj = &mut dv.row_mut(j)[off..off + hd];
                for (dst, g) in dvj.iter_mut().zip(gi) {
                    *dst += w * g;
                }
            }
            // Softmax Jacobian: ds_j = a_j * (d_aw_j - sum_j' a_j' d_aw_j').
            let row_dot: f64 = (0..limit).map(|j| ar[j] * d_aw[j]).sum();
            for j in 0..limit {
                d_score[j] = ar[j] * (d_aw[j] - row_dot);
            }
            // Scores s_j = scale * <q_i, k_j>.
            let qi = &cache.q.row(i)[off..off + hd];
            let dqi = &mut dq.row_mut(i)[off..off + hd];
            for j in 0..limit {
                let s = scale * d_score[j];
                let kj = &cache.k.row(j)[off..off + hd];
                for (dst, kv) in dqi.iter_mut().zip(kj) {
                    *dst += s * kv;
                }
                let dkj = &mut dk.row_mut(j)[off..off + hd];
                for (dst, qv) in dkj.iter_mut().zip(qi) {
                    *dst += s * qv;
                }
            }
        }
    }
    (dq, dk, dv)
}

struct EncLayerCache {
    x_in: Mat,
    xn1: Mat,
    r1: Vec<f64>,
    attn: AttnCache,
    x1: Mat,
    xn2: Mat,
    r2: Vec<f64>,
    h_pre: Mat,
    h_act: Mat,
}

pub(crate) struct EncCache {
    layers: Vec<EncLayerCache>,
    x_final: Mat,
    r_final: Vec<f64>,
    /// Final normed encoder output, `n_frames x d_model`.
    pub out: Mat,
}

fn enc_layer_forward(l: &EncLayerParams, x: Mat, n_heads: usize) -> (Mat, EncLayerCache) {
    let (xn1, r1) = rmsnorm(&x);
    let attn = attention(
        xn1.matmul_nt(&l.wq),
        xn1.matmul_nt(&l.wk),
        xn1.matmul_nt(&l.wv),
        n_heads,
        false,
    );
    let mut x1 = x.clone();
    x1.add_assign(&attn.ctx.matmul_nt(&l.wo));
    let (xn2, r2) = rmsnorm(&x1);
    let h_pre = xn2.matmul_nt(&l.fc1);
    let mut h_act = h_pre.clone();
    for v in &mut h_act.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let mut x2 = x1.clone();
    x2.add_assign(&h_act.matmul_nt(&l.fc2));
    (
        x2,
        EncLayerCache {
            x_in: x,
            xn1,
            r1,
            attn,
            x1,
            xn2,
            r2,
            h_pre,
            h_act,
        },
    )
}

/// Backward through one encoder-style block (self-attention + FFN). Returns
/// the gradient w.r.t. the block input; accumulates parameter gradients.
#[allow(clippy::too_many_arguments)]
fn enc_layer_backward(
    l: &EncLayerParams,
    g: &mut EncLayerParams,
    c: &EncLayerCache,
    d_out: &Mat,
    n_heads: usize,
) -> Mat {
    // FFN block: x2 = x1 + relu(xn2 * fc1^T) * fc2^T
    let mut d_x1 = d_out.clone();
    let d_hact = d_out.matmul_nn(&l.fc2);
    g.fc2.add_assign(&d_out.matmul_tn(&c.h_act));
    let mut d_hpre = d_hact;
    for (dv, pre) in d_hpre.data.iter_mut().zip(&c.h_pre.data) {
        if *pre <= 0.0 {
            *dv = 0.0;
        }
    }
    let d_xn2 = d_hpre.matmul_nn(&l.fc1);
    g.fc1.add_assign(&d_hpre.matmul_tn(&c.xn2));
    d_x1.add_assign(&rmsnorm_bwd(&c.x1, &c.r2, &d_xn2));

    // Attention block: x1 = x_in + attn(xn1) * wo^T
    let mut d_x_in = d_x1.clone();
    let d_ctx = d_x1.matmul_nn(&l.wo);
    g.wo.add_assign(&d_x1.matmul_tn(&c.attn.ctx));
    let (d_q, d_k, d_v) = attention_bwd(&c.attn, &d_ctx, n_heads, false);
    let mut d_xn1 = d_q.matmul_nn(&l.wq);
    d_xn1.add_assign(&d_k.matmul_nn(&l.wk));
    d_xn1.add_assign(&d_v.matmul_nn(&l.wv));
    g.wq.add_assign(&d_q.matmul_tn(&c.xn1));
    g.wk.add_assign(&d_k.matmul_tn(&c.xn1));
    g.wv.add_assign(&d_v.matmul_tn(&c.xn1));
    d_x_in.add_assign(&rmsnorm_bwd(&c.x_in, &c.r1, &d_xn1));
    d_x_in
}

pub(crate) fn encoder_forward(
    model: &AnnotatorModel,
    feats: &AcousticFeatures,
) -> Result<EncCache, ModelError> {
    let cfg = &model.config;
    if feats.dim() != cfg.d_in {
        return Err(ModelError::FeatureDim {
            got: feats.dim(),
            want: cfg.d_in,
        });
    }
    if feats.n_frames() == 0 {
        return Err(ModelError::InvalidTarget("empty feature sequence".into()));
    }
    if feats.n_frames() > cfg.max_src_len {
        return Err(ModelError::SequenceTooLong {
            what: "feature sequence",
            len: feats.n_frames(),
            max: cfg.max_src_len,
        });
    }
    let mut x = feats.frames().matmul_nt(&model.params.encoder.input_proj);
    x.add_assign(&positional_encoding(x.rows, cfg.d_model));
    let mut layers = Vec::with_capacity(cfg.n_enc_layers);
    for l in &model.params.encoder.layers {
        let (next, cache) = enc_layer_forward(l, x, cfg.n_heads);
        layers.push(cache);
        x = next;
    }
    let (out, r_final) = rmsnorm(&x);
    Ok(EncCache {
        layers,
        x_final: x,
        r_final,
        out,
    })
}

/// Backward through the encoder given the gradient at its normed output.
/// Accumulates layer gradients into `grads` and returns the gradient at x0
/// (the projected-and-positioned frames), which the caller turns into the
/// input projection gradient.
fn encoder_backward(model: &AnnotatorModel, cache: &EncCache, d_out: &Mat, grads: &mut Params) -> Mat {
    let mut d_x = rmsnorm_bwd(&cache.x_final, &cache.r_final, d_out);
    for (i, c) in cache.layers.iter().enumerate().rev() {
        d_x = enc_layer_backward(
            &model.params.encoder.layers[i],
            &mut grads.encoder.layers[i],
            c,
            &d_x,
            model.config.n_heads,
        );
    }
    d_x
}

struct DecLayerCache {
    x_in: Mat,
    xn1: Mat,
    r1: Vec<f64>,
    self_attn: AttnCache,
    x1: Mat,
    xn2: Mat,
    r2: Vec<f64>,
    cross: AttnCache,
    x2: Mat,
    xn3: Mat,
    r3: Vec<f64>,
    h_pre: Mat,
    h_act: Mat,
}

pub(crate) struct DecCache {
    tokens: Vec<u32>,
    layers: Vec<DecLayerCache>,
    x_final: Mat,
    r_final: Vec<f64>,
    normed: Mat,
    /// Unnormalized output distribution, `len x vocab`.
    pub logits: Mat,
}

fn dec_layer_forward(l: &DecLayerParams, x: Mat, enc_out: &Mat, n_heads: usize) -> (Mat, DecLayerCache) {
    let (xn1, r1) = rmsnorm(&x);
    let self_attn = attention(
        xn1.matmul_nt(&l.sq),
        xn1.matmul_nt(&l.sk),
        xn1.matmul_nt(&l.sv),
        n_heads,
        true,
    );
    let mut x1 = x.clone();
    x1.add_assign(&self_attn.ctx.matmul_nt(&l.so));
    let (xn2, r2) = rmsnorm(&x1);
    let cross = attention(
        xn2.matmul_nt(&l.cq),
        enc_out.matmul_nt(&l.ck),
        enc_out.matmul_nt(&l.cv),
        n_heads,
        false,
    );
    let mut x2 = x1.clone();
    x2.add_assign(&cross.ctx.matmul_nt(&l.co));
    let (xn3, r3) = rmsnorm(&x2);
    let h_pre = xn3.matmul_nt(&l.fc1);
    let mut h_act = h_pre.clone();
    for v in &mut h_act.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let mut x3 = x2.clone();
    x3.add_assign(&h_act.matmul_nt(&l.fc2));
    (
        x3,
        DecLayerCache {
            x_in: x,
            xn1,
            r1,
            self_attn,
            x1,
            xn2,
            r2,
            cross,
            x2,
            xn3,
            r3,
            h_pre,
            h_act,
        },
    )
}

/// Backward through one decoder block. Returns the gradient w.r.t. the block
/// input and accumulates the gradient w.r.t. the encoder output into
/// `d_enc_out`.
fn dec_layer_backward(
    l: &DecLayerParams,
    g: &mut DecLayerParams,
    c: &DecLayerCache,
    d_out: &Mat,
    d_enc_out: &mut Mat,
    enc_out: &Mat,
    n_heads: usize,
) -> Mat {
    // FFN block: x3 = x2 + relu(xn3 * fc1^T) * fc2^T
    let mut d_x2 = d_out.clone();
    let d_hact = d_out.matmul_nn(&l.fc2);
    g.fc2.add_assign(&d_out.matmul_tn(&c.h_act));
    let mut d_hpre = d_hact;
    for (dv, pre) in d_hpre.data.iter_mut().zip(&c.h_pre.data) {
        if *pre <= 0.0 {
            *dv = 0.0;
        }
    }
    let d_xn3 = d_hpre.matmul_nn(&l.fc1);
    g.fc1.add_assign(&d_hpre.matmul_tn(&c.xn3));
    d_x2.add_assign(&rmsnorm_bwd(&c.x2, &c.r3, &d_xn3));

    // Cross block: x2 = x1 + cross(xn2, enc_out) * co^T
    let mut d_x1 = d_x2.clone();
    let d_ctx = d_x2.matmul_nn(&l.co);
    g.co.add_assign(&d_x2.matmul_tn(&c.cross.ctx));
    let (d_qc, d_kc, d_vc) = attention_bwd(&c.cross, &d_ctx, n_heads, false);
    let d_xn2 = d_qc.matmul_nn(&l.cq);
    g.cq.add_assign(&d_qc.matmul_tn(&c.xn2));
    d_enc_out.add_assign(&d_kc.matmul_nn(&l.ck));
    g.ck.add_assign(&d_kc.matmul_tn(enc_out));
    d_enc_out.add_assign(&d_vc.matmul_nn(&l.cv));
    g.cv.add_assign(&d_vc.matmul_tn(enc_out));
    d_x1.add_assign(&rmsnorm_bwd(&c.x1, &c.r2, &d_xn2));

    // Self block: x1 = x_in + self_attn(xn1) * so^T
    let mut d_x_in = d_x1.clone();
    let d_ctx = d_x1.matmul_nn(&l.so);
    g.so.add_assign(&d_x1.matmul_tn(&c.self_attn.ctx));
    let (d_q, d_k, d_v) = attention_bwd(&c.self_attn, &d_ctx, n_heads, true);
    let mut d_xn1 = d_q.matmul_nn(&l.sq);
    d_xn1.add_assign(&d_k.matmul_nn(&l.sk));
    d_xn1.add_assign(&d_v.matmul_nn(&l.sv));
    g.sq.add_assign(&d_q.matmul_tn(&c.xn1));
    g.sk.add_assign(&d_k.matmul_tn(&c.xn1));
    g.sv.add_assign(&d_v.matmul_tn(&c.xn1));
    d_x_in.add_assign(&rmsnorm_bwd(&c.x_in, &c.r1, &d_xn1));
    d_x_in
}

pub(crate) fn decoder_forward(
    model: &AnnotatorModel,
    tokens: &[u32],
    enc_out: &Mat,
) -> Result<DecCache, ModelError> {
    let cfg = &model.config;
    let v = model.vocab.size() as u32;
    if tokens.is_empty() {
        return Err(ModelError::InvalidTarget("empty decoder input".into()));
    }
    if tokens.len() > cfg.max_tgt_len {
        return Err(ModelError::SequenceTooLong {
            what: "label sequence",
            len: tokens.len(),
            max: cfg.max_tgt_len,
        });
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t >= v) {
        return Err(ModelError::InvalidTarget(format!(
            "token id {bad} out of range (vocab size {v})"
        )));
    }
    let d = cfg.d_model;
    let emb_scale = (d as f64).sqrt();
    let mut x = Mat::zeros(tokens.len(), d);
    for (i, &t) in tokens.iter().enumerate() {
        let src = model.params.decoder.tok_emb.row(t as usize);
        let dst = x.row_mut(i);
        for (dv, sv) in dst.iter_mut().zip(src) {
            *dv = sv * emb_scale;
        }
    }
    x.add_assign(&positional_encoding(tokens.len(), d));
    let mut layers = Vec::with_capacity(cfg.n_dec_layers);
    for l in &model.params.decoder.layers {
        let (next, cache) = dec_layer_forward(l, x, enc_out, cfg.n_heads);
        layers.push(cache);
        x = next;
    }
    let (normed, r_final) = rmsnorm(&x);
    let logits = normed.matmul_nt(&model.params.decoder.out_proj);
    Ok(DecCache {
        tokens: tokens.to_vec(),
        layers,
        x_final: x,
        r_final,
        normed,
        logits,
    })
}

/// Backward through the decoder given the gradient at the logits.
/// Accumulates parameter gradients and returns the gradient w.r.t. the
/// encoder output.
fn decoder_backward(
    model: &AnnotatorModel,
    cache: &DecCache,
    enc_out: &Mat,
    d_logits: &Mat,
    grads: &mut Params,
) -> Mat {
    let d_normed = d_logits.matmul_nn(&model.params.decoder.out_proj);
    grads
        .decoder
        .out_proj
        .add_assign(&d_logits.matmul_tn(&cache.normed));
    let mut d_x = rmsnorm_bwd(&cache.x_final, &cache.r_final, &d_normed);
    let mut d_enc_out = Mat::zeros(enc_out.rows, enc_out.cols);
    for (i, c) in cache.layers.iter().enumerate().rev() {
        d_x = dec_layer_backward(
            &model.params.decoder.layers[i],
            &mut grads.decoder.layers[i],
            c,
            &d_x,
            &mut d_enc_out,
            enc_out,
            model.config.n_heads,
        );
    }
    // Embedding rows: x0 row i = tok_emb[token_i] * sqrt(d) + pe_i.
    let emb_scale = (model.config.d_model as f64).sqrt();
    for (i, &t) in cache.tokens.iter().enumerate() {
        let src = d_x.row(i);
        let dst = grads.decoder.tok_emb.row_mut(t as usize);
        for (g, dv) in dst.iter_mut().zip(src) {
            *g += dv * emb_scale;
        }
    }
    d_enc_out
}

/// Mean next-token negative log-likelihood of `y_ids` (a full `[BOS]..[EOS]`
/// id sequence) given the features, without gradients.
pub fn sequence_nll(
    model: &AnnotatorModel,
    feats: &AcousticFeatures,
    y_ids: &[u32],
) -> Result<f64, ModelError> {
    check_targets(model, y_ids)?;
    let enc = encoder_forward(model, feats)?;
    let dec = decoder_forward(model, &y_ids[..y_ids.len() - 1], &enc.out)?;
    let n = y_ids.len() - 1;
    let mut loss = 0.0;
    for i in 0..n {
        let lsm = log_softmax(dec.logits.row(i));
        loss -= lsm[y_ids[i + 1] as usize];
    }
    Ok(loss / n as f64)
}

/// Mean next-token NLL plus full parameter gradients.
///
/// With `freeze_encoder` set in the config, the returned encoder gradients
/// are exact zeros.
pub fn teacher_forced_loss(
    model: &AnnotatorModel,
    feats: &AcousticFeatures,
    y_ids: &[u32],
) -> Result<(f64, Params), ModelError> {
    let mut grads = Params::zeros(&model.config, model.vocab.size());
    let loss = accumulate_loss_grads(model, feats, y_ids, &mut grads)?;
    Ok((loss, grads))
}

/// Like [`teacher_forced_loss`] but adds the gradients into an existing
/// accumulator, for mini-batch accumulation. Returns this sample's loss.
pub fn accumulate_loss_grads(
    model: &AnnotatorModel,
    feats: &AcousticFeatures,
    y_ids: &[u32],
    grads: &mut Params,
) -> Result<f64, ModelError> {
    check_targets(model, y_ids)?;
    let enc = encoder_forward(model, feats)?;
    let dec = decoder_forward(model, &y_ids[..y_ids.len() - 1], &enc.out)?;
    let n = y_ids.len() - 1;
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    // d(mean nll)/d(logits) = (softmax - onehot(target)) / n, row-wise.
    let mut d_logits = Mat::zeros(n, model.vocab.size());
    for i in 0..n {
        let mut probs = dec.logits.row(i).to_vec();
        softmax_slice(&mut probs);
        let target = y_ids[i + 1] as usize;
        let lsm = log_softmax(dec.logits.row(i));
        loss -= lsm[target];
        let dst = d_logits.row_mut(i);
        for (d, p) in dst.iter_mut().zip(&probs) {
            *d = p * inv_n;
        }
        dst[target] -= inv_n;
    }
    let d_enc_out = decoder_backward(model, &dec, &enc.out, &d_logits, grads);
    if model.config.freeze_encoder {
        for t in grads.encoder_tensors_mut() {
            t.fill_zero();
        }
    } else {
        let d_x0 = encoder_backward(model, &enc, &d_enc_out, grads);
        grads
            .encoder
            .input_proj
            .add_assign(&d_x0.matmul_tn(feats.frames()));
    }
    Ok(loss * inv_n)
}

fn check_targets(model: &AnnotatorModel, y_ids: &[u32]) -> Result<(), ModelError> {
    if y_ids.len() < 2 {
        return Err(ModelError::InvalidTarget(
            "need at least two ids (begin and end markers)".into(),
        ));
    }
    if y_ids.len() > model.config.max_tgt_len {
        return Err(ModelError::SequenceTooLong {
            what: "label sequence",
            len: y_ids.len(),
            max: model.config.max_tgt_len,
        });
    }
    Ok(())
}

/// Sum of per-step NLLs computed one prefix at a time, each step running a
/// fresh decoder forward over `y_ids[..m]`. Mathematically equals
/// `sequence_nll * (len - 1)`; used to cross-check the batched pass.
pub fn incremental_nll(
    model: &AnnotatorModel,
    feats: &AcousticFeatures,
    y_ids: &[u32],
) -> Result<f64, ModelError> {
    check_targets(model, y_ids)?;
    let enc = encoder_forward(model, feats)?;
    let mut total = 0.0;
    for m in 1..y_ids.len() {
        let dec = decoder_forward(model, &y_ids[..m], &enc.out)?;
        let lsm = log_softmax(dec.logits.row(m - 1));
        total -= lsm[y_ids[m] as usize];
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::MoraInventory;
    use crate::model::{init_model, ModelConfig};
    use crate::vocab::Vocabulary;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model(seed: u64) -> AnnotatorModel {
        let vocab = Vocabulary::for_inventory(&MoraInventory::default_cv()).unwrap();
        let cfg = ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 1,
            ff_dim: 16,
            d_in: 12,
            max_src_len: 64,
            max_tgt_len: 32,
            freeze_encoder: false,
        };
        init_model(cfg, vocab, seed).unwrap()
    }

    fn random_feats(rng: &mut ChaCha8Rng, n: usize, d: usize) -> AcousticFeatures {
        let m = Mat::from_fn(n, d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        AcousticFeatures::new(m).unwrap()
    }

    fn random_targets(rng: &mut ChaCha8Rng, model: &AnnotatorModel, n_pairs: usize) -> Vec<u32> {
        let v = &model.vocab;
        let mut ids = vec![v.bos_id()];
        for _ in 0..n_pairs {
            ids.push(rng.random_range(0..v.n_moras() as u32));
            ids.push(v.n_moras() as u32 + rng.random_range(0..6));
        }
        ids.push(v.eos_id());
        ids
    }

    #[test]
    fn positional_encoding_matches_definition() {
        let pe = positional_encoding(4, 6);
        assert_eq!(pe.at(0, 0), 0.0);
        assert_eq!(pe.at(0, 1), 1.0);
        let expected = (2.0 / 10000f64.powf(2.0 / 6.0)).sin();
        assert!((pe.at(2, 2) - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_params_give_uniform_logits_and_ln_v_loss() {
        let vocab = Vocabulary::for_inventory(&MoraInventory::default_cv()).unwrap();
        let cfg = ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 1,
            ff_dim: 16,
            d_in: 12,
            max_src_len: 64,
            max_tgt_len: 32,
            freeze_encoder: false,
        };
        let model = AnnotatorModel {
            config: cfg,
            vocab: vocab.clone(),
            params: crate::model::Params::zeros(&cfg, vocab.size()),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let feats = random_feats(&mut rng, 10, 12);
        let ids = random_targets(&mut rng, &model, 3);
        let nll = sequence_nll(&model, &feats, &ids).unwrap();
        assert!((nll - (vocab.size() as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn attention_rows_are_distributions() {
        let model = small_model(3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let feats = random_feats(&mut rng, 9, 12);
        let enc = encoder_forward(&model, &feats).unwrap();
        let ids = random_targets(&mut rng, &model, 4);
        let dec = decoder_forward(&model, &ids[..ids.len() - 1], &enc.out).unwrap();
        for c in &dec.layers {
            for a in c.self_attn.aw.iter().chain(c.cross.aw.iter()) {
                for i in 0..a.rows {
                    let s: f64 = a.row(i).iter().sum();
                    assert!((s - 1.0).abs() < 1e-12, "attention row sums to {s}");
                }
            }
        }
        // Causality: self-attention weight above the diagonal is exactly 0.
        for c in &dec.layers {
            for a in &c.self_attn.aw {
                for i in 0..a.rows {
                    for j in i + 1..a.cols {
                        assert_eq!(a.at(i, j), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn incremental_nll_matches_batched() {
        let model = small_model(5);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let feats = random_feats(&mut rng, 12, 12);
            let ids = random_targets(&mut rng, &model, 5);
            let batched = sequence_nll(&model, &feats, &ids).unwrap() * (ids.len() - 1) as f64;
            let stepped = incremental_nll(&model, &feats, &ids).unwrap();
            assert!(
                (batched - stepped).abs() < 1e-9,
                "batched {batched} vs stepped {stepped}"
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let model = small_model(23);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let feats = random_feats(&mut rng, 7, 12);
        let ids = random_targets(&mut rng, &model, 4);
        let (_, grads) = teacher_forced_loss(&model, &feats, &ids).unwrap();

        let eps = 1e-5;
        let n_tensors = grads.tensors().len();
        let mut checked = 0usize;
        let mut t_idx = 0usize;
        while checked < 12 {
            t_idx = (t_idx + 7) % n_tensors;
            let e_idx = rng.random_range(0..grads.tensors()[t_idx].n_elements());
            let analytic = grads.tensors()[t_idx].data[e_idx];
            if analytic.abs() < 1e-3 {
                continue;
            }
            let mut plus = model.clone();
            plus.params.tensors_mut()[t_idx].data[e_idx] += eps;
            let mut minus = model.clone();
            minus.params.tensors_mut()[t_idx].data[e_idx] -= eps;
            let lp = sequence_nll(&plus, &feats, &ids).unwrap();
            let lm = sequence_nll(&minus, &feats, &ids).unwrap();
            let fd = (lp - lm) / (2.0 * eps);
            let rel = (fd - analytic).abs() / analytic.abs().max(fd.abs());
            assert!(
                rel <= 1e-6,
                "tensor {t_idx} elem {e_idx}: analytic {analytic} fd {fd} rel {rel}"
            );
            checked += 1;
        }
    }

    #[test]
    fn frozen_encoder_grads_are_zero() {
        let mut model = small_model(31);
        model.config.freeze_encoder = true;
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let feats = random_feats(&mut rng, 6, 12);
        let ids = random_targets(&mut rng, &model, 3);
        let (_, grads) = teacher_forced_loss(&model, &feats, &ids).unwrap();
        for t in grads.encoder_tensors() {
            assert!(t.data.iter().all(|&v| v == 0.0));
        }
        assert!(grads
            .decoder_tensors()
            .iter()
            .any(|t| t.data.iter().any(|&v| v != 0.0)));
    }

    #[test]
    fn length_and_dim_limits_enforced() {
        let model = small_model(41);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let feats = random_feats(&mut rng, 65, 12);
        let ids = random_targets(&mut rng, &model, 3);
        assert!(matches!(
            sequence_nll(&model, &feats, &ids),
            Err(ModelError::SequenceTooLong { .. })
        ));
        let feats = random_feats(&mut rng, 5, 11);
        assert!(matches!(
            sequence_nll(&model, &feats, &ids),
            Err(ModelError::FeatureDim { got: 11, want: 12 })
        ));
        let feats = random_feats(&mut rng, 5, 12);
        let long = random_targets(&mut rng, &model, 40);
        assert!(matches!(
            sequence_nll(&model, &feats, &long),
            Err(ModelError::SequenceTooLong { .. })
        ));
    }
}
