//! The sequence-to-sequence annotator: an encoder-decoder transformer over
//! acoustic feature frames (encoder side) and label token ids (decoder
//! side), written from scratch with explicit forward and backward passes.
//!
//! All arithmetic is f64 and single-threaded with a fixed operation order,
//! so training is bit-reproducible from `(config, seed)`. Checkpoints and
//! feature files store little-endian f32 (see [`checkpoint`]).

pub mod checkpoint;
pub mod decode;
pub mod net;
pub mod tensor;
pub mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::f64_checksum;
use crate::vocab::{VocabError, Vocabulary};
use tensor::Mat;

/// Errors raised by the annotator.
#[derive(Debug, Error)]
pub enum ModelError {
    /// Dimensions that cannot form a model (e.g. d_model not divisible by
    /// n_heads) or schedule parameters that cannot run.
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    /// Training needs at least one training and one validation sample.
    #[error("empty dataset")]
    EmptyDataset,
    /// Input longer than the configured maximum.
    #[error("{what} length {len} exceeds maximum {max}")]
    SequenceTooLong {
        what: &'static str,
        len: usize,
        max: usize,
    },
    /// Feature dimensionality does not match the model input width.
    #[error("feature dim {got} does not match model d_in {want}")]
    FeatureDim { got: usize, want: usize },
    /// Non-finite value where finite data is required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    /// Target id stream unusable for teacher forcing.
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    /// Checkpoint or feature file I/O failure.
    #[error("model file error: {0}")]
    Io(#[from] std::io::Error),
    /// Checkpoint bytes that do not parse.
    #[error("bad checkpoint: {0}")]
    CheckpointFormat(String),
    /// Vocabulary reconstruction failure while loading a checkpoint.
    #[error(transparent)]
    Vocab(#[from] VocabError),
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub ff_dim: usize,
    /// Width of one acoustic feature frame.
    pub d_in: usize,
    /// Maximum number of feature frames the encoder accepts.
    pub max_src_len: usize,
    /// Maximum id-sequence length ([BOS]...[EOS]) the decoder accepts.
    pub max_tgt_len: usize,
    /// When set, encoder gradients are zeroed and the optimizer leaves all
    /// encoder parameters untouched.
    pub freeze_encoder: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 32,
            n_heads: 4,
            n_enc_layers: 2,
            n_dec_layers: 2,
            ff_dim: 64,
            d_in: 12,
            max_src_len: 256,
            max_tgt_len: 96,
            freeze_encoder: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_model == 0
            || self.n_heads == 0
            || self.n_enc_layers == 0
            || self.n_dec_layers == 0
            || self.ff_dim == 0
            || self.d_in == 0
            || self.max_src_len == 0
            || self.max_tgt_len < 4
        {
            return Err(ModelError::InvalidConfig(
                "all dimensions must be positive (max_tgt_len >= 4)".into(),
            ));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::InvalidConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}

/// A matrix of acoustic feature frames: `n_frames x dim`, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticFeatures {
    frames: Mat,
}

impl AcousticFeatures {
    pub fn new(frames: Mat) -> Result<Self, ModelError> {
        if frames.data.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("acoustic features"));
        }
        Ok(AcousticFeatures { frames })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.rows
    }

    pub fn dim(&self) -> usize {
        self.frames.cols
    }

    pub fn frames(&self) -> &Mat {
        &self.frames
    }

    /// Write as little-endian binary: header `u32 n_frames, u32 dim`, then
    /// `n_frames * dim` f32 values row-major.
    pub fn save(&self, path: &std::path::Path) -> Result<(), ModelError> {
        let mut bytes = Vec::with_capacity(8 + self.frames.data.len() * 4);
        bytes.extend_from_slice(&(self.frames.rows as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.frames.cols as u32).to_le_bytes());
        for v in &self.frames.data {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        std::fs::write(path, bytes)?;
        Ok(())
    }

    /// Read the binary form written by [`AcousticFeatures::save`].
    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < 8 {
            return Err(ModelError::CheckpointFormat(format!(
                "feature file {} too short",
                path.display()
            )));
        }
        let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let want = 8 + rows * cols * 4;
        if bytes.len() != want {
            return Err(ModelError::CheckpointFormat(format!(
                "feature file {}: expected {want} bytes, found {}",
                path.display(),
                bytes.len()
            )));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for chunk in bytes[8..].chunks_exact(4) {
            data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
        }
        AcousticFeatures::new(Mat::from_vec(rows, cols, data))
    }
}

/// One encoder layer: self-attention projections and the feed-forward pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EncLayerParams {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
    pub fc1: Mat,
    pub fc2: Mat,
}

/// One decoder layer: causal self-attention, cross-attention over encoder
/// output, and the feed-forward pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DecLayerParams {
    pub sq: Mat,
    pub sk: Mat,
    pub sv: Mat,
    pub so: Mat,
    pub cq: Mat,
    pub ck: Mat,
    pub cv: Mat,
    pub co: Mat,
    pub fc1: Mat,
    pub fc2: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// Frame projection, `d_model x d_in`.
    pub input_proj: Mat,
    pub layers: Vec<EncLayerParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    /// Token embeddings, `vocab x d_model`.
    pub tok_emb: Mat,
    pub layers: Vec<DecLayerParams>,
    /// Output projection, `vocab x d_model`.
    pub out_proj: Mat,
}

/// All trainable tensors, split by the freeze boundary: `encoder` holds
/// everything the speech encoder owns, `decoder` the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

impl Params {
    /// Zero-initialized parameters with the shapes `cfg` implies.
    pub fn zeros(cfg: &ModelConfig, vocab_size: usize) -> Self {
        let d = cfg.d_model;
        let enc_layer = || EncLayerParams {
            wq: Mat::zeros(d, d),
            wk: Mat::zeros(d, d),
            wv: Mat::zeros(d, d),
            wo: Mat::zeros(d, d),
            fc1: Mat::zeros(cfg.ff_dim, d),
            fc2: Mat::zeros(d, cfg.ff_dim),
        };
        let dec_layer = || DecLayerParams {
            sq: Mat::zeros(d, d),
            sk: Mat::zeros(d, d),
            sv: Mat::zeros(d, d),
            so: Mat::zeros(d, d),
            cq: Mat::zeros(d, d),
            ck: Mat::zeros(d, d),
            cv: Mat::zeros(d, d),
            co: Mat::zeros(d, d),
            fc1: Mat::zeros(cfg.ff_dim, d),
            fc2: Mat::zeros(d, cfg.ff_dim),
        };
        Params {
            encoder: EncoderParams {
                input_proj: Mat::zeros(d, cfg.d_in),
                layers: (0..cfg.n_enc_layers).map(|_| enc_layer()).collect(),
            },
            decoder: DecoderParams {
                tok_emb: Mat::zeros(vocab_size, d),
                layers: (0..cfg.n_dec_layers).map(|_| dec_layer()).collect(),
                out_proj: Mat::zeros(vocab_size, d),
            },
        }
    }

    /// Encoder tensors in fixed traversal order.
    pub fn encoder_tensors(&self) -> Vec<&Mat> {
        let mut out = vec![&self.encoder.input_proj];
        for l in &self.encoder.layers {
            out.extend([&l.wq, &l.wk, &l.wv, &l.wo, &l.fc1, &l.fc2]);
        }
        out
    }

    /// Decoder tensors in fixed traversal order.
    pub fn decoder_tensors(&self) -> Vec<&Mat> {
        let mut out = vec![&self.decoder.tok_emb];
        for l in &self.decoder.layers {
            out.extend([
                &l.sq, &l.sk, &l.sv, &l.so, &l.cq, &l.ck, &l.cv, &l.co, &l.fc1, &l.fc2,
            ]);
        }
        out.push(&self.decoder.out_proj);
        out
    }

    /// All tensors: encoder first, then decoder.
    pub fn tensors(&self) -> Vec<&Mat> {
        let mut out = self.encoder_tensors();
        out.extend(self.decoder_tensors());
        out
    }

    pub fn encoder_tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = vec![&mut self.encoder.input_proj];
        for l in &mut self.encoder.layers {
            out.extend([
                &mut l.wq, &mut l.wk, &mut l.wv, &mut l.wo, &mut l.fc1, &mut l.fc2,
            ]);
        }
        out
    }

    pub fn decoder_tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = vec![&mut self.decoder.tok_emb];
        for l in &mut self.decoder.layers {
            out.extend([
                &mut l.sq, &mut l.sk, &mut l.sv, &mut l.so, &mut l.cq, &mut l.ck, &mut l.cv,
                &mut l.co, &mut l.fc1, &mut l.fc2,
            ]);
        }
        out.push(&mut self.decoder.out_proj);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        // Split borrows: encoder and decoder are disjoint fields.
        let Params { encoder, decoder } = self;
        let mut out: Vec<&mut Mat> = vec![&mut encoder.input_proj];
        for l in &mut encoder.layers {
            out.extend([
                &mut l.wq, &mut l.wk, &mut l.wv, &mut l.wo, &mut l.fc1, &mut l.fc2,
            ]);
        }
        out.push(&mut decoder.tok_emb);
        for l in &mut decoder.layers {
            out.extend([
                &mut l.sq, &mut l.sk, &mut l.sv, &mut l.so, &mut l.cq, &mut l.ck, &mut l.cv,
                &mut l.co, &mut l.fc1, &mut l.fc2,
            ]);
        }
        out.push(&mut decoder.out_proj);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.n_elements()).sum()
    }

    pub fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill_zero();
        }
    }
}

/// The trained (or trainable) annotator: config, vocabulary, parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatorModel {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: Params,
}

/// Build a model with Xavier-style Gaussian initialization.
///
/// Tensor fill order is fixed, so equal `(config, vocab, seed)` always
/// yields identical parameters. Total parameter count is
/// `d_in*d + V*d + n_enc*(4d^2 + 2*d*ff) + n_dec*(8d^2 + 2*d*ff) + V*d`.
pub fn init_model(
    config: ModelConfig,
    vocab: Vocabulary,
    seed: u64,
) -> Result<AnnotatorModel, ModelError> {
    config.validate()?;
    let mut params = Params::zeros(&config, vocab.size());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let emb_std = 1.0 / (config.d_model as f64).sqrt();
    for t in params.tensors_mut() {
        // Output-projection-style tensors are `out x in`.
        let (fan_out, fan_in) = (t.rows as f64, t.cols as f64);
        let std = if t.cols == config.d_model && t.rows > 4 * config.d_model {
            // Embedding-shaped tensors (vocab x d): unit-scale rows after
            // the sqrt(d) embedding multiplier.
            emb_std
        } else {
            (2.0 / (fan_in + fan_out)).sqrt()
        };
        let dist = Normal::new(0.0, std).expect("std is finite");
        for v in &mut t.data {
            *v = dist.sample(&mut rng);
        }
    }
    Ok(AnnotatorModel {
        config,
        vocab,
        params,
    })
}

impl AnnotatorModel {
    pub fn n_params(&self) -> usize {
        self.params.n_params()
    }

    /// Checksum over encoder parameter bit patterns.
    pub fn encoder_checksum(&self) -> u64 {
        f64_checksum(
            self.params
                .encoder_tensors()
                .iter()
                .flat_map(|t| t.data.iter().copied()),
        )
    }

    /// Checksum over decoder parameter bit patterns.
    pub fn decoder_checksum(&self) -> u64 {
        f64_checksum(
            self.params
                .decoder_tensors()
                .iter()
                .flat_map(|t| t.data.iter().copied()),
        )
    }
}
