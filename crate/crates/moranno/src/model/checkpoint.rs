//! Binary checkpoint format, version 1.
//!
//! Layout (all integers little-endian):
//! ```text
//! magic            8 bytes  "MRNCKPT1"
//! d_model          u32
//! n_heads          u32
//! n_enc_layers     u32
//! n_dec_layers     u32
//! ff_dim           u32
//! d_in             u32
//! max_src_len      u32
//! max_tgt_len      u32
//! freeze_encoder   u8 (0 or 1)
//! n_moras          u32
//! mora tokens      n_moras x { u16 byte length, UTF-8 bytes }, in id order
//! n_tensors        u32
//! tensors          n_tensors x { u32 rows, u32 cols, rows*cols f32 }
//! ```
//! Tensors appear in the fixed parameter traversal order (encoder first).
//! Values are stored as f32; loading widens back to f64, so save/load is a
//! projection, but saving what was loaded reproduces the bytes exactly.

use std::path::Path;

use crate::label::MoraInventory;
use crate::vocab::Vocabulary;

use super::{AnnotatorModel, ModelConfig, ModelError, Params};

const MAGIC: &[u8; 8] = b"MRNCKPT1";

pub fn save(model: &AnnotatorModel, path: &Path) -> Result<(), ModelError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let cfg = &model.config;
    for v in [
        cfg.d_model,
        cfg.n_heads,
        cfg.n_enc_layers,
        cfg.n_dec_layers,
        cfg.ff_dim,
        cfg.d_in,
        cfg.max_src_len,
        cfg.max_tgt_len,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(cfg.freeze_encoder as u8);
    let n_moras = model.vocab.n_moras();
    out.extend_from_slice(&(n_moras as u32).to_le_bytes());
    for id in 0..n_moras {
        let tok = model
            .vocab
            .token(id as u32)
            .expect("mora ids are contiguous from 0");
        let bytes = tok.as_bytes();
        out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(bytes);
    }
    let tensors = model.params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.rows as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols as u32).to_le_bytes());
        for &v in &t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelError::CheckpointFormat(format!(
                "unexpected end of file at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, ModelError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn load(path: &Path) -> Result<AnnotatorModel, ModelError> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(8)? != MAGIC {
        return Err(ModelError::CheckpointFormat(
            "bad magic: not a checkpoint file".into(),
        ));
    }
    let config = ModelConfig {
        d_model: r.u32()? as usize,
        n_heads: r.u32()? as usize,
        n_enc_layers: r.u32()? as usize,
        n_dec_layers: r.u32()? as usize,
        ff_dim: r.u32()? as usize,
        d_in: r.u32()? as usize,
        max_src_len: r.u32()? as usize,
        max_tgt_len: r.u32()? as usize,
        freeze_encoder: match r.u8()? {
            0 => false,
            1 => true,
            b => {
                return Err(ModelError::CheckpointFormat(format!(
                    "freeze flag must be 0 or 1, found {b}"
                )))
            }
        },
    };
    config.validate()?;
    let n_moras = r.u32()? as usize;
    let mut tokens = Vec::with_capacity(n_moras);
    for _ in 0..n_moras {
        let len = r.u16()? as usize;
        let raw = r.take(len)?;
        let tok = std::str::from_utf8(raw).map_err(|_| {
            ModelError::CheckpointFormat("mora token is not valid UTF-8".into())
        })?;
        tokens.push(tok.to_string());
    }
    let inventory = MoraInventory::new(tokens)
        .map_err(|e| ModelError::CheckpointFormat(format!("bad mora inventory: {e}")))?;
    let vocab = Vocabulary::for_inventory(&inventory)?;

    let n_tensors = r.u32()? as usize;
    let mut params = Params::zeros(&config, vocab.size());
    let expected = params.tensors().len();
    if n_tensors != expected {
        return Err(ModelError::CheckpointFormat(format!(
            "expected {expected} tensors, found {n_tensors}"
        )));
    }
    for t in params.tensors_mut() {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        if rows != t.rows || cols != t.cols {
            return Err(ModelError::CheckpointFormat(format!(
                "tensor shape {rows}x{cols} does not match expected {}x{}",
                t.rows, t.cols
            )));
        }
        for v in &mut t.data {
            *v = r.f32()? as f64;
        }
    }
    if r.pos != bytes.len() {
        return Err(ModelError::CheckpointFormat(format!(
            "{} trailing bytes after tensor data",
            bytes.len() - r.pos
        )));
    }
    Ok(AnnotatorModel {
        config,
        vocab,
        params,
    })
}
