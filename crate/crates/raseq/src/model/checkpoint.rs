//! Self-describing binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic            9 bytes  "RASEQ2SEQ"
//! version          u32
//! embed_dim        u32
//! hidden_dim       u32
//! mem_dim          u32
//! window           u32
//! src_vocab        u32
//! tgt_vocab        u32
//! attn_dim         u32
//! mlp_dim          u32
//! use_dynamic      u8
//! param_count      u32
//! param_count × { name_len u16, name utf-8, ndim u8, dims u32…, offset u64 }
//! payload_len      u64      (bytes)
//! payload          row-major f32 little-endian
//! ```

use super::params::{shape_manifest, ModelConfig, ModelParams};
use crate::tensor::Tensor;
use crate::{Error, Result};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"RASEQ2SEQ";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(params: &ModelParams<f32>, path: &Path) -> Result<()> {
    let bytes = encode(params);
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

fn encode(params: &ModelParams<f32>) -> Vec<u8> {
    let cfg = &params.cfg;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [
        CHECKPOINT_VERSION,
        cfg.embed_dim as u32,
        cfg.hidden_dim as u32,
        cfg.mem_dim as u32,
        cfg.window as u32,
        cfg.src_vocab as u32,
        cfg.tgt_vocab as u32,
        cfg.attn_dim() as u32,
        cfg.mlp_dim() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(cfg.use_dynamic as u8);

    let named = params.visit();
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, tensor) in &named {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(tensor.shape().len() as u8);
        for &dim in tensor.shape() {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += 4 * tensor.len() as u64;
    }
    out.extend_from_slice(&offset.to_le_bytes());
    for (_, tensor) in &named {
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "checkpoint {} is truncated at byte {}",
                self.path, self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let display = path.display().to_string();
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        path: &display,
    };

    if cur.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!(
            "{display} is not a raseq checkpoint (bad magic)"
        )));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "{display} has checkpoint format version {version}, this build reads version {CHECKPOINT_VERSION}"
        )));
    }
    let embed_dim = cur.u32()? as usize;
    let hidden_dim = cur.u32()? as usize;
    let mem_dim = cur.u32()? as usize;
    let window = cur.u32()? as usize;
    let src_vocab = cur.u32()? as usize;
    let tgt_vocab = cur.u32()? as usize;
    let attn_dim = cur.u32()? as usize;
    let mlp_dim = cur.u32()? as usize;
    let use_dynamic = cur.u8()? != 0;
    let cfg = ModelConfig {
        src_vocab,
        tgt_vocab,
        embed_dim,
        hidden_dim,
        mem_dim,
        window,
        use_dynamic,
    };
    if attn_dim != cfg.attn_dim() || mlp_dim != cfg.mlp_dim() {
        return Err(Error::Format(format!(
            "{display} uses attention width {attn_dim} / output width {mlp_dim}; this build ties both to the hidden size {hidden_dim}"
        )));
    }

    let manifest = shape_manifest(&cfg);
    let param_count = cur.u32()? as usize;
    if param_count != manifest.len() {
        return Err(Error::Format(format!(
            "{display} lists {param_count} parameters, expected {}",
            manifest.len()
        )));
    }
    let mut entries = Vec::with_capacity(param_count);
    for (expect_name, expect_shape) in &manifest {
        let name_len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::Format(format!("{display} has a non-utf8 parameter name")))?;
        if name != *expect_name {
            return Err(Error::Format(format!(
                "{display} parameter order mismatch: found {name:?}, expected {expect_name:?}"
            )));
        }
        let ndim = cur.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u32()? as usize);
        }
        if &shape != expect_shape {
            return Err(Error::Format(format!(
                "{display} parameter {name} has shape {shape:?}, expected {expect_shape:?}"
            )));
        }
        let offset = cur.u64()? as usize;
        entries.push((shape, offset));
    }
    let payload_len = cur.u64()? as usize;
    let payload = cur.take(payload_len)?;

    let mut tensors = Vec::with_capacity(param_count);
    for (shape, offset) in entries {
        let numel: usize = shape.iter().product();
        let end = offset + 4 * numel;
        if end > payload.len() {
            return Err(Error::Format(format!(
                "{display} payload offset {offset} + {numel} floats exceeds payload of {} bytes",
                payload.len()
            )));
        }
        let data: Vec<f32> = payload[offset..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(shape, data)?);
    }
    ModelParams::from_ordered(cfg, tensors)
}
