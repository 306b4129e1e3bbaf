//! Binary checkpoint container for model parameters.
//!
//! Layout (all integers little-endian u32, all values little-endian f64):
//!
//! ```text
//! magic  b"DIPACKPT"
//! version                 (1)
//! channels embed_dim num_heads ffn_hidden num_blocks max_len num_classes
//! tensor_count
//! repeated per tensor, in canonical order:
//!   name_len  name(utf-8)  rows  cols  rows*cols f64 values
//! ```
//!
//! Tensor names follow [`Parameters::tensors`]: `input.w`, `input.b`,
//! `block<i>.attn.{wq,bq,wk,bk,wv,bv,wo,bo}`, `block<i>.ln1.{scale,offset}`,
//! `block<i>.ffn.{w1,b1,w2,b2}`, `block<i>.ln2.{scale,offset}`, `head.w`,
//! `head.b`. A save/load cycle reproduces every value bit-exactly; gradient
//! buffers are not stored.

use std::fs;
use std::path::Path;

use dipa_core::model::{ModelConfig, Parameters};
use dipa_core::rng::Rng;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DIPACKPT";
const VERSION: u32 = 1;

/// Serialize parameters into the checkpoint byte layout.
pub fn to_bytes(params: &Parameters) -> Vec<u8> {
    let cfg = params.config();
    let tensors = params.tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        cfg.channels as u32,
        cfg.embed_dim as u32,
        cfg.num_heads as u32,
        cfg.ffn_hidden as u32,
        cfg.num_blocks as u32,
        cfg.max_len as u32,
        cfg.num_classes as u32,
        tensors.len() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (name, tensor) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(tensor.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(tensor.cols() as u32).to_le_bytes());
        for &v in tensor.value.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(
                self.path,
                0,
                format!("truncated checkpoint while reading {what}"),
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        let mut buf = [0u8; 8];
        buf.copy_from_slice(b);
        Ok(f64::from_le_bytes(buf))
    }
}

/// Reconstruct parameters from checkpoint bytes.
pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Parameters> {
    let mut cur = Cursor { path, bytes, pos: 0 };
    if cur.take(8, "magic")? != MAGIC {
        return Err(Error::parse(path, 0, "not a checkpoint file (bad magic)"));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::parse(
            path,
            0,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let cfg = ModelConfig {
        channels: cur.u32("channels")? as usize,
        embed_dim: cur.u32("embed_dim")? as usize,
        num_heads: cur.u32("num_heads")? as usize,
        ffn_hidden: cur.u32("ffn_hidden")? as usize,
        num_blocks: cur.u32("num_blocks")? as usize,
        max_len: cur.u32("max_len")? as usize,
        num_classes: cur.u32("num_classes")? as usize,
    };
    cfg.validate()?;
    let tensor_count = cur.u32("tensor count")? as usize;

    let mut params = Parameters::init(&cfg, &mut Rng::new(0))?;
    let mut tensors = params.tensors_mut();
    if tensor_count != tensors.len() {
        return Err(Error::parse(
            path,
            0,
            format!(
                "checkpoint holds {tensor_count} tensors, model expects {}",
                tensors.len()
            ),
        ));
    }
    for (expected_name, tensor) in tensors.iter_mut() {
        let name_len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "tensor name")?)
            .map_err(|_| Error::parse(path, 0, "tensor name is not valid utf-8"))?;
        if name != expected_name {
            return Err(Error::parse(
                path,
                0,
                format!("expected tensor `{expected_name}`, found `{name}`"),
            ));
        }
        let rows = cur.u32("rows")? as usize;
        let cols = cur.u32("cols")? as usize;
        if rows != tensor.rows() || cols != tensor.cols() {
            return Err(Error::parse(
                path,
                0,
                format!(
                    "tensor `{name}` has shape {rows}x{cols}, expected {}x{}",
                    tensor.rows(),
                    tensor.cols()
                ),
            ));
        }
        for slot in tensor.value.as_mut_slice() {
            *slot = cur.f64("tensor value")?;
        }
        tensor.grad.fill(0.0);
    }
    if cur.pos != bytes.len() {
        return Err(Error::parse(path, 0, "trailing bytes after last tensor"));
    }
    Ok(params)
}

pub fn save(params: &Parameters, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Parameters> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(path, &bytes)
}
