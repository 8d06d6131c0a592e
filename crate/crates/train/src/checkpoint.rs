//! Binary model checkpoints.
//!
//! Layout, all integers little-endian `u64` unless noted:
//!
//! ```text
//! b"LDRLDCKPT"  version: u32  input_dim  num_classes  seed
//! n_hidden  hidden_dims[n_hidden]  param_count
//! f64 × param_count   (per layer: weights row-major, then bias)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Layer, MlpSpec, Model};

pub const MAGIC: &[u8; 9] = b"LDRLDCKPT";
pub const VERSION: u32 = 1;

/// Widths beyond this are rejected before any allocation.
const MAX_WIDTH: u64 = 1 << 24;
const MAX_LAYERS: u64 = 1 << 10;

pub fn encode(model: &Model) -> Vec<u8> {
    let spec = model.spec();
    let mut out = Vec::with_capacity(64 + 8 * spec.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [spec.input_dim as u64, spec.num_classes as u64, spec.seed, spec.hidden_dims.len() as u64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &h in &spec.hidden_dims {
        out.extend_from_slice(&(h as u64).to_le_bytes());
    }
    out.extend_from_slice(&(spec.param_count() as u64).to_le_bytes());
    for buf in model.params() {
        for v in buf {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {} (need {n} more)", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn width(&mut self, what: &str) -> Result<usize> {
        let v = self.u64()?;
        if v == 0 || v > MAX_WIDTH {
            return Err(Error::Checkpoint(format!("{what} {v} out of range")));
        }
        Ok(v as usize)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::Checkpoint("missing LDRLDCKPT magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let input_dim = r.width("input_dim")?;
    let num_classes = r.width("num_classes")?;
    let seed = r.u64()?;
    let n_hidden = r.u64()?;
    if n_hidden > MAX_LAYERS {
        return Err(Error::Checkpoint(format!("{n_hidden} hidden layers")));
    }
    let hidden_dims = (0..n_hidden).map(|_| r.width("hidden width")).collect::<Result<Vec<_>>>()?;
    let spec = MlpSpec { input_dim, hidden_dims, num_classes, seed };
    spec.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;

    let declared = r.u64()?;
    let expected = spec
        .layer_dims()
        .iter()
        .try_fold(0u64, |acc, &(i, o)| (i as u64).checked_mul(o as u64)?.checked_add(o as u64)?.checked_add(acc))
        .ok_or_else(|| Error::Checkpoint("parameter count overflows".into()))?;
    if declared != expected {
        return Err(Error::Checkpoint(format!("declares {declared} parameters, architecture needs {expected}")));
    }
    let remaining = (bytes.len() - r.pos) as u64;
    if remaining != expected.saturating_mul(8) {
        return Err(Error::Checkpoint(format!("{remaining} parameter bytes, expected {}", expected.saturating_mul(8))));
    }
    let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
        r.take(n * 8).map(|b| b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    };
    let mut layers = Vec::new();
    for (in_dim, out_dim) in spec.layer_dims() {
        let weights = read_f64s(in_dim * out_dim)?;
        let bias = read_f64s(out_dim)?;
        layers.push(Layer { in_dim, out_dim, weights, bias });
    }
    Model::from_layers(spec, layers).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
