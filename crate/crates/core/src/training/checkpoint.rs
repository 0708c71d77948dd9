//! `VSCK` checkpoints.
//!
//! Layout: magic `VSCK`, `u32` version, `u32`-length-prefixed JSON model
//! config, `u32` tensor count, then per tensor a `u32`-length-prefixed name,
//! `u32` rank, `u64` extents and little-endian `f64` values.

use std::fs;
use std::path::Path;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, VisirModel};
use crate::numerics::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &VisirModel) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.raw(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.string(&serde_json::to_string(model.config())?);
    w.u32(model.params().len() as u32);
    for (name, t) in model.params().iter() {
        w.string(name);
        w.u32(t.shape().len() as u32);
        for &e in t.shape() {
            w.u64(e as u64);
        }
        w.f64s(t.data());
    }
    Ok(w.buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<VisirModel> {
    let mut r = Reader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let config: ModelConfig = serde_json::from_str(&r.string()?)?;
    let count = r.u32()?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            let e = r.u64()?;
            shape.push(usize::try_from(e).map_err(|_| Error::Format(format!("extent {e} too large")))?);
        }
        let numel = shape.iter().try_fold(1usize, |acc, &e| acc.checked_mul(e));
        let numel = numel.ok_or_else(|| Error::Format(format!("tensor `{name}` shape {shape:?} overflows")))?;
        let data = r.f64s(numel)?;
        params.insert(name, Tensor::new(shape, data)?)?;
    }
    r.finish()?;
    VisirModel::from_parts(config, params)
}

pub fn save_checkpoint(model: &VisirModel, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<VisirModel> {
    decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Loads a checkpoint and requires its stored config to equal `expected`.
pub fn load_checkpoint_expecting(path: &Path, expected: &ModelConfig) -> Result<VisirModel> {
    let model = load_checkpoint(path)?;
    if model.config() != expected {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint config {:?} differs from requested {:?}",
            model.config(),
            expected
        )));
    }
    Ok(model)
}
