//! `TLVR` parameter checkpoints.
//!
//! Layout, all little-endian: magic `TLVR`, `u32` version, then one record
//! per parameter until end of file: `u32` name length, UTF-8 name, `u32`
//! rank, `u64` extents, `f64` payload.

use std::fs;
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TLVR";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + store.total_values() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for (_, p) in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.rank() as u32).to_le_bytes());
        for &e in p.value.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for v in p.value.data() {
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
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Decodes a checkpoint into `(name, tensor)` records in file order.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad checkpoint magic".into(),
        });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let mut records = Vec::new();
    while r.pos < bytes.len() {
        let start = r.pos;
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::Format {
                offset: start as u64 + 4,
                message: "parameter name is not UTF-8".into(),
            })?
            .to_owned();
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64("extent")? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .filter(|&c| c <= (bytes.len() - r.pos) / 8)
            .ok_or_else(|| Error::Format {
                offset: r.pos as u64,
                message: format!("payload of {name:?} {shape:?} exceeds file"),
            })?;
        let payload = r.take(count * 8, "payload")?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push((name, Tensor::new(shape, data)?));
    }
    Ok(records)
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(store)).map_err(|e| Error::io(path, e))
}

/// Loads values into an existing store. Every parameter must be present
/// with a matching shape, and the file may not carry unknown names.
pub fn load_checkpoint(store: &mut ParamStore, path: &Path) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    apply_records(store, decode_checkpoint(&bytes)?)
}

pub fn apply_records(store: &mut ParamStore, records: Vec<(String, Tensor)>) -> Result<()> {
    if records.len() != store.len() {
        return Err(Error::Config(format!(
            "checkpoint has {} parameters, model has {}",
            records.len(),
            store.len()
        )));
    }
    for (name, value) in records {
        let id = store
            .lookup(&name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name:?} in checkpoint")))?;
        let p = store.get_mut(id);
        if p.value.shape() != value.shape() {
            return Err(Error::Config(format!(
                "parameter {name:?}: checkpoint shape {:?}, model shape {:?}",
                value.shape(),
                p.value.shape()
            )));
        }
        p.value = value;
    }
    Ok(())
}
