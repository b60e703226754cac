//! `CKPT` checkpoint files.
//!
//! Layout (little-endian): magic, u32 version, u64 step, u64 seed,
//! u32 hyperparameter count then `(key, value)` string pairs, u32 tensor
//! count then `(name, u32 ndim, u32 dims…, f32 values)` records. Strings
//! are u32 length + UTF-8. Both maps are written in name order, so equal
//! content gives equal bytes.

use std::path::Path;

use gesture_core::nn::{ModelCheckpoint, Tensor};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CKPT";
pub const VERSION: u32 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_checkpoint(ck: &ModelCheckpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&ck.step.to_le_bytes());
    out.extend_from_slice(&ck.seed.to_le_bytes());
    out.extend_from_slice(&(ck.hyper.len() as u32).to_le_bytes());
    for (k, v) in &ck.hyper {
        put_str(&mut out, k);
        put_str(&mut out, v);
    }
    out.extend_from_slice(&(ck.params.len() as u32).to_le_bytes());
    for (name, t) in &ck.params {
        put_str(&mut out, name);
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
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
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!(
                "truncated checkpoint: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("checkpoint string is not UTF-8".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelCheckpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::Format("not a CKPT file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut ck = ModelCheckpoint {
        step: r.u64()?,
        seed: r.u64()?,
        ..Default::default()
    };
    for _ in 0..r.u32()? {
        let k = r.string()?;
        let v = r.string()?;
        ck.hyper.insert(k, v);
    }
    for _ in 0..r.u32()? {
        let name = r.string()?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = shape.iter().product();
        let raw = r.take(count.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("tensor `{name}` holds non-finite values")));
        }
        ck.params.insert(name, Tensor::new(&shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }
    Ok(ck)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    decode_checkpoint(&crate::error::read(path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn save_checkpoint(path: &Path, ck: &ModelCheckpoint) -> Result<()> {
    crate::error::write(path, encode_checkpoint(ck))
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let digest = Sha256::digest(crate::error::read(path)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
