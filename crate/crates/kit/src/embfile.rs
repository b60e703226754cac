//! `EMB1` embedding files: magic, four little-endian u32 header fields
//! (rows, cols, rate in mHz, modality code), then row-major f32 values.

use std::path::Path;

use gesture_core::embedding::{EmbeddingSequence, Modality};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EMB1";
const HEADER: usize = 4 + 4 * 4;

pub fn encode_embeddings(seq: &EmbeddingSequence) -> Result<Vec<u8>> {
    let rate_mhz = (seq.rate * 1000.0).round();
    if !(rate_mhz >= 1.0 && rate_mhz <= u32::MAX as f64) {
        return Err(Error::Format(format!("rate {} Hz not representable in mHz", seq.rate)));
    }
    let dims = [seq.rows(), seq.cols()].map(u32::try_from);
    let [Ok(rows), Ok(cols)] = dims else {
        return Err(Error::Format("embedding too large for the EMB1 header".into()));
    };
    let mut out = Vec::with_capacity(HEADER + 4 * seq.data().len());
    out.extend_from_slice(MAGIC);
    for v in [rows, cols, rate_mhz as u32, seq.modality.code()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in seq.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingSequence> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not an EMB1 file (bad magic)".into()));
    }
    if bytes.len() < HEADER {
        return Err(Error::Format(format!(
            "truncated EMB1 header: expected {HEADER} bytes, got {}",
            bytes.len()
        )));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (rows, cols, rate_mhz, code) = (field(0) as usize, field(1) as usize, field(2), field(3));
    let modality = Modality::from_code(code)
        .ok_or_else(|| Error::Format(format!("unknown modality code {code}")))?;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER))
        .ok_or_else(|| Error::Format(format!("EMB1 dimensions {rows} × {cols} overflow")))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "EMB1 payload size mismatch: expected {expected} bytes, got {}",
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Format(format!(
            "non-finite value at row {}, column {}",
            i / cols.max(1),
            i % cols.max(1)
        )));
    }
    Ok(EmbeddingSequence::new(rate_mhz as f64 / 1000.0, modality, rows, cols, data)?)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingSequence> {
    decode_embeddings(&crate::error::read(path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn save_embeddings(path: &Path, seq: &EmbeddingSequence) -> Result<()> {
    crate::error::write(path, encode_embeddings(seq)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn known_bytes() -> Vec<u8> {
        let mut b = b"EMB1".to_vec();
        for v in [2u32, 3, 50_000, 0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in [1.0f32, -2.0, 0.5, 3.25, 0.0, -0.125] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn known_file_decodes() {
        let s = decode_embeddings(&known_bytes()).unwrap();
        assert_eq!((s.rows(), s.cols(), s.rate, s.modality), (2, 3, 50.0, Modality::Audio));
        assert_eq!(s.data(), &[1.0, -2.0, 0.5, 3.25, 0.0, -0.125]);
        assert_eq!(encode_embeddings(&s).unwrap(), known_bytes());
    }

    #[test]
    fn truncation_reports_sizes() {
        let b = known_bytes();
        let err = decode_embeddings(&b[..b.len() - 3]).unwrap_err().to_string();
        assert!(err.contains("expected 44 bytes, got 41"), "{err}");
        let err = decode_embeddings(&b[..10]).unwrap_err().to_string();
        assert!(err.contains("expected 20 bytes, got 10"), "{err}");
    }

    #[test]
    fn rejects_magic_and_nan() {
        let mut b = known_bytes();
        b[0] = b'X';
        assert!(decode_embeddings(&b).unwrap_err().to_string().contains("magic"));
        let mut b = known_bytes();
        b[24..28].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_embeddings(&b).unwrap_err().to_string().contains("row 0, column 1"));
    }
}
