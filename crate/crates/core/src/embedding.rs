//! Dense row-major embedding matrices and the `.mme` on-disk format.
//!
//! An `.mme` file is: magic `MMTS`, u32 version (1), u64 row count, u64
//! column count, then rows * cols f32 values, all little-endian, row-major,
//! with no trailing bytes. Values are widened to f64 in memory; every
//! computation in this crate runs in f64.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MME_MAGIC: [u8; 4] = *b"MMTS";
const MME_VERSION: u32 = 1;
const MME_HEADER_LEN: usize = 4 + 4 + 8 + 8;

/// Row-major matrix of `n` embedding rows with `d` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    /// Builds a matrix, rejecting empty shapes, length mismatches, and
    /// non-finite entries.
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "embedding shape must be positive, got {n}x{d}"
            )));
        }
        let expected = n
            .checked_mul(d)
            .ok_or_else(|| Error::InvalidArgument(format!("embedding shape {n}x{d} overflows")))?;
        if data.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "embedding data has {} values, shape {n}x{d} needs {expected}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at row {} col {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { n, d, data })
    }

    /// Zero matrix of the given shape.
    pub fn zeros(n: usize, d: usize) -> Result<Self> {
        Self::new(n, d, vec![0.0; n.checked_mul(d).unwrap_or(0)])
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    /// Copies the given rows (in order, repeats allowed) into a new matrix.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("cannot gather zero rows".into()));
        }
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(Error::Index(format!(
                    "row {i} out of bounds for {} rows",
                    self.n
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.d, data)
    }

    /// Returns a copy with every row scaled to unit L2 norm. A zero row has
    /// no direction and is rejected; an overflowing norm is rejected too.
    pub fn l2_normalized(&self) -> Result<Self> {
        let mut data = self.data.clone();
        for i in 0..self.n {
            let row = &mut data[i * self.d..(i + 1) * self.d];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::Numeric(format!("row {i} has norm {norm}")));
            }
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
        Self::new(self.n, self.d, data)
    }

    /// Largest deviation of any row norm from 1.
    pub fn max_unit_norm_deviation(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let norm = self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                (norm - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Serializes to the `.mme` byte layout.
    pub fn to_mme_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MME_HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(&MME_MAGIC);
        out.extend_from_slice(&MME_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.d as u64).to_le_bytes());
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    /// Parses the `.mme` byte layout, rejecting bad magic, unknown versions,
    /// truncated payloads, trailing bytes, and non-finite values.
    pub fn from_mme_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MME_HEADER_LEN {
            return Err(Error::Format(format!(
                "file too short for header: {} bytes",
                bytes.len()
            )));
        }
        if bytes[0..4] != MME_MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:02x?}, expected {:02x?}",
                &bytes[0..4],
                MME_MAGIC
            )));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != MME_VERSION {
            return Err(Error::Format(format!(
                "unsupported version {version}, expected {MME_VERSION}"
            )));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let d = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        if n == 0 || d == 0 {
            return Err(Error::Format(format!("empty shape {n}x{d}")));
        }
        let count = n
            .checked_mul(d)
            .filter(|c| *c <= (usize::MAX as u64) / 4)
            .ok_or_else(|| Error::Format(format!("shape {n}x{d} overflows")))?;
        let payload = &bytes[MME_HEADER_LEN..];
        let expected = count as usize * 4;
        if payload.len() < expected {
            return Err(Error::Format(format!(
                "truncated payload: {} bytes, shape {n}x{d} needs {expected}",
                payload.len()
            )));
        }
        if payload.len() > expected {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                payload.len() - expected
            )));
        }
        let data: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Self::new(n as usize, d as usize, data)
    }

    pub fn save_mme<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        fs::write(path, self.to_mme_bytes())?;
        Ok(())
    }

    pub fn load_mme<P: AsRef<Path>>(path: P) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_mme_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingMatrix {
        EmbeddingMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()
    }

    #[test]
    fn round_trip_preserves_f32_values() {
        let m = sample();
        let back = EmbeddingMatrix::from_mme_bytes(&m.to_mme_bytes()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn round_trip_quantizes_to_f32() {
        let v = 0.1f64 + 1e-12;
        let m = EmbeddingMatrix::new(1, 1, vec![v]).unwrap();
        let back = EmbeddingMatrix::from_mme_bytes(&m.to_mme_bytes()).unwrap();
        assert_eq!(back.get(0, 0), v as f32 as f64);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = sample().to_mme_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            EmbeddingMatrix::from_mme_bytes(&bytes),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn rejects_unknown_version() {
        let mut bytes = sample().to_mme_bytes();
        bytes[4] = 2;
        assert!(matches!(
            EmbeddingMatrix::from_mme_bytes(&bytes),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut bytes = sample().to_mme_bytes();
        bytes.truncate(bytes.len() - 4);
        let err = EmbeddingMatrix::from_mme_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn rejects_trailing_bytes() {
        let mut bytes = sample().to_mme_bytes();
        bytes.push(0);
        let err = EmbeddingMatrix::from_mme_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
    }

    #[test]
    fn rejects_non_finite_payload() {
        let mut bytes = sample().to_mme_bytes();
        let nan = f32::NAN.to_le_bytes();
        let last = bytes.len() - 4;
        bytes[last..].copy_from_slice(&nan);
        assert!(matches!(
            EmbeddingMatrix::from_mme_bytes(&bytes),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn rejects_shape_mismatch() {
        assert!(EmbeddingMatrix::new(2, 2, vec![0.0; 3]).is_err());
        assert!(EmbeddingMatrix::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn normalization_produces_unit_rows() {
        let m = sample().l2_normalized().unwrap();
        assert!(m.max_unit_norm_deviation() < 1e-12);
    }

    #[test]
    fn normalization_rejects_zero_row() {
        let m = EmbeddingMatrix::new(1, 2, vec![0.0, 0.0]).unwrap();
        assert!(matches!(m.l2_normalized(), Err(Error::Numeric(_))));
    }

    #[test]
    fn gather_rows_copies_in_order() {
        let m = sample();
        let g = m.gather_rows(&[1, 0, 1]).unwrap();
        assert_eq!(g.rows(), 3);
        assert_eq!(g.row(0), m.row(1));
        assert_eq!(g.row(2), m.row(1));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mme");
        let m = sample();
        m.save_mme(&path).unwrap();
        assert_eq!(EmbeddingMatrix::load_mme(&path).unwrap(), m);
    }
}
