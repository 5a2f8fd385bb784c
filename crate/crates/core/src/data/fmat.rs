//! `FMAT1` matrix container: magic, `u64` frame and band counts, `f64` frame
//! rate, length-prefixed UTF-8 band labels, then row-major `f64` cells. All
//! integers and floats are little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{BandLabel, FeatureMatrix};
use crate::scalar::Scalar;

pub const FMAT_MAGIC: &[u8; 5] = b"FMAT1";

pub fn matrix_to_bytes<T: Scalar>(m: &FeatureMatrix<T>) -> Result<Vec<u8>> {
    if m.n_frames() == 0 {
        return Err(Error::shape("refusing to save a matrix with zero frames"));
    }
    let mut out = Vec::with_capacity(32 + 8 * m.values().len());
    out.extend_from_slice(FMAT_MAGIC);
    out.extend_from_slice(&(m.n_frames() as u64).to_le_bytes());
    out.extend_from_slice(&(m.n_bands() as u64).to_le_bytes());
    out.extend_from_slice(&m.frame_rate().to_le_bytes());
    for label in m.band_labels() {
        let s = label.to_string();
        out.extend_from_slice(&(s.len() as u64).to_le_bytes());
        out.extend_from_slice(s.as_bytes());
    }
    for v in m.values() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::corrupt(format!("FMAT1 truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn matrix_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<FeatureMatrix<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(5, "magic")? != FMAT_MAGIC {
        return Err(Error::corrupt("missing FMAT1 magic"));
    }
    let t = usize::try_from(r.u64("frame count")?).map_err(|_| Error::corrupt("frame count overflow"))?;
    let f = usize::try_from(r.u64("band count")?).map_err(|_| Error::corrupt("band count overflow"))?;
    if t == 0 || f == 0 {
        return Err(Error::corrupt(format!("FMAT1 declares a {t}x{f} matrix")));
    }
    let frame_rate = r.f64("frame rate")?;
    let mut labels = Vec::with_capacity(f.min(1 << 16));
    for _ in 0..f {
        let len = r.u64("label length")? as usize;
        let s = std::str::from_utf8(r.take(len, "label")?)
            .map_err(|_| Error::corrupt("band label is not UTF-8"))?;
        labels.push(s.parse::<BandLabel>()?);
    }
    let cells = t
        .checked_mul(f)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::corrupt("matrix size overflow"))?;
    let values = r
        .take(cells, "cells")?
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    if r.pos != bytes.len() {
        return Err(Error::corrupt(format!(
            "{} trailing bytes after FMAT1 cells",
            bytes.len() - r.pos
        )));
    }
    FeatureMatrix::new(values, t, labels, frame_rate)
        .map_err(|e| Error::corrupt(format!("FMAT1 payload invalid: {e}")))
}

pub fn save_matrix<T: Scalar>(path: impl AsRef<Path>, m: &FeatureMatrix<T>) -> Result<()> {
    std::fs::write(path, matrix_to_bytes(m)?)?;
    Ok(())
}

pub fn load_matrix<T: Scalar>(path: impl AsRef<Path>) -> Result<FeatureMatrix<T>> {
    matrix_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureMatrix<f64> {
        FeatureMatrix::new(
            vec![0.1, -2.5, 1e-300, f64::MAX, -0.0, 3.0],
            3,
            vec![BandLabel::Hz(126.7), BandLabel::Ratio],
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_bitwise() {
        let m = sample();
        let bytes = matrix_to_bytes(&m).unwrap();
        let back: FeatureMatrix<f64> = matrix_from_bytes(&bytes).unwrap();
        let bits = |m: &FeatureMatrix<f64>| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
        assert_eq!(back, m);
    }

    #[test]
    fn truncation_is_corrupt() {
        let bytes = matrix_to_bytes(&sample()).unwrap();
        for cut in [0, 4, 12, 30, bytes.len() - 1] {
            let err = matrix_from_bytes::<f64>(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::Corrupt(_)), "cut {cut}: {err}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matrix_from_bytes::<f64>(&extra).is_err());
    }

    #[test]
    fn zero_frames_rejected() {
        assert!(FeatureMatrix::<f64>::new(vec![], 0, vec![BandLabel::Ratio], 1.0).is_err());
        let mut bytes = matrix_to_bytes(&sample()).unwrap();
        bytes[5..13].copy_from_slice(&0u64.to_le_bytes());
        assert!(matches!(matrix_from_bytes::<f64>(&bytes), Err(Error::Corrupt(_))));
    }
}
