//! Time × band feature matrices, the unit every network branch consumes.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Descriptor of one feature column.
#[derive(Debug, Clone, PartialEq)]
pub enum BandLabel {
    /// Center frequency of a filterbank band.
    Hz(f64),
    /// Low/high energy ratio stream.
    Ratio,
    /// Raw waveform amplitude (single column).
    Amplitude,
}

impl fmt::Display for BandLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandLabel::Hz(v) => write!(f, "{v}"),
            BandLabel::Ratio => f.write_str("ratio"),
            BandLabel::Amplitude => f.write_str("amplitude"),
        }
    }
}

impl FromStr for BandLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio" => Ok(BandLabel::Ratio),
            "amplitude" => Ok(BandLabel::Amplitude),
            other => other
                .parse::<f64>()
                .map(BandLabel::Hz)
                .map_err(|_| Error::corrupt(format!("unrecognised band label {other:?}"))),
        }
    }
}

/// A `T × F` real matrix stored row-major (one row per frame).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    values: Vec<T>,
    n_frames: usize,
    band_labels: Vec<BandLabel>,
    frame_rate: f64,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(
        values: Vec<T>,
        n_frames: usize,
        band_labels: Vec<BandLabel>,
        frame_rate: f64,
    ) -> Result<Self> {
        let n_bands = band_labels.len();
        if n_frames == 0 {
            return Err(Error::shape("feature matrix needs at least one frame"));
        }
        if n_bands == 0 {
            return Err(Error::shape("feature matrix needs at least one band"));
        }
        if values.len() != n_frames * n_bands {
            return Err(Error::shape(format!(
                "{} values do not fill a {n_frames}x{n_bands} matrix",
                values.len()
            )));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::invalid(format!("frame rate {frame_rate} must be positive")));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index,
                context: "feature matrix cell".into(),
            });
        }
        Ok(Self {
            values,
            n_frames,
            band_labels,
            frame_rate,
        })
    }

    /// Builds a matrix whose columns are labelled by their index.
    pub fn from_rows(rows: &[Vec<T>], frame_rate: f64) -> Result<Self> {
        let n_bands = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_bands) {
            return Err(Error::shape("ragged rows"));
        }
        let labels = (0..n_bands).map(|i| BandLabel::Hz(i as f64)).collect();
        Self::new(rows.concat(), rows.len(), labels, frame_rate)
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bands(&self) -> usize {
        self.band_labels.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn band_labels(&self) -> &[BandLabel] {
        &self.band_labels
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    #[inline]
    pub fn get(&self, frame: usize, band: usize) -> T {
        self.values[frame * self.n_bands() + band]
    }

    pub fn row(&self, frame: usize) -> &[T] {
        let f = self.n_bands();
        &self.values[frame * f..(frame + 1) * f]
    }

    pub fn column(&self, band: usize) -> Vec<T> {
        (0..self.n_frames).map(|t| self.get(t, band)).collect()
    }

    /// Mean of every column over time.
    pub fn column_means(&self) -> Vec<T> {
        let f = self.n_bands();
        let mut out = vec![T::zero(); f];
        for t in 0..self.n_frames {
            for (acc, &v) in out.iter_mut().zip(self.row(t)) {
                *acc += v;
            }
        }
        let n = T::from_usize_lossy(self.n_frames);
        out.iter_mut().for_each(|v| *v /= n);
        out
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

/// Named network inputs, one matrix per branch.
pub type Inputs<T> = std::collections::BTreeMap<String, FeatureMatrix<T>>;
