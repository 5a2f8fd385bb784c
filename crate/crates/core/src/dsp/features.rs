use crate::dsp::{
    butterworth_lowpass, frequency_ratio, log_mel_bands, preemphasize, AudioBuffer,
    PreEmphasisConfig, SpectrogramConfig,
};
use crate::error::{Error, Result};
use crate::matrix::{BandLabel, FeatureMatrix, Inputs};
use crate::scalar::Scalar;
use crate::selection::FeatureMask;

/// Keeps only the masked columns, in ascending index order.
pub fn band_select<T: Scalar>(
    features: &FeatureMatrix<T>,
    mask: &FeatureMask,
) -> Result<FeatureMatrix<T>> {
    let f = features.n_bands();
    if let Some(&bad) = mask.indices().iter().find(|&&i| i >= f) {
        return Err(Error::invalid(format!(
            "mask index {bad} out of range for {f} bands"
        )));
    }
    let idx = mask.indices();
    let mut values = Vec::with_capacity(features.n_frames() * idx.len());
    for t in 0..features.n_frames() {
        let row = features.row(t);
        values.extend(idx.iter().map(|&i| row[i]));
    }
    let labels = idx
        .iter()
        .map(|&i| features.band_labels()[i].clone())
        .collect();
    FeatureMatrix::new(values, features.n_frames(), labels, features.frame_rate())
}

/// Column-wise concatenation of matrices that share frame count and rate.
pub fn stack_time<T: Scalar>(features: &[FeatureMatrix<T>]) -> Result<FeatureMatrix<T>> {
    let first = features
        .first()
        .ok_or_else(|| Error::invalid("nothing to stack"))?;
    for (i, m) in features.iter().enumerate().skip(1) {
        if m.n_frames() != first.n_frames() {
            return Err(Error::shape(format!(
                "input {i} has {} frames, expected {}",
                m.n_frames(),
                first.n_frames()
            )));
        }
        if m.frame_rate() != first.frame_rate() {
            return Err(Error::shape(format!(
                "input {i} has frame rate {}, expected {}",
                m.frame_rate(),
                first.frame_rate()
            )));
        }
    }
    let width: usize = features.iter().map(FeatureMatrix::n_bands).sum();
    let mut values = Vec::with_capacity(first.n_frames() * width);
    for t in 0..first.n_frames() {
        for m in features {
            values.extend_from_slice(m.row(t));
        }
    }
    let labels = features
        .iter()
        .flat_map(|m| m.band_labels().iter().cloned())
        .collect();
    FeatureMatrix::new(values, first.n_frames(), labels, first.frame_rate())
}

/// Which representation feeds a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    LogMel,
    /// Pre-emphasis, then Butterworth low-pass, then log-mel.
    PreemphasizedLogMel,
    FrequencyRatio,
    /// Waveform as a `samples × 1` matrix.
    Raw,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::LogMel => "logmel",
            FeatureKind::PreemphasizedLogMel => "preemph",
            FeatureKind::FrequencyRatio => "ratio",
            FeatureKind::Raw => "raw",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "logmel" => FeatureKind::LogMel,
            "preemph" => FeatureKind::PreemphasizedLogMel,
            "ratio" => FeatureKind::FrequencyRatio,
            "raw" => FeatureKind::Raw,
            other => return Err(Error::invalid(format!("unknown feature kind {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchFeatures {
    pub name: String,
    pub kind: FeatureKind,
    pub mask: Option<FeatureMask>,
}

/// Audio → named network inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePipeline {
    pub spectrogram: SpectrogramConfig,
    pub preemphasis: PreEmphasisConfig,
    pub lowpass_order: usize,
    pub lowpass_cutoff: f64,
    pub ratio_boundary: f64,
    pub branches: Vec<BranchFeatures>,
}

impl Default for FeaturePipeline {
    fn default() -> Self {
        Self {
            spectrogram: SpectrogramConfig::default(),
            preemphasis: PreEmphasisConfig::default(),
            lowpass_order: 5,
            lowpass_cutoff: 400.0,
            ratio_boundary: 400.0,
            branches: vec![BranchFeatures {
                name: "spect".into(),
                kind: FeatureKind::LogMel,
                mask: None,
            }],
        }
    }
}

impl FeaturePipeline {
    pub fn single(name: &str, kind: FeatureKind, mask: Option<FeatureMask>) -> Self {
        Self {
            branches: vec![BranchFeatures {
                name: name.into(),
                kind,
                mask,
            }],
            ..Self::default()
        }
    }

    pub fn extract<T: Scalar>(&self, audio: &AudioBuffer<T>) -> Result<Inputs<T>> {
        let mut out = Inputs::new();
        for b in &self.branches {
            let m = self.extract_branch(audio, b)?;
            out.insert(b.name.clone(), m);
        }
        Ok(out)
    }

    fn extract_branch<T: Scalar>(
        &self,
        audio: &AudioBuffer<T>,
        b: &BranchFeatures,
    ) -> Result<FeatureMatrix<T>> {
        let full = match b.kind {
            FeatureKind::LogMel => {
                // only the selected filters are evaluated
                return log_mel_bands(audio, &self.spectrogram, b.mask.as_ref().map(|m| m.indices()));
            }
            FeatureKind::PreemphasizedLogMel => {
                let x = preemphasize(audio, self.preemphasis)?;
                let x = butterworth_lowpass(&x, self.lowpass_order, self.lowpass_cutoff)?;
                return log_mel_bands(&x, &self.spectrogram, b.mask.as_ref().map(|m| m.indices()));
            }
            FeatureKind::FrequencyRatio => {
                frequency_ratio(audio, &self.spectrogram, self.ratio_boundary)?
            }
            FeatureKind::Raw => FeatureMatrix::new(
                audio.samples().to_vec(),
                audio.len(),
                vec![BandLabel::Amplitude],
                f64::from(audio.sample_rate()),
            )?,
        };
        match &b.mask {
            Some(mask) => band_select(&full, mask),
            None => Ok(full),
        }
    }
}
