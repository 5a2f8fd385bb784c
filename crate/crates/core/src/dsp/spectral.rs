//! STFT-based features: log-mel spectrograms and low/high energy ratios.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use crate::matrix::{BandLabel, FeatureMatrix};
use crate::scalar::Scalar;

/// Absolute power guard for the energy ratio.
pub const RATIO_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mel: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            n_fft: 512,
            hop: 160,
            n_mel: 128,
            fmin: 20.0,
            fmax: 8_000.0,
            log_floor: 1e-10,
        }
    }
}

impl SpectrogramConfig {
    pub fn validate(&self) -> Result<()> {
        let nyquist = f64::from(self.sample_rate) / 2.0;
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if self.n_fft == 0 || self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::invalid(format!(
                "need 0 < hop ({}) <= n_fft ({})",
                self.hop, self.n_fft
            )));
        }
        if self.n_mel == 0 {
            return Err(Error::invalid("n_mel must be at least 1"));
        }
        if !(self.fmin > 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(Error::invalid(format!(
                "need 0 < fmin ({}) < fmax ({}) <= nyquist ({nyquist})",
                self.fmin, self.fmax
            )));
        }
        if !(self.log_floor.is_finite() && self.log_floor > 0.0) {
            return Err(Error::invalid("log floor must be positive"));
        }
        Ok(())
    }

    pub fn frame_rate(&self) -> f64 {
        f64::from(self.sample_rate) / self.hop as f64
    }

    /// Number of frames produced for `n_samples` of audio (trailing partial frames are dropped).
    pub fn n_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.n_fft {
            0
        } else {
            1 + (n_samples - self.n_fft) / self.hop
        }
    }

    fn check_audio<T: Scalar>(&self, audio: &AudioBuffer<T>) -> Result<()> {
        self.validate()?;
        if audio.sample_rate() != self.sample_rate {
            return Err(Error::invalid(format!(
                "audio rate {} Hz differs from configured {} Hz",
                audio.sample_rate(),
                self.sample_rate
            )));
        }
        if audio.len() < self.n_fft {
            return Err(Error::invalid(format!(
                "audio of {} samples is shorter than one frame ({})",
                audio.len(),
                self.n_fft
            )));
        }
        Ok(())
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filterbank on the HTK mel scale.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    centers: Vec<f64>,
    /// Per filter: first FFT bin and the weights that follow it.
    filters: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    pub fn new(cfg: &SpectrogramConfig) -> Result<Self> {
        cfg.validate()?;
        let lo = hz_to_mel(cfg.fmin);
        let hi = hz_to_mel(cfg.fmax);
        let step = (hi - lo) / (cfg.n_mel + 1) as f64;
        let edges: Vec<f64> = (0..cfg.n_mel + 2)
            .map(|i| mel_to_hz(lo + step * i as f64))
            .collect();
        let n_bins = cfg.n_fft / 2 + 1;
        let bin_hz = f64::from(cfg.sample_rate) / cfg.n_fft as f64;

        let filters = (0..cfg.n_mel)
            .map(|m| {
                let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > left && f <= center {
                            (f - left) / (center - left)
                        } else if f > center && f < right {
                            (right - f) / (right - center)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                match weights.first() {
                    Some(&(start, _)) => (start, weights.iter().map(|&(_, w)| w).collect()),
                    None => (0, Vec::new()),
                }
            })
            .collect();
        Ok(Self {
            centers: edges[1..=cfg.n_mel].to_vec(),
            filters,
        })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    fn apply<T: Scalar>(&self, band: usize, power: &[T]) -> T {
        let (start, weights) = &self.filters[band];
        weights
            .iter()
            .zip(&power[*start..])
            .fold(T::zero(), |acc, (&w, &p)| acc + T::lit(w) * p)
    }
}

/// Reusable Hann-windowed power-spectrum engine.
struct PowerStft<T: Scalar> {
    fft: Arc<dyn Fft<T>>,
    window: Vec<T>,
    n_fft: usize,
    hop: usize,
}

impl<T: Scalar> PowerStft<T> {
    fn new(n_fft: usize, hop: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n_fft);
        // periodic Hann
        let window = (0..n_fft)
            .map(|n| {
                T::lit(0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / n_fft as f64).cos())
            })
            .collect();
        Self {
            fft,
            window,
            n_fft,
            hop,
        }
    }

    /// Calls `sink(frame_index, power)` for every full frame.
    fn for_each_frame(&self, x: &[T], mut sink: impl FnMut(usize, &[T])) {
        let n_frames = 1 + (x.len() - self.n_fft) / self.hop;
        let n_bins = self.n_fft / 2 + 1;
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.n_fft];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.fft.get_inplace_scratch_len()];
        let mut power = vec![T::zero(); n_bins];
        for t in 0..n_frames {
            let frame = &x[t * self.hop..t * self.hop + self.n_fft];
            for ((b, &s), &w) in buf.iter_mut().zip(frame).zip(&self.window) {
                *b = Complex::new(s * w, T::zero());
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, b) in power.iter_mut().zip(&buf) {
                *p = b.norm_sqr();
            }
            sink(t, &power);
        }
    }
}

/// Log-mel spectrogram: `ln(mel power + log_floor)` for every frame and band.
pub fn log_mel_spectrogram<T: Scalar>(
    audio: &AudioBuffer<T>,
    cfg: &SpectrogramConfig,
) -> Result<FeatureMatrix<T>> {
    log_mel_bands(audio, cfg, None)
}

/// Like [`log_mel_spectrogram`] but only evaluates the listed bands (in the
/// given order). Produces exactly the selected columns of the full matrix.
pub fn log_mel_bands<T: Scalar>(
    audio: &AudioBuffer<T>,
    cfg: &SpectrogramConfig,
    bands: Option<&[usize]>,
) -> Result<FeatureMatrix<T>> {
    cfg.check_audio(audio)?;
    let bank = MelFilterbank::new(cfg)?;
    let all: Vec<usize>;
    let bands = match bands {
        Some(b) => {
            if let Some(&bad) = b.iter().find(|&&i| i >= bank.len()) {
                return Err(Error::invalid(format!(
                    "band index {bad} out of range for {} mel bands",
                    bank.len()
                )));
            }
            b
        }
        None => {
            all = (0..bank.len()).collect();
            &all
        }
    };
    let floor = T::lit(cfg.log_floor);
    let n_frames = cfg.n_frames(audio.len());
    let mut values = Vec::with_capacity(n_frames * bands.len());
    PowerStft::new(cfg.n_fft, cfg.hop).for_each_frame(audio.samples(), |_, power| {
        values.extend(bands.iter().map(|&m| (bank.apply(m, power) + floor).ln()));
    });
    let labels = bands
        .iter()
        .map(|&m| BandLabel::Hz(bank.centers()[m]))
        .collect();
    FeatureMatrix::new(values, n_frames, labels, cfg.frame_rate())
}

/// Per-frame ratio of spectral power below `boundary` Hz to power at or above it.
pub fn frequency_ratio<T: Scalar>(
    audio: &AudioBuffer<T>,
    cfg: &SpectrogramConfig,
    boundary: f64,
) -> Result<FeatureMatrix<T>> {
    cfg.check_audio(audio)?;
    let nyquist = f64::from(cfg.sample_rate) / 2.0;
    if !(boundary > 0.0 && boundary < nyquist) {
        return Err(Error::invalid(format!(
            "ratio boundary {boundary} Hz must lie in (0, {nyquist})"
        )));
    }
    let bin_hz = f64::from(cfg.sample_rate) / cfg.n_fft as f64;
    let eps = T::lit(RATIO_EPSILON);
    let n_frames = cfg.n_frames(audio.len());
    let mut values = Vec::with_capacity(n_frames);
    PowerStft::new(cfg.n_fft, cfg.hop).for_each_frame(audio.samples(), |_, power| {
        let (mut low, mut high) = (T::zero(), T::zero());
        for (k, &p) in power.iter().enumerate() {
            if (k as f64) * bin_hz < boundary {
                low += p;
            } else {
                high += p;
            }
        }
        values.push((low + eps) / (high + eps));
    });
    FeatureMatrix::new(values, n_frames, vec![BandLabel::Ratio], cfg.frame_rate())
}
