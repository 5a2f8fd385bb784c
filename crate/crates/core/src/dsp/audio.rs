use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mono waveform with amplitudes nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Scalar> AudioBuffer<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::invalid("audio buffer is empty"));
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite {
                index,
                context: "audio sample".into(),
            });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Pure tone `amplitude * sin(2π f t)`.
    pub fn sine(freq: f64, amplitude: f64, sample_rate: u32, n_samples: usize) -> Result<Self> {
        let w = 2.0 * std::f64::consts::PI * freq / f64::from(sample_rate);
        let samples = (0..n_samples)
            .map(|n| T::lit(amplitude * (w * n as f64).sin()))
            .collect();
        Self::new(samples, sample_rate)
    }

    pub fn silence(sample_rate: u32, n_samples: usize) -> Result<Self> {
        Self::new(vec![T::zero(); n_samples], sample_rate)
    }

    /// Reads a 16-bit signed PCM mono RIFF file. No resampling is performed, so the
    /// file rate must match `expected_rate`.
    pub fn read_wav(path: impl AsRef<Path>, expected_rate: u32) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        if spec.channels != 1
            || spec.bits_per_sample != 16
            || spec.sample_format != hound::SampleFormat::Int
        {
            return Err(Error::data(format!(
                "{}: expected 16-bit PCM mono, found {} channel(s), {} bits, {:?}",
                path.display(),
                spec.channels,
                spec.bits_per_sample,
                spec.sample_format
            )));
        }
        if spec.sample_rate != expected_rate {
            return Err(Error::data(format!(
                "{}: sample rate {} Hz differs from expected {expected_rate} Hz",
                path.display(),
                spec.sample_rate
            )));
        }
        let scale = T::lit(1.0 / 32768.0);
        let samples = reader
            .samples::<i16>()
            .map(|s| s.map(|v| T::lit(f64::from(v)) * scale))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(samples, spec.sample_rate)
    }

    /// Writes the buffer as 16-bit PCM mono, clipping to the representable range.
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path, spec)?;
        for &s in &self.samples {
            let v = (s.as_f64() * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(v)?;
        }
        writer.finalize()?;
        Ok(())
    }
}
