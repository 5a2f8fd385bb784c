//! Time-domain filters applied before spectral analysis.

use rustfft::num_complex::Complex;

use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Highest Butterworth order accepted; coefficients degrade past this.
pub const MAX_BUTTERWORTH_ORDER: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreEmphasisConfig {
    pub coefficient: f64,
}

impl Default for PreEmphasisConfig {
    fn default() -> Self {
        Self { coefficient: 0.97 }
    }
}

impl PreEmphasisConfig {
    pub fn new(coefficient: f64) -> Result<Self> {
        if !(coefficient.is_finite() && (0.0..1.0).contains(&coefficient)) {
            return Err(Error::invalid(format!(
                "pre-emphasis coefficient {coefficient} outside [0, 1)"
            )));
        }
        Ok(Self { coefficient })
    }
}

/// First-order FIR `y[n] = x[n] - c * x[n-1]`, with `y[0] = x[0]`.
pub fn preemphasize<T: Scalar>(
    audio: &AudioBuffer<T>,
    cfg: PreEmphasisConfig,
) -> Result<AudioBuffer<T>> {
    let cfg = PreEmphasisConfig::new(cfg.coefficient)?;
    let c = T::lit(cfg.coefficient);
    let x = audio.samples();
    let mut out = Vec::with_capacity(x.len());
    out.push(x[0]);
    for n in 1..x.len() {
        out.push(x[n] - c * x[n - 1]);
    }
    AudioBuffer::new(out, audio.sample_rate())
}

/// One biquad `b0 + b1 z^-1 + b2 z^-2 / 1 + a1 z^-1 + a2 z^-2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Complex frequency response at normalised angular frequency `omega` (rad/sample).
    pub fn response(&self, omega: f64) -> Complex<f64> {
        let z1 = Complex::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        let num = self.b[0] + z1 * self.b[1] + z2 * self.b[2];
        let den = Complex::new(1.0, 0.0) + z1 * self.a[0] + z2 * self.a[1];
        num / den
    }
}

/// Digital Butterworth low-pass as cascaded second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    sections: Vec<Biquad>,
    order: usize,
    cutoff: f64,
    sample_rate: u32,
}

impl Butterworth {
    /// Designs the analog prototype, prewarps the cutoff and maps it through the
    /// bilinear transform. Each section is normalised to unit gain at DC.
    pub fn lowpass(order: usize, cutoff: f64, sample_rate: u32) -> Result<Self> {
        let fs = f64::from(sample_rate);
        if order == 0 || order > MAX_BUTTERWORTH_ORDER {
            return Err(Error::invalid(format!(
                "butterworth order {order} outside 1..={MAX_BUTTERWORTH_ORDER}"
            )));
        }
        if !(cutoff.is_finite() && cutoff > 0.0 && cutoff < fs / 2.0) {
            return Err(Error::invalid(format!(
                "cutoff {cutoff} Hz must lie strictly between 0 and Nyquist ({} Hz)",
                fs / 2.0
            )));
        }
        let k = 2.0 * fs;
        let warped = k * (std::f64::consts::PI * cutoff / fs).tan();
        let n = order as f64;

        let mut sections = Vec::with_capacity(order.div_ceil(2));
        // Poles in the upper half plane; the conjugates are implied.
        for i in 0..order / 2 {
            let theta = std::f64::consts::PI * (2.0 * i as f64 + n + 1.0) / (2.0 * n);
            let s = Complex::from_polar(warped, theta);
            let z = (Complex::new(k, 0.0) + s) / (Complex::new(k, 0.0) - s);
            let a1 = -2.0 * z.re;
            let a2 = z.norm_sqr();
            let gain = (1.0 + a1 + a2) / 4.0;
            sections.push(Biquad {
                b: [gain, 2.0 * gain, gain],
                a: [a1, a2],
            });
        }
        if order % 2 == 1 {
            let p = (k - warped) / (k + warped);
            let gain = (1.0 - p) / 2.0;
            sections.push(Biquad {
                b: [gain, gain, 0.0],
                a: [-p, 0.0],
            });
        }
        Ok(Self {
            sections,
            order,
            cutoff,
            sample_rate,
        })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Magnitude response at `freq` Hz.
    pub fn magnitude(&self, freq: f64) -> f64 {
        let omega = 2.0 * std::f64::consts::PI * freq / f64::from(self.sample_rate);
        self.sections
            .iter()
            .map(|s| s.response(omega).norm())
            .product()
    }

    /// Runs the cascade over `x` from a zero state (transposed direct form II).
    pub fn apply<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let mut y: Vec<T> = x.to_vec();
        for s in &self.sections {
            let [b0, b1, b2] = s.b.map(T::lit);
            let [a1, a2] = s.a.map(T::lit);
            let (mut z1, mut z2) = (T::zero(), T::zero());
            for v in y.iter_mut() {
                let input = *v;
                let out = b0 * input + z1;
                z1 = b1 * input - a1 * out + z2;
                z2 = b2 * input - a2 * out;
                *v = out;
            }
        }
        y
    }
}

/// Low-pass filters `audio` with an `order`-pole Butterworth design.
pub fn butterworth_lowpass<T: Scalar>(
    audio: &AudioBuffer<T>,
    order: usize,
    cutoff: f64,
) -> Result<AudioBuffer<T>> {
    let filter = Butterworth::lowpass(order, cutoff, audio.sample_rate())?;
    AudioBuffer::new(filter.apply(audio.samples()), audio.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buf(v: &[f64]) -> AudioBuffer<f64> {
        AudioBuffer::new(v.to_vec(), 16_000).unwrap()
    }

    /// Steady-state amplitude of a filtered sine, measured by projecting the
    /// last `window` samples (an integer number of cycles) onto sin/cos.
    fn steady_state_gain(filter: &Butterworth, freq: f64) -> f64 {
        let fs = 16_000.0;
        let n = 32_000;
        let window = 16_000;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin())
            .collect();
        let y = filter.apply(&x);
        let (mut s, mut c) = (0.0, 0.0);
        for (i, v) in y.iter().enumerate().skip(n - window) {
            let ph = 2.0 * std::f64::consts::PI * freq * i as f64 / fs;
            s += v * ph.sin();
            c += v * ph.cos();
        }
        2.0 * (s * s + c * c).sqrt() / window as f64
    }

    #[test]
    fn preemphasis_impulse() {
        let y = preemphasize(&buf(&[1.0, 0.0, 0.0]), PreEmphasisConfig::default()).unwrap();
        assert_eq!(y.samples(), &[1.0, -0.97, 0.0]);
    }

    #[test]
    fn preemphasis_constant_input() {
        let y = preemphasize(&buf(&[5.0, 5.0, 5.0]), PreEmphasisConfig::default()).unwrap();
        for (got, want) in y.samples().iter().zip([5.0, 0.15, 0.15]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn preemphasis_zero_coefficient_is_identity() {
        let x = buf(&[0.3, -0.2, 0.9, 0.1]);
        let y = preemphasize(&x, PreEmphasisConfig { coefficient: 0.0 }).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn preemphasis_rejects_bad_coefficient() {
        let x = buf(&[0.3]);
        assert!(preemphasize(&x, PreEmphasisConfig { coefficient: 1.0 }).is_err());
        assert!(preemphasize(&x, PreEmphasisConfig { coefficient: f64::NAN }).is_err());
    }

    #[test]
    fn non_finite_sample_reports_index() {
        match AudioBuffer::new(vec![0.0, 1.0, f64::NAN], 16_000) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn butterworth_dc_gain_is_one() {
        let x = buf(&vec![0.5; 8000]);
        let y = butterworth_lowpass(&x, 5, 400.0).unwrap();
        assert!((y.samples()[7999] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn butterworth_cutoff_is_half_power() {
        let f = Butterworth::lowpass(5, 400.0, 16_000).unwrap();
        let g = steady_state_gain(&f, 400.0);
        assert!((g - std::f64::consts::FRAC_1_SQRT_2).abs() / std::f64::consts::FRAC_1_SQRT_2 < 0.01);
        assert!((f.magnitude(400.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn butterworth_octave_above_cutoff() {
        let f = Butterworth::lowpass(5, 400.0, 16_000).unwrap();
        // analog prototype 1/sqrt(1 + 2^10)
        let analog = 1.0 / (1.0f64 + 2f64.powi(10)).sqrt();
        let g = steady_state_gain(&f, 800.0);
        assert!((g - analog).abs() / analog < 0.05, "gain {g} vs {analog}");
    }

    #[test]
    fn butterworth_matches_prewarped_closed_form() {
        let fs = 16_000.0;
        let f = Butterworth::lowpass(5, 400.0, 16_000).unwrap();
        for freq in [50.0, 200.0, 400.0, 800.0, 2000.0, 6000.0] {
            let ratio = (std::f64::consts::PI * freq / fs).tan()
                / (std::f64::consts::PI * 400.0 / fs).tan();
            let want = 1.0 / (1.0 + ratio.powi(10)).sqrt();
            assert!((f.magnitude(freq) - want).abs() < 1e-9 * want.max(1e-6));
        }
    }

    #[test]
    fn butterworth_magnitude_monotone_over_sweep() {
        let f = Butterworth::lowpass(5, 400.0, 16_000).unwrap();
        let gains: Vec<f64> = (1..=60).map(|k| steady_state_gain(&f, 60.0 * k as f64)).collect();
        for w in gains.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} then {}", w[0], w[1]);
        }
    }

    #[test]
    fn butterworth_rejects_bad_design() {
        assert!(Butterworth::lowpass(5, 8000.0, 16_000).is_err());
        assert!(Butterworth::lowpass(5, 0.0, 16_000).is_err());
        assert!(Butterworth::lowpass(13, 400.0, 16_000).is_err());
        assert!(Butterworth::lowpass(0, 400.0, 16_000).is_err());
        assert!(Butterworth::lowpass(12, 400.0, 16_000).is_ok());
    }

    #[test]
    fn even_order_uses_only_biquads() {
        let f = Butterworth::lowpass(4, 1000.0, 16_000).unwrap();
        assert_eq!(f.sections().len(), 2);
        assert!((f.magnitude(0.0) - 1.0).abs() < 1e-12);
    }
}
