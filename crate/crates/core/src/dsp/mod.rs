//! Audio front end: pre-emphasis, Butterworth low-pass, log-mel spectrograms,
//! low/high energy ratios and column plumbing for feature matrices.

mod audio;
mod features;
mod filter;
mod spectral;

pub use audio::AudioBuffer;
pub use features::{band_select, stack_time, BranchFeatures, FeatureKind, FeaturePipeline};
pub use filter::{
    butterworth_lowpass, preemphasize, Biquad, Butterworth, PreEmphasisConfig,
    MAX_BUTTERWORTH_ORDER,
};
pub use spectral::{
    frequency_ratio, hz_to_mel, log_mel_bands, log_mel_spectrogram, mel_to_hz, MelFilterbank,
    SpectrogramConfig, RATIO_EPSILON,
};
