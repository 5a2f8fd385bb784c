//! Ensembles of end-to-end conv/LSTM networks for audio paralinguistics, with
//! gradient-saliency feature selection.
//!
//! The pipeline: extract features ([`dsp`]), train an ensemble ([`ensemble`],
//! [`nn`]), score input bands by accumulated absolute gradients and vote on a
//! subset ([`selection`]), retrain on the subset, then measure quality and
//! latency ([`eval`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the element type to `f64`, which the gradient checks and file formats assume.

pub mod data;
pub mod dsp;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod losses;
pub mod matrix;
pub mod nn;
pub mod scalar;
pub mod selection;

pub use error::{Error, Result};
pub use matrix::{BandLabel, FeatureMatrix, Inputs};
pub use scalar::Scalar;

pub type AudioBuffer64 = dsp::AudioBuffer<f64>;
pub type FeatureMatrix64 = FeatureMatrix<f64>;
pub type FeatureMatrix32 = FeatureMatrix<f32>;
pub type Inputs64 = Inputs<f64>;
pub type Parameters64 = nn::Parameters<f64>;
pub type Model64 = nn::Model<f64>;
pub type Dataset64 = data::Dataset<f64>;
pub type Example64 = data::LabeledExample<f64>;
pub type Ensemble64 = ensemble::Ensemble<f64>;
pub type Ensemble32 = ensemble::Ensemble<f32>;
