//! Datasets, splits, the FMAT1 matrix container and synthetic generators.

mod dataset;
mod fmat;
mod manifest;
mod store;
mod synth;

pub use dataset::{Dataset, DatasetMetadata, LabeledExample, Split};
pub use fmat::{load_matrix, matrix_from_bytes, matrix_to_bytes, save_matrix, FMAT_MAGIC};
pub use manifest::{load_audio_dataset, load_manifest_audio, read_target_csv, LengthWarning, ManifestOptions, TargetKind};
pub use synth::{
    regression_target, synth_classification, synth_regression, REGRESSION_OFFSET,
    REGRESSION_SCALE, REGRESSION_SMOOTHING, SYNTH_FRAME_RATE, SYNTH_INPUT,
};
