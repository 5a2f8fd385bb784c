//! Conv/pool/LSTM/dense networks with hand-written reverse-mode gradients.

mod graph;
mod model_file;
mod params;
mod spec;
mod train;

pub use graph::{
    backward, forward, forward_trace, output_gradient, vjp, GradientBundle, OutputUnit,
    Prediction, Seq, Trace,
};
pub(crate) use graph::argmax;
pub use model_file::{Model, MODEL_MAGIC, MODEL_VERSION};
pub(crate) use model_file::{mask_from_value, mask_to_value, parse_kv};
pub use params::{init, LayerRef, ParamLayout, Parameters};
pub use spec::{Activation, BranchSpec, ConvLstmShape, LayerSpec, NetworkSpec, Padding, Task};
pub use train::{train, Adam, EpochRecord, TrainConfig, TrainLog};
