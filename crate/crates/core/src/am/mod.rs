//! CTC LSTM acoustic model: frontend, float and 8-bit inference, file formats.

mod forward;
mod frontend;
mod model;
mod posteriors;

pub use forward::{lstm_forward, InferenceSession};
pub use frontend::{read_features, stack_frames, write_features, FrontendConfig};
pub use model::{
    count_parameters, AcousticModel, LayerShape, LstmLayer, OutputLayer, QuantizedWeights, Topology,
    Weights, DEFAULT_TARGETS,
};
pub use posteriors::Posteriorgram;
