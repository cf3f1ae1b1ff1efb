//! Toy spectral-convolution model with precision modes, pre-transform
//! stabilizers and hand-derived gradients.

mod experiments;
mod layer;
mod mode;
mod stabilizer;
mod task;
mod train;
mod weights;

pub use experiments::*;
pub use layer::{Activation, Fields, LayerGrads, LayerTape, SpectralLayer};
pub use mode::{Phase, PrecisionMode, PrecisionSchedule};
pub use stabilizer::{stabilize_backward, stabilize_field, StabilizerKind, DEFAULT_HARD_CLIP};
pub use task::{poisson_multiplier, relative_l2, TaskConfig, ToyTask};
pub use train::{evaluate, train, Model, ModelConfig, ModelTape, ParamGrads, TraceRow, TrainConfig, TrainMode, TrainingTrace, MAX_LAYERS};
pub use weights::{decode_weights, encode_weights, WEIGHTS_MAGIC};
