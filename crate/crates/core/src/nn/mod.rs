//! Sequence model: autodiff graph, transformer, checkpoints and optimizer.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod optim;
pub mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use graph::{Gradients, Graph, Tensor, Var};
pub use model::{ActionQuery, ForwardOptions, ForwardOut, ModelConfig, Normalizer, PolicyModel, Prediction, SeqBatch};
pub use optim::{Adam, AdamConfig};
pub use params::ParameterSet;
