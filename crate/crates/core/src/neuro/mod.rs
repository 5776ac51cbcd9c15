//! Dense tensors, reverse-mode differentiation and the graph/recurrent layers.

mod layers;
mod model;
mod params;
mod tape;
mod tensor;

use thiserror::Error;

pub use layers::{
    dense, gcn_forward, gcn_layer, ggcnn_forward, ggcnn_layer, gru_cell, gru_forward, gru_forward_parts, gru_step, GruParams, GruStep, GruVars,
};
pub use model::{Batch, GatedLayerSpec, GgcnnModel, Model, ModelSpec, CHECKPOINT_FORMAT};
pub use params::{glorot_uniform, ParamId, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NeuroError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward called on a node that is not on the tape")]
    GraphNotRecorded,
    #[error("hidden size {hidden} is smaller than the input width {input}")]
    HiddenTooSmall { input: usize, hidden: usize },
    #[error("propagation steps must be at least 1")]
    InvalidSteps,
    #[error("invalid model description: {0}")]
    InvalidSpec(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
