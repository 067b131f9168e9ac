//! Minimal tensor math, reverse-mode differentiation and Adam.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod graph;
pub mod kernels;
mod params;
mod tensor;

pub use adam::{
    adam_step, AdamState, LearningRateSchedule, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON,
};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use graph::{affine_row, Gradients, Graph, Var};
pub use params::{init_uniform, BoundParams, ParamStore};
pub use tensor::{Float, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
