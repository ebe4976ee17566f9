//! A small convolutional network engine with hand-written backpropagation.

pub mod checkpoint;
pub mod layers;
pub mod network;
pub mod optim;
mod tensor;
pub mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use network::{
    argmax, forward, init_parameters, loss_and_grad, predict, predict_batch, LossKind,
    NetworkSpec, Parameters, NUM_CLASSES,
};
pub use optim::{OptimizerKind, OptimizerState};
pub use tensor::Tensor;
pub use train::{accuracy, predict_all, train_epoch, LabelledSet};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("label {0} out of range")]
    InvalidLabel(usize),
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("unknown name {0:?}")]
    UnknownName(String),
    #[error("backward pass needs a training-mode forward cache")]
    NotTraining,
    #[error("loss became non-finite")]
    NonFinite,
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
