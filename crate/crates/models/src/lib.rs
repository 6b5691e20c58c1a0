//! Adversarial sequence generator, recurrent autoencoder baselines and the
//! checkpoint format they share.

pub mod baselines;
pub mod checkpoint;
pub mod gan;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] qgf_tensor::TensorError),
    #[error(transparent)]
    Checkpoint(#[from] checkpoint::CheckpointError),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sequence length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;
