//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! Parameters live in one flat `Vec<f64>`. Each layer owns a contiguous
//! block laid out as a row-major `out x in` weight matrix followed by `out`
//! biases, so `params.len() == sum((in + 1) * out)`.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, read_checkpoint_file, write_checkpoint, write_checkpoint_file};
pub use mlp::{Activation, ForwardCache, Gradients, LayerSpan, Mlp, TargetPair};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("forward cache does not match this network")]
    StaleCache,
    #[error("non-finite gradient, update refused")]
    NonFiniteGradient,
    #[error("invalid network definition: {0}")]
    InvalidDefinition(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
