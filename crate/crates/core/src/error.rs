use thiserror::Error;

use crate::tensor::TensorError;

/// Failures raised while building or running a network.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("unknown modulation site {0:?}")]
    UnknownSite(String),
    #[error("{what}: expected width {expected}, got {got}")]
    Width {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite activation after layer {layer}")]
    NonFinite { layer: String },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Mode(&'static str),
    #[error("input resolution {got} does not match configured {expected}")]
    Resolution { expected: usize, got: usize },
}
