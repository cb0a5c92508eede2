use thiserror::Error;

/// Errors raised by tensors, layers, losses and the optimizer.
#[derive(Debug, Error)]
pub enum NeuroError {
    #[error("shape mismatch in {op}: expected {expected}, got {got:?}")]
    Shape { op: &'static str, expected: String, got: Vec<usize> },

    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { len: usize, shape: Vec<usize> },

    #[error("{op}: time axis is empty")]
    EmptyAxis { op: &'static str },

    #[error("batch normalization needs at least 2 samples in train mode, got {0}")]
    BatchTooSmall(usize),

    #[error("class index {class} out of range for {n_classes} classes")]
    ClassOutOfRange { class: usize, n_classes: usize },

    #[error("non-finite gradient in parameter {param}")]
    NonFiniteGradient { param: String },

    #[error("{0}")]
    Invalid(String),

    #[error("backward called before forward on {0}")]
    NoCache(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = NeuroError> = std::result::Result<T, E>;
