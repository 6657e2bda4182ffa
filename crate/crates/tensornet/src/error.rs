use thiserror::Error;

use crate::tensor::Shape;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch, expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Shape,
        got: Shape,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Shape, len: usize },
    #[error("{op}: invalid geometry ({detail})")]
    InvalidGeometry { op: &'static str, detail: String },
    #[error("{op}: factor must be positive, got {factor}")]
    InvalidFactor { op: &'static str, factor: usize },
    #[error("{op}: non-finite value in output of node {node}")]
    NonFinite { op: &'static str, node: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Shape),
    #[error("empty input")]
    Empty,
    #[error("unknown variable {0}")]
    UnknownVar(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
