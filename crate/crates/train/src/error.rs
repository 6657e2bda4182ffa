use flownet_core::CoreError;
use flownet_tensornet::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite loss at iteration {iter} (lr {lr:e}, batch {batch:?}): {detail}")]
    NonFinite {
        iter: usize,
        lr: f64,
        batch: Vec<usize>,
        detail: String,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("architecture mismatch: {0}")]
    Architecture(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("empty dataset")]
    EmptyDataset,
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;
