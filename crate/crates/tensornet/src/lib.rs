//! Minimal reverse-mode automatic differentiation over dense NCHW tensors,
//! with the layer set needed by FlowNet-style networks: convolution,
//! transposed convolution, (leaky) ReLU, channel concatenation, bilinear
//! resizing, block averaging, the correlation layer and an EPE loss.

pub mod adam;
pub mod checkpoint;
pub mod corr;
mod error;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod params;
mod scalar;
mod tensor;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use corr::CorrParams;
pub use error::TensorError;
pub use graph::{Graph, Var};
pub use params::ParamSet;
pub use scalar::Scalar;
pub use tensor::{Shape, Tensor};
