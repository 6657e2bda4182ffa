//! Flow fields, synthetic training data, augmentation and variational
//! refinement for learning optical flow.

pub mod augment;
mod error;
pub mod flow;
pub mod geometry;
pub mod image;
pub mod kvconfig;
pub mod rng;
pub mod scenegen;
pub mod varrefine;

pub use error::{CoreError, Result};
pub use flow::FlowField;
