//! FlowNetSimple / FlowNetCorr models, the multiscale endpoint-error loss,
//! training with learning-rate schedules, fine-tuning and evaluation.

pub mod batch;
mod error;
pub mod evaluate;
pub mod list;
pub mod loss;
pub mod model;
pub mod predict;
pub mod schedule;
pub mod split;
pub mod train;

pub use error::{Result, TrainError};
pub use evaluate::{evaluate, Evaluation, Predictor, Report};
pub use model::{Model, ModelConfig, ModelOutput, Variant};
pub use predict::{predict, predict_pair, Prediction};
pub use schedule::{lr_schedule, TrainConfig};
pub use split::SplitSpec;
pub use train::{finetune, load_checkpoint, save_checkpoint, train, RunOptions, TrainResult};
