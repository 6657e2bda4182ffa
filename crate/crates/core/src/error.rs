use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("format error: {0}")]
    Format(String),
    #[error("truncated stream: expected {expected} bytes, got {got}")]
    Length { expected: usize, got: usize },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("no valid pixels to evaluate")]
    EmptyReport,
    #[error("empty input")]
    Empty,
    #[error("odd dimensions {0}x{1} cannot be quartered")]
    OddDimensions(usize, usize),
    #[error("missing asset: {0}")]
    MissingAsset(String),
    #[error("non-invertible transform")]
    NonInvertible,
    #[error("config: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
