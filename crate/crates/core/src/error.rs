use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("expected {expected} channel(s), found {found}")]
    InvalidChannelCount { expected: usize, found: usize },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("image grids differ: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("non-finite intensity at sample {0}")]
    NonFinite(usize),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),

    #[error("warp is not invertible")]
    SingularWarp,

    #[error("degenerate bounding box{}", .line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    DegenerateBox { line: Option<usize> },

    #[error("insufficient matches: {inliers} inlier correspondence(s), need 4")]
    InsufficientMatches { inliers: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Codec(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
