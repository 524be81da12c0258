use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum RfError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dense oracle refused: n = {n} exceeds the limit of {limit}")]
    OracleTooLarge { n: usize, limit: usize },

    #[error("corrupt operator blob: {0}")]
    Corrupt(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("zero original distance for column pairs {pairs:?}")]
    DegeneratePair { pairs: Vec<(usize, usize)> },

    #[error("profile has zero norm")]
    DegenerateProfile,

    #[error("point cloud collapses to a single point")]
    DegenerateCloud,

    #[error("profile is not identifiable through the measurement operator")]
    UnidentifiableProfile,

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid rank: requested {requested}, at most {max} allowed")]
    InvalidRank { requested: usize, max: usize },

    #[error("neighbour graph has {} connected components (sizes {sizes:?})", sizes.len())]
    Connectivity { sizes: Vec<usize> },

    #[error("numerical failure at point {point}: {reason}")]
    Numeric { point: usize, reason: String },

    #[error("solver diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing path: {0}")]
    MissingPath(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, RfError>;

impl RfError {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        RfError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
