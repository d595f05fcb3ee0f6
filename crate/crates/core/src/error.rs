use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected dim={expected}, got dim={got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("weight at index {index} must be positive and finite, got {value}")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("degenerate distribution: clustering cost is zero")]
    DegenerateDistribution,

    #[error("enumeration of {count} subsets exceeds the limit of {limit}")]
    TooManySubsets { count: u128, limit: u128 },

    #[error("invalid distance matrix: {0}")]
    InvalidMatrix(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors caused by the content of input data or files rather than
    /// by how the API was called.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::NonPositiveWeight { .. }
                | Error::InvalidMatrix(_)
                | Error::Parse { .. }
                | Error::Format(_)
                | Error::Io(_)
                | Error::Empty(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
