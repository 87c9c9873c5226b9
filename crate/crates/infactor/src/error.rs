//! Error type shared across the library.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("non-finite value in block '{block}' at iteration {iteration}")]
    NonFinite { iteration: usize, block: &'static str },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable code for CLI error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "EINVAL",
            Error::DimensionMismatch(_) => "EDIM",
            Error::Validation(_) => "EVALID",
            Error::NonFinite { .. } => "ENONFINITE",
            Error::LinearAlgebra(_) => "ELINALG",
            Error::Unsupported(_) => "EUNSUP",
            Error::Io(_) => "EIO",
            Error::Json(_) => "EJSON",
            Error::Csv(_) => "ECSV",
        }
    }
}

macro_rules! invalid_arg {
    ($($t:tt)*) => {
        $crate::error::Error::InvalidArgument(format!($($t)*))
    };
}

macro_rules! dim_mismatch {
    ($($t:tt)*) => {
        $crate::error::Error::DimensionMismatch(format!($($t)*))
    };
}

pub(crate) use dim_mismatch;
pub(crate) use invalid_arg;
