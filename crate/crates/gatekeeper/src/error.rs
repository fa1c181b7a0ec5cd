//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Non-finite values where finite reals are required.
    #[error("numeric domain error: {0}")]
    Numeric(String),

    /// Class/token index outside the valid range.
    #[error("index {index} out of range for size {len}")]
    Index { index: usize, len: usize },

    /// Dimension mismatch between related containers.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Input data unusable for the requested computation.
    #[error("data error: {0}")]
    Data(String),

    /// Malformed file content; the message names the offending location.
    #[error("parse error: {0}")]
    Parse(String),

    /// Operation not defined for the dataset mode.
    #[error("unsupported mode: {0}")]
    Mode(String),

    /// A required upstream artifact is missing.
    #[error("missing dependency: {0}")]
    Dependency(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
