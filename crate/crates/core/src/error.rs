//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        context: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("log of non-positive value {value} at index {index}")]
    LogDomain { index: usize, value: f64 },

    #[error("backward requires a scalar root, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },

    #[error("{context}: empty input")]
    Empty { context: &'static str },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: String, index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("IDX magic mismatch: expected {expected:#010x}, got {got:#010x}")]
    IdxMagic { expected: u32, got: u32 },

    #[error("IDX payload truncated: expected {expected} bytes, got {got}")]
    IdxTruncated { expected: usize, got: usize },

    #[error("downscale target {target} does not divide image side {side}")]
    IdxDownscale { side: usize, target: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("non-finite gradient for parameter {name}")]
    NonFiniteGrad { name: String },

    #[error("density bin edges differ; distances require identical binning")]
    BinningMismatch,

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParam(_) => 2,
            Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::IdxMagic { .. }
            | Error::IdxTruncated { .. }
            | Error::IdxDownscale { .. }
            | Error::NonFinite { .. }
            | Error::Empty { .. } => 3,
            Error::NonFiniteLoss { .. }
            | Error::NonFiniteGrad { .. }
            | Error::LogDomain { .. }
            | Error::Verification(_) => 4,
            _ => 1,
        }
    }
}
