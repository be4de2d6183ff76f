use thiserror::Error;

/// Errors produced by the statistics pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("insufficient sample size: {given} given, {needed} needed")]
    InsufficientSample { given: usize, needed: usize },

    #[error("sample has zero variance")]
    ZeroVariance,

    #[error("lognormal undefined for nonpositive values")]
    NonPositive,

    #[error("matrix is not symmetric: {0}")]
    NotSymmetric(String),

    #[error("duplicate matrix entry at ({0}, {1})")]
    DuplicateEntry(usize, usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// `true` for errors caused by a bad configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
