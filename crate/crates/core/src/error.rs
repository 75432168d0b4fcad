use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length {0} is not a power of two >= 2")]
    NotPowerOfTwo(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("enumeration of {count} candidates exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },
    #[error("sparsity {k} exceeds the size {size} of level {level}")]
    SparsityExceedsLevel { level: usize, k: usize, size: usize },
    #[error("requested {m} samples from level {level} of size {size}")]
    SamplesExceedLevel { level: usize, m: usize, size: usize },
    #[error("malformed dictionary: {0}")]
    Dictionary(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
