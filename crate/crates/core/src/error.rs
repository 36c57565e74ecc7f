use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported graph order k={0} (supported: 2..=7)")]
    UnsupportedOrder(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("radius schedule undefined: {0}")]
    ScheduleUndefined(String),

    #[error("operation not supported for this density family: {0}")]
    WrongFamily(String),

    #[error("invalid counting request: {0}")]
    InvalidRequest(String),

    #[error("regime cannot be classified: {0}")]
    Unclassifiable(String),

    #[error("growth condition fails: {0}")]
    GrowthCondition(String),

    #[error("matrix is indefinite beyond the jitter budget (min eigenvalue {min_eigenvalue:e}, budget {budget:e})")]
    Indefinite { min_eigenvalue: f64, budget: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("malformed cloud file: {0}")]
    CloudFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
