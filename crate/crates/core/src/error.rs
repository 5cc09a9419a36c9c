use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("ambiguous point {angle}: jump of the symbol; use one_sided_limits")]
    AmbiguousPoint { angle: f64 },

    #[error("block dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid arc partition: {0}")]
    InvalidPartition(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("unknown operator name `{0}`")]
    UnknownOperator(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("probe support {support} exceeds window {window}")]
    ProbeSupport { support: usize, window: usize },

    #[error("operator domain mismatch: {0}")]
    Domain(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
