use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid basis specification: {0}")]
    InvalidSpec(String),

    #[error("point {x} (index {index:?}) outside basis domain [{lo}, {hi}]")]
    OutOfDomain {
        x: f64,
        lo: f64,
        hi: f64,
        index: Option<usize>,
    },

    #[error("index {index} out of range for length {len}")]
    Bounds { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unit {unit} is fixed at index {index} and cannot be reallocated")]
    FixedUnit { unit: usize, index: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
