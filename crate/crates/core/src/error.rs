use thiserror::Error;

/// Errors raised by chain ingestion and the estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    Parse {
        row: usize,
        column: usize,
        value: String,
    },
    #[error("row {row}, column {column}: non-finite value")]
    NonFinite { row: usize, column: usize },
    #[error("chain too short: n = {n}, need at least {min}")]
    TooShort { n: usize, min: usize },
    #[error("chain has zero coordinates")]
    Empty,
    #[error("{what} out of range: {detail}")]
    Range { what: &'static str, detail: String },
    #[error("need at least {min} chains, got {got}")]
    InsufficientChains { min: usize, got: usize },
    #[error("need at least 2 batches, got {got}")]
    InsufficientBatches { got: usize },
    #[error("coordinate {coord} has non-positive variance {value}")]
    DegenerateVariance { coord: usize, value: f64 },
    #[error("autocovariance partial sums never became positive definite within {budget} lag pairs")]
    NotPositiveDefinite { budget: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    Asymmetric { asymmetry: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("covariance estimate is singular")]
    Singular,
    #[error("process is not stationary: {0}")]
    Nonstationary(String),
    #[error("no Hadamard construction available for order {0}")]
    UnsupportedOrder(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by numerics rather than malformed data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::Singular
                | Error::Nonstationary(_)
                | Error::DegenerateVariance { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
