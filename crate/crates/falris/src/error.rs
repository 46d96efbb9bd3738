use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed inconsistent shapes (vector lengths, matrix dims).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Parameter outside its documented domain (k < 1, h <= 0, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input data cannot support the requested computation
    /// (single-class labels, empty sample, missing column, ...).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Iterative routine failed to reach its tolerance.
    #[error("no convergence: {0}")]
    NonConvergence(String),

    /// Matrix inversion / decomposition failed.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// Numerical result left its valid range (NaN loss, empty kernel window).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) => ErrorKind::Usage,
            Error::DimensionMismatch(_)
            | Error::DegenerateData(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorKind::Data,
            Error::NonConvergence(_) | Error::Singular(_) | Error::Numerical(_) => {
                ErrorKind::Numerical
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
