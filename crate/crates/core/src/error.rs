use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A distribution parameter is out of its domain (non-positive rate,
    /// covariance that is not positive-definite, ...).
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// Caller-supplied data violates a precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// Internal bookkeeping was asked to do something impossible, e.g.
    /// removing from an empty statistic.
    #[error("inconsistent state: {0}")]
    State(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A log-likelihood or weight came out NaN or infinite.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
