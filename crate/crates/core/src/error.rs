use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input outside the physical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Sampling or grid-shape problems (undersampling, coverage, size caps).
    #[error("grid error: {0}")]
    Grid(String),

    /// A quadrature or series that did not reach the requested tolerance.
    #[error("convergence error: {what} (estimate {estimate:.3e}, tolerance {tolerance:.3e})")]
    Convergence {
        what: String,
        estimate: f64,
        tolerance: f64,
    },

    /// Malformed input text (spectrum files, masks, phase maps).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn grid(msg: impl Into<String>) -> Self {
        Error::Grid(msg.into())
    }

    pub fn is_convergence(&self) -> bool {
        matches!(self, Error::Convergence { .. })
    }
}
