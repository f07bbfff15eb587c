use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The assembled system has a non-positive pivot.
    #[error("singular or indefinite linear system (pivot {pivot:e} at row {row})")]
    Singular { row: usize, pivot: f64 },

    /// An iterative procedure stopped without meeting its tolerance.
    #[error("{what} did not converge after {iterations} iterations (last residual {last:e})")]
    NotConverged { what: &'static str, iterations: usize, last: f64, history: Vec<f64> },

    /// Partial Dini integrals kept growing under refinement of the lower limit.
    #[error("Dini integral diverges: partial integrals {partials:?}")]
    Divergent { partials: Vec<f64> },

    #[error("invalid field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}
