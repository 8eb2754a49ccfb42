use thiserror::Error;

use crate::linsolve::SolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("linear solver failed: {message} (residual {:.3e} after {} iterations)", report.residual, report.iterations)]
    SolverFailure { message: String, report: SolveReport },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("instability detected at step {step}: {reason}")]
    Instability { step: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
