use thiserror::Error;

/// Errors raised by the model, sampler, trainer and bound routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpmError {
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparams(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error in field `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("unsupported parameter file version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("classifier update requires labels")]
    NoLabels,

    #[error("log posterior diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        /// Trace rows recorded up to the last finite value.
        last_finite: Box<crate::em::FitTrace>,
    },
}

pub type Result<T> = std::result::Result<T, LpmError>;
