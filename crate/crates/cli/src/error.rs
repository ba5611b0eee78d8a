use std::path::PathBuf;

use lpm::LpmError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: row {row}, column {column}: {message}")]
    Cell { path: PathBuf, row: usize, column: String, message: String },
    #[error("data: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] LpmError),
}

impl CliError {
    /// 1 usage error, 2 data error, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Cell { .. } | CliError::Data(_) | CliError::Io { .. } => 2,
            CliError::Model(e) => match e {
                LpmError::Numerical(_) | LpmError::Diverged { .. } => 3,
                LpmError::InvalidHyperparams(_) => 1,
                _ => 2,
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
