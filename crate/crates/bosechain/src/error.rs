use crate::config::ConfigError;

/// Errors surfaced by the command line, each mapped to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Numerical(#[from] bosechain_core::Error),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{failed} of {total} grid points failed; see the status column")]
    GridFailures { failed: usize, total: usize },
}

impl AppError {
    pub fn io(path: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        AppError::Io {
            path: path.to_string(),
            message: err.to_string(),
        }
    }

    /// 1 usage or I/O, 2 validation, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use bosechain_core::Error as E;
        match self {
            AppError::Usage(_) | AppError::Io { .. } => 1,
            AppError::Config(_) => 2,
            AppError::Numerical(E::InvalidParameter(_) | E::InteractingNotSupported { .. }) => 2,
            AppError::Numerical(_) | AppError::GridFailures { .. } => 3,
        }
    }
}
