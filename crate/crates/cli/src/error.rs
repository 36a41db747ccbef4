use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] strad::Error),

    #[error("io on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("gradient check failed: {0}")]
    Gradcheck(String),
}

impl CliError {
    /// Process exit code: 1 usage/config, 2 runtime/numeric, 3 gradcheck.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 1,
            CliError::Gradcheck(_) => 3,
            CliError::Core(strad::Error::InvalidAnomaly { .. })
            | CliError::Core(strad::Error::InvalidGenerator(_))
            | CliError::Core(strad::Error::InvalidWeights(_))
            | CliError::Core(strad::Error::InvalidTrainConfig(_))
            | CliError::Core(strad::Error::InvalidLayerSizes(_)) => 1,
            _ => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
