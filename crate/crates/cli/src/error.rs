use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: at `{key}`: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        key: String,
        message: String,
    },

    #[error("invalid config value `{key}`: {reason}")]
    Invalid { key: String, reason: String },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Core(#[from] kzlaser_core::Error),
}

impl CliError {
    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Qualifies the key of a core parameter error with its config block.
    pub fn prefixed(block: &str, err: kzlaser_core::Error) -> Self {
        match err {
            kzlaser_core::Error::InvalidParameter { key, reason } => CliError::Invalid {
                key: format!("{block}.{key}"),
                reason,
            },
            other => CliError::Core(other),
        }
    }

    /// 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}
