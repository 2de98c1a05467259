use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ClientError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("endpoint did not return log-probabilities: {0}")]
    Capability(String),

    #[error("could not read a single option letter from the answer: {0}")]
    UnparseableAnswer(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] confbench_core::Error),
}

impl ClientError {
    /// Short machine-friendly tag used in failure logs.
    pub fn kind(&self) -> &'static str {
        match self {
            ClientError::InvalidOptions(_) => "invalid_options",
            ClientError::Transport { .. } => "transport",
            ClientError::Capability(_) => "capability",
            ClientError::UnparseableAnswer(_) => "unparseable_answer",
            ClientError::InvalidConfig(_) => "invalid_config",
            ClientError::Io { .. } => "io",
            ClientError::Core(_) => "record",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ClientError::Io {
            path: path.into(),
            source,
        }
    }
}
