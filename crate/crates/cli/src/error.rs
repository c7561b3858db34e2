use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact {path}: {remedy}")]
    MissingArtifact { path: PathBuf, remedy: String },

    #[error("stale artifacts from `{stage}`: {remedy}")]
    Stale { stage: String, remedy: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] walk2kg_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact { .. } | CliError::Stale { .. } => 3,
            CliError::Data(_) | CliError::Io { .. } => 4,
            CliError::Core(e) => match e {
                walk2kg_core::Error::InvalidArgument(_) => 2,
                _ => 4,
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub(crate) fn missing(path: impl Into<PathBuf>, stage: &str) -> Self {
        CliError::MissingArtifact {
            path: path.into(),
            remedy: format!("run `walk2kg {stage}` with the same configuration first"),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
