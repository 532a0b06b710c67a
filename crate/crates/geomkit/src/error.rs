use std::path::PathBuf;

use geomkit_core::embed::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum KitError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] geomkit_core::Error),
    #[error("training diverged: {0}")]
    Diverged(geomkit_core::Error),
    #[error("{0} self-checks failed")]
    ChecksFailed(usize),
}

impl KitError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KitError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        KitError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        KitError::Json {
            context: context.into(),
            source,
        }
    }

    /// 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            KitError::Core(e) if e.is_numerical() => 2,
            KitError::Diverged(_) | KitError::ChecksFailed(_) => 2,
            _ => 1,
        }
    }
}

impl From<TrainError> for KitError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Invalid(e) => KitError::Core(e),
            TrainError::Diverged { error, .. } => KitError::Diverged(error),
        }
    }
}

pub type Result<T, E = KitError> = std::result::Result<T, E>;
