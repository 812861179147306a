use std::path::PathBuf;

use floorplan_core::DataError;
use floorplan_nn::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Annotation file does not follow the schema; `pointer` is a JSON
    /// pointer to the offending value.
    #[error("{path}: {pointer}: {message}")]
    Annotation {
        path: String,
        pointer: String,
        message: String,
    },
    #[error("density map {path}: {message}")]
    Density { path: PathBuf, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("render: {0}")]
    Render(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 1 for everything
    /// else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Model(ModelError::Config(_)) | Error::Model(ModelError::ConfigMismatch(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
