use floorplan_core::{DataError, MatchError};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint config does not match: {0}")]
    ConfigMismatch(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss { epoch: usize, batch: usize, detail: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
