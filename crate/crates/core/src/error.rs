use thiserror::Error;

use gef_tensor::TensorError;

#[derive(Debug, Error)]
pub enum GefError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    /// Invalid input data or configuration.
    #[error("validation: {0}")]
    Validation(String),

    #[error("corpus is empty after filtering")]
    EmptyCorpus,

    #[error("index {index} out of range for {size} classes")]
    Index { index: usize, size: usize },

    /// Training produced a non-finite loss.
    #[error("divergence at epoch {epoch}, batch {batch}: {detail}")]
    Divergence {
        epoch: usize,
        batch: usize,
        detail: String,
    },
}

impl GefError {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self::Validation(msg.into())
    }
}

pub type Result<T, E = GefError> = std::result::Result<T, E>;
