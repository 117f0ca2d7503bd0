use std::io;
use std::path::PathBuf;

use clue_core::CoreError;
use clue_data::DataError;
use clue_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite loss {loss} at epoch {epoch}, episode {episode}")]
    NonFiniteLoss { epoch: usize, episode: String, loss: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl ExperimentError {
    /// Failures caused by the numbers themselves rather than by inputs or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            ExperimentError::NonFiniteLoss { .. }
                | ExperimentError::Tensor(TensorError::Numeric(_))
                | ExperimentError::Core(CoreError::Tensor(TensorError::Numeric(_)))
        )
    }
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> ExperimentError {
    let path = path.into();
    move |source| ExperimentError::Io { path, source }
}
