use std::path::PathBuf;

use clue_core::CoreError;
use clue_data::DataError;
use clue_experiments::ExperimentError;
use clue_tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Experiment(e.into())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Experiment(e.into())
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        CliError::Experiment(e.into())
    }
}

impl CliError {
    /// 1 for numeric failures, 2 for usage and input errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Experiment(e) if e.is_numeric() => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
