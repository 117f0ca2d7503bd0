use clue_audio::AudioError;
use clue_data::DataError;
use clue_tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::CoreError::Config(format!($($arg)*)) };
}
pub(crate) use config_err;
