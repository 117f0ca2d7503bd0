use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    /// Malformed or unsupported WAV data; `offset` is the byte position where parsing stopped.
    #[error("wav format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },
    #[error("input error: {0}")]
    Input(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = AudioError> = std::result::Result<T, E>;
