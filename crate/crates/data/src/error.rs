use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{file}: format error at byte {offset}: {msg}")]
    Format {
        file: String,
        offset: usize,
        msg: String,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("episode {id}: {msg}")]
    Episode { id: String, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(file: impl Into<String>, offset: usize, msg: impl Into<String>) -> Self {
        DataError::Format {
            file: file.into(),
            offset,
            msg: msg.into(),
        }
    }

    /// Attaches a file name to a format error raised by a byte-level parser.
    pub(crate) fn in_file(self, file: &str) -> Self {
        match self {
            DataError::Format { offset, msg, .. } => DataError::Format {
                file: file.to_string(),
                offset,
                msg,
            },
            other => other,
        }
    }
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
