use std::path::PathBuf;

/// Errors produced by the detection library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported or malformed image format: {0}")]
    Format(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("model file error: {0}")]
    Model(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
