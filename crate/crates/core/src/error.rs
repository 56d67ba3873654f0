use std::path::PathBuf;

/// Errors produced by the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate reference map: {0}")]
    DegenerateReference(String),
    #[error("malformed {format} data: {reason}")]
    Format {
        format: &'static str,
        reason: String,
    },
    #[error("data error in {}: {reason}", path.display())]
    Data { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }

    /// Attach a file path to a format or I/O failure.
    pub fn at(self, path: impl Into<PathBuf>) -> Self {
        match self {
            Error::Format { format, reason } => Error::Data {
                path: path.into(),
                reason: format!("{format}: {reason}"),
            },
            Error::Io(e) => Error::Data {
                path: path.into(),
                reason: e.to_string(),
            },
            other => other,
        }
    }
}
