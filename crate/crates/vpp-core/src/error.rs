use std::path::PathBuf;

/// Error type shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation's preconditions.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The axis renderer could not lay out the requested spec.
    #[error("render error: {0}")]
    Render(String),

    /// A source record did not parse under its declared schema.
    #[error("parse error ({context}, record {record}): {msg}")]
    Parse {
        context: String,
        record: usize,
        msg: String,
    },

    /// A record parsed but carried invalid data.
    #[error("validation error: {0}")]
    Validation(String),

    /// Training diverged; names the first parameter group that went non-finite.
    #[error("non-finite loss at step {step}; first non-finite group: {group}")]
    NonFinite { step: usize, group: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn render(msg: impl Into<String>) -> Self {
        Error::Render(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
