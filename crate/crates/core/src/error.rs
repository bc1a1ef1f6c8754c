use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A shape, size or configuration value is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was invoked in a state that does not permit it.
    #[error("state error: {0}")]
    State(String),

    /// Gradient descent produced or received non-finite values.
    #[error("training error in layer {layer}: {message}")]
    Training { layer: usize, message: String },

    /// Numeric failure that could not be repaired.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A policy callback failed during an episode.
    #[error("policy failed at frame {frame}: {source}")]
    Policy {
        frame: u32,
        #[source]
        source: Box<Error>,
    },

    /// A binary file did not match the expected format.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
