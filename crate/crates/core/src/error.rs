use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor/vector dimension did not match what a layer expected.
    #[error("shape mismatch at layer {layer}: {detail}")]
    Shape { layer: usize, detail: String },

    /// Non-finite input where finite values are required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// An operation was called in a state its contract forbids
    /// (e.g. stepping a finished episode).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration or invalid argument values. The message carries
    /// the offending field path where one exists.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub fn shape(layer: usize, detail: impl Into<String>) -> Self {
        Error::Shape {
            layer,
            detail: detail.into(),
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
