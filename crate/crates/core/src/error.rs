use thiserror::Error;

#[derive(Debug, Error)]
pub enum PamError {
    /// Invalid configuration value (non-positive speed of sound, bad solver settings, ...).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("index out of range: {what} = {index} (valid range 0..{len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The acquisition geometry does not support the requested model.
    #[error("model error: {0}")]
    Model(String),

    #[error("numerical failure at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = PamError> = std::result::Result<T, E>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(PamError::Dimension(msg.into()))
}
