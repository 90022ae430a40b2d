use eegart_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("recording is empty")]
    EmptyRecording,

    #[error("recording lasts {duration_s} s, needs more than {needed_s} s")]
    TooShort { duration_s: f64, needed_s: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("interval [{start_s}, {end_s}) lies outside the epoch")]
    IntervalOutOfRange { start_s: f64, end_s: f64 },

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("model `{0}` has no attention module")]
    NoAttention(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::InvalidArgument(msg.into()))
}
