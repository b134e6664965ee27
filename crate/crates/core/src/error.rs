use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRateMismatch { expected: u32, actual: u32 },

    #[error("non-finite activation after {site}")]
    NonFinite { site: String },

    #[error("singular normal matrix in ridge solve (try a positive ridge lambda)")]
    SingularSystem,

    #[error("silent reference fingerprint {reference} does not match model {model}")]
    StaleReference { reference: String, model: String },

    #[error("model head has not been trained")]
    UntrainedHead,

    #[error("container format: {0}")]
    Format(String),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
