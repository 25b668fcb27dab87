use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed for {type_name}.{field}: {message}")]
    Validation {
        type_name: &'static str,
        field: &'static str,
        message: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("unknown video id {0:?}")]
    UnknownVideo(String),

    #[error("checksum mismatch in {path}: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum {
        path: String,
        stored: u32,
        computed: u32,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("non-finite loss on video {video_id:?}: {details}")]
    NonFinite { video_id: String, details: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(
        type_name: &'static str,
        field: &'static str,
        message: impl Into<String>,
    ) -> Self {
        Error::Validation {
            type_name,
            field,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
