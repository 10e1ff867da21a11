use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A record could not be parsed; names the offending field.
    #[error("parse error in field `{field}`: {message}")]
    Parse { field: String, message: String },

    /// A timestamp or other value is outside its legal range.
    #[error("range error in field `{field}`: {message}")]
    Range { field: String, message: String },

    /// Invalid configuration (window lengths, thresholds, mixtures, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Training could not run or diverged.
    #[error("training error: {0}")]
    Training(String),

    /// A tuple arrived at the detector outside the current window.
    #[error("late tuple for key `{key}`: day {day} outside window ending {boundary}")]
    LateTuple {
        key: String,
        day: chrono::NaiveDate,
        boundary: chrono::NaiveDate,
    },

    /// A query vector had no direction (zero norm).
    #[error("zero vector has no direction; cannot rank neighbors")]
    ZeroVector,

    /// Recall was requested for a post with no target hashtags.
    #[error("recall is undefined for an empty target set")]
    EmptyTargets,

    /// Model snapshot could not be written or read back.
    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub fn parse(field: &str, message: impl Into<String>) -> Self {
        CoreError::Parse {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn range(field: &str, message: impl Into<String>) -> Self {
        CoreError::Range {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
