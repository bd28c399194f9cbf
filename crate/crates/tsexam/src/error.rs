//! Crate-wide error type.

use crate::dsl::DslError;

/// Errors produced by any module in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter failed validation; `field` names the offending input.
    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    /// Series lengths disagree where equal lengths are required.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// Requested item does not exist (template id, question id, index, ...).
    #[error("not found: {0}")]
    NotFound(String),

    /// A persisted file failed validation.
    #[error("invalid record at line {line}, field `{field}`: {message}")]
    InvalidRecord {
        line: usize,
        field: String,
        message: String,
    },

    /// File schema version is not recognized by this build.
    #[error("unsupported schema version `{0}`")]
    UnsupportedSchema(String),

    /// Template DSL errors, each with a machine-readable code.
    #[error("template program rejected: {}", DslError::join(.0))]
    Dsl(Vec<DslError>),

    /// Model credential environment variable is missing.
    #[error("missing credential: environment variable `{0}` is not set")]
    MissingCredential(String),

    /// Remote model rejected authentication.
    #[error("authentication failed for model `{model}`: {message}")]
    AuthFailed { model: String, message: String },

    /// All retry attempts against a model were exhausted.
    #[error("model `{model}` failed after {attempts} attempts: {last_error}")]
    RetriesExhausted {
        model: String,
        attempts: usize,
        last_error: String,
    },

    /// Request payload exceeds the configured limit.
    #[error("payload of {size} bytes exceeds limit of {limit} bytes")]
    OversizePayload { size: usize, limit: usize },

    /// Gateway misuse or transport-level failure that is not retryable.
    #[error("gateway error: {0}")]
    Gateway(String),

    /// The agent pipeline could not make progress.
    #[error("pipeline error: {0}")]
    Pipeline(String),

    /// Refinement resampler ran out of questions for a category.
    #[error("resampler exhausted for category `{category}` in round {round}")]
    ResamplerExhausted { category: String, round: usize },

    #[error("I/O error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
