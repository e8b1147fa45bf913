use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid action index {index} (action space has {size} actions)")]
    InvalidAction { index: usize, size: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A configuration value violated its bound. `key` is the dotted path of the offending field.
    #[error("config value `{key}` out of range: {bound}")]
    Config { key: String, bound: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config_err(key: impl Into<String>, bound: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        bound: bound.into(),
    }
}
