use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("record {index}: {message}")]
    Parse { index: usize, message: String },

    #[error("record {index} ({id}): {message}")]
    Validation { index: usize, id: String, message: String },

    #[error("duplicate chunk ids in one batch: {}", .0.join(", "))]
    DuplicateIds(Vec<String>),

    #[error("unknown namespace `{0}`")]
    UnknownNamespace(String),

    #[error("dimension mismatch: index uses {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("transport failure after {attempts} attempt(s){}: {message}", status_suffix(.status))]
    Transport {
        message: String,
        status: Option<u16>,
        attempts: u32,
        retriable: bool,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn status_suffix(status: &Option<u16>) -> String {
    match status {
        Some(code) => format!(" (HTTP {code})"),
        None => String::new(),
    }
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures a caller may retry (transient transport errors).
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Transport { retriable: true, .. })
    }
}
