use thiserror::Error;

pub type Result<T, E = QtaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QtaError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("parameter layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("forward cache does not belong to the current network state")]
    StaleCache,

    #[error("network has no hidden layer")]
    NoHiddenLayer,

    #[error("empty batch")]
    EmptyBatch,

    #[error("replay buffer holds {available} transitions, {requested} requested")]
    Underfilled { available: usize, requested: usize },

    #[error("leaf {0} does not hold a live transition")]
    DeadIndex(usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl QtaError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        QtaError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        QtaError::Format {
            what,
            reason: reason.into(),
        }
    }
}
