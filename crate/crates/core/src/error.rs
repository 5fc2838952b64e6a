use thiserror::Error;

/// Errors produced by the analysis toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid fiber {id}: {reason}")]
    InvalidFiber { id: u64, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("histogram binning mismatch: {0}")]
    BinningMismatch(String),

    #[error("malformed {what} (line {line}): {reason}")]
    Format {
        what: &'static str,
        line: u64,
        reason: String,
    },

    #[error("invalid study configuration: {0}")]
    Config(String),

    #[error("study aborted: {failed} of {total} samples failed")]
    StudyAborted { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
