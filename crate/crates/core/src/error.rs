use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Every forward or backward message entry vanished at `time`: the
    /// observation is impossible under the supplied function nodes.
    #[error("degenerate evidence at time index {time}")]
    DegenerateEvidence { time: usize },

    #[error("instance too large: {candidates} candidates exceeds the limit of {limit}")]
    InstanceTooLarge { candidates: u128, limit: u128 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
