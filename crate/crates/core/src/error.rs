use std::path::PathBuf;

/// Errors surfaced by the simulator, its configuration layer and the exporters.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid intent distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid action set: {0}")]
    InvalidActionSet(String),

    #[error("no fusion participants")]
    NoParticipants,

    #[error("length mismatch: {what} (expected {expected}, got {got})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid action index {0}")]
    InvalidAction(usize),

    #[error("unknown vehicle id {0}")]
    UnknownVehicle(usize),

    #[error("density loss table is empty")]
    EmptyLossTable,

    #[error("delivered count {delivered} exceeds sent count {sent}")]
    DeliveredExceedsSent { sent: u64, delivered: u64 },

    /// A configuration value violates an invariant. `key` is the dotted path
    /// of the offending entry, e.g. `consensus.tau`.
    #[error("invalid config `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Artifact {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input (config, artifacts) rather than
    /// the runtime environment.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
