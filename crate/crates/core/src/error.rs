use thiserror::Error;

/// Everything that can go wrong while configuring or stepping a simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid value for `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("requested {requested} particles, limit is {limit}")]
    Capacity { requested: usize, limit: usize },

    #[error("neighbor list overflow: particle {particle} needs {required} slots, capacity is {capacity}")]
    NeighborListOverflow {
        particle: usize,
        required: usize,
        capacity: usize,
    },

    #[error("query mode `{mode}` is unsupported here: {reason}")]
    ModeUnsupported { mode: &'static str, reason: String },

    #[error("structure mismatch: {0}")]
    Structure(String),

    #[error("non-finite force on particle {particle}")]
    NonFiniteForce { particle: usize },

    #[error("oracle refused: n = {n} exceeds limit {limit}")]
    OracleLimit { n: usize, limit: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag, used in the CLI's stderr error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Capacity { .. } => "capacity",
            Error::NeighborListOverflow { .. } => "neighbor_list_overflow",
            Error::ModeUnsupported { .. } => "mode_unsupported",
            Error::Structure(_) => "structure",
            Error::NonFiniteForce { .. } => "non_finite_force",
            Error::OracleLimit { .. } => "oracle_limit",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
