use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration; the message names the field.
    #[error("configuration error: {0}")]
    Config(String),
    /// Argument outside the domain of a numeric routine.
    #[error("domain error: {0}")]
    Domain(String),
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// A simulated day reached an inconsistent state.
    #[error("simulation fault: {0}")]
    Simulation(String),
    #[error("training diverged at update {update}: {reason}")]
    Divergence { update: u64, reason: String },
    #[error("missing weights for learned policy `{policy}` at {path}; rerun with --train")]
    MissingWeights { policy: String, path: PathBuf },
    #[error("malformed {what}: {detail}")]
    Parse { what: String, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn parse(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            detail: detail.into(),
        }
    }

    /// Process exit code: 1 for validation problems, 2 for runtime faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::MissingWeights { .. } => 1,
            _ => 2,
        }
    }
}
