//! Library side of the `unlearn` command: configuration, CSV ingestion,
//! the state directory and one function per subcommand.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod store;

/// Command failures, each mapped to an exit code.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Failure {
    /// A proof or game was rejected.
    #[error("{0}")]
    Reject(String),
    #[error("{0}")]
    Usage(String),
    #[error("state corrupted: {0}")]
    Corrupt(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Reject(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Corrupt(_) | Failure::Io(_) => 3,
        }
    }
}

/// Exit code for any error returned by a command.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    e.chain()
        .find_map(|c| c.downcast_ref::<Failure>())
        .map_or(3, Failure::exit_code)
}
