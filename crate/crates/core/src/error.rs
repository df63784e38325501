use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file not found: {0}")]
    Missing(PathBuf),
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config schema error: {0}")]
    Schema(String),
    #[error("config invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint not found: {0}")]
    NotFound(PathBuf),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint was written for a different configuration (digest {found:016x}, expected {expected:016x})")]
    DigestMismatch { expected: u64, found: u64 },
    #[error("checkpoint is missing tensor `{0}`")]
    MissingTensor(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

/// Failures surfaced by the experiment commands.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("output directory {0} already contains results; pass --force to overwrite")]
    OutputExists(PathBuf),
    #[error("cannot write to output directory {path}: {source}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("training diverged at episode {episode}: non-finite {what}")]
    Diverged { episode: usize, what: &'static str },
    #[error("{0}")]
    Usage(String),
    #[error("self-test failed: {0}")]
    SelfTest(String),
}

impl Error {
    /// Process exit code; every failure class gets its own value.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Config(_) => 3,
            Error::Checkpoint(CheckpointError::NotFound(_)) => 4,
            Error::Checkpoint(CheckpointError::DigestMismatch { .. }) => 5,
            Error::Checkpoint(_) => 6,
            Error::OutputExists(_) => 7,
            Error::Unwritable { .. } | Error::Csv(_) => 8,
            Error::Diverged { .. } => 9,
            Error::SelfTest(_) => 10,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
