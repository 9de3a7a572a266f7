use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected} values, got {got}")]
    InputShape { expected: usize, got: usize },

    #[error("non-finite value produced at layer {layer}")]
    Numeric { layer: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid property `{name}`: {reason}")]
    InvalidProperty { name: String, reason: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("counterexample cannot be realized as a world state: {0}")]
    Unrealizable(String),

    #[error("training diverged at episode {episode}")]
    Divergence { episode: usize },

    #[error("all {trials} counting trials degraded (leaf verification budget exhausted)")]
    AllTrialsDegraded { trials: usize },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
