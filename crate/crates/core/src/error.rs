use thiserror::Error;

use crate::topology::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {0} is not a UAV")]
    NotAUav(NodeId),

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),

    #[error("UAV {0} has been revoked and is excluded from routing")]
    Revoked(NodeId),

    #[error("join request for UAV {0} carries no ground-station registration")]
    Unregistered(NodeId),

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("observation width {got} does not match network input {expected}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("cannot sample {requested} transitions from a buffer holding {stored}")]
    InsufficientSamples { requested: usize, stored: usize },

    #[error("loss became non-finite at episode {episode}, agent {agent}: {detail}")]
    NonFiniteLoss {
        episode: usize,
        agent: NodeId,
        detail: String,
    },

    #[error("ledger integrity check failed at record {0}")]
    LedgerCorrupt(usize),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("trace: {0}")]
    Trace(String),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
