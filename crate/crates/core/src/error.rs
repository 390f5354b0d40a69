use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the search and simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("infeasible placement: {0}")]
    InfeasiblePlacement(String),

    #[error("cluster {cluster} has no replica in the placement map")]
    MissingReplica { cluster: usize },

    #[error("cache overflow: {needed} slots requested, capacity is {capacity}")]
    CacheOverflow { needed: usize, capacity: usize },

    #[error("corrupt encoding: {0}")]
    CorruptEncoding(String),

    #[error("invalid MRAM transfer of {bytes} bytes (must be 8..=2048 and a multiple of 8)")]
    InvalidTransfer { bytes: usize },

    #[error("WRAM overflow in stage {stage}: {needed} bytes needed, {budget} available")]
    WramOverflow {
        stage: &'static str,
        needed: usize,
        budget: usize,
    },

    #[error("format error in {path:?} at byte {offset} (record {record}): {reason}")]
    Format {
        path: PathBuf,
        offset: u64,
        record: usize,
        reason: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{module}: {source}")]
    Context {
        module: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Tags an error with the pipeline module it came from.
    pub fn in_module(self, module: &'static str) -> Self {
        Error::Context {
            module,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping module context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
