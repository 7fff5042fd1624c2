//! Error types for each layer of the simulator.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("expected {expected} actions (one per miner), got {got}")]
    WrongMinerCount { expected: usize, got: usize },
    #[error("miner {miner}: expected an offload vector of length {expected}, got {got}")]
    WrongTaskCount {
        miner: usize,
        expected: usize,
        got: usize,
    },
    #[error("episode finished after {total} slots; call reset first")]
    EpisodeOver { total: usize },
    #[error("network hash power must be positive, got {0}")]
    NonPositiveNetworkHash(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("input has length {got}, network expects {expected}")]
    InputSize { expected: usize, got: usize },
    #[error("output gradient has length {got}, network produces {expected}")]
    OutputGradSize { expected: usize, got: usize },
    #[error("gradient tape was produced by a different or since-modified network")]
    StaleTape,
    #[error("gradient shapes do not match the network")]
    GradientShape,
    #[error("gradient contains a non-finite value")]
    NonFiniteGradient,
    #[error("network needs at least an input and an output layer, with positive sizes")]
    BadTopology,
    #[error("parameter file: {0}")]
    Format(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("action values are empty")]
    EmptyValues,
    #[error("action index {index} out of range for {count} actions")]
    ActionOutOfRange { index: usize, count: usize },
    #[error("state index {index} out of range for {count} states")]
    StateOutOfRange { index: usize, count: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Summary(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}
