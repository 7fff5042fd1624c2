//! Privacy-aware edge offloading for blockchain miners.
//!
//! [`env`] simulates miners that split data-processing tasks between their
//! own device and a shared edge server while mining. [`agents`] holds the
//! offloading policies: fixed baselines, tabular Q-learning and a deep
//! Q-network built on the small [`nn`] crate-local MLP. [`harness`] runs
//! seeded experiments and writes CSV/JSON results.

pub mod agents;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;

pub use config::{LearningConfig, SimConfig};
pub use error::{AgentError, ConfigError, EnvError, HarnessError, NnError};
