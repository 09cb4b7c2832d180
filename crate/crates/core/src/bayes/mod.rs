//! Discrete Bayesian networks with exact bucket elimination and weighted
//! mini-bucket approximation.
//!
//! Networks are immutable once built; every query is a pure function of
//! its inputs and may run concurrently.

mod elimination;
mod factor;
mod io;
mod network;

pub(crate) use elimination::sum_product;
pub use factor::{AssignmentIter, FactorTable};
pub use io::{NetworkDocument, NETWORK_FORMAT_VERSION};
pub use network::{DiscreteVariable, Evidence, Layer, Network};

use thiserror::Error;

/// Index of a variable within its network.
pub type VarId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("evidence has probability zero")]
    ZeroProbabilityEvidence,
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("malformed factor: {0}")]
    Malformed(String),
    #[error("directed cycle through {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("network document: {0}")]
    Document(String),
}
