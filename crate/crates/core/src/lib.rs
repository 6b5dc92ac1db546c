//! Simulator and reinforcement-learning trainer for time-periodic
//! multi-class parallel-server overflow routing.
//!
//! The crate is organized around the decision loop of an overflow manager:
//!
//! - [`config`] / [`presets`]: instance descriptions (capacities, periodic
//!   arrival profiles, discharge patterns, routes, costs).
//! - [`dynamics`]: the exact discrete-epoch Markov dynamics — actions,
//!   arrivals, two-time-scale departures, costs, feasibility.
//! - [`policy`]: atomic-action policies, batched multinomial sampling with
//!   resampling, exact action probabilities and ratios.
//! - [`net`]: the three policy-network architectures with masked softmax
//!   outputs, the clipped surrogate objective, exact backpropagation, and
//!   Adam updates.
//! - [`value`]: pool-wise decomposed value approximation, polynomial
//!   features, per-epoch least-squares fitting, and advantage estimation.
//! - [`trainer`]: the outer training loop with parallel rollouts, data
//!   reuse, clip scheduling, and confidence-interval evaluation.
//! - [`oracle`]: exact small-instance solvers used as ground truth.

pub mod config;
pub mod dynamics;
pub mod net;
pub mod oracle;
pub mod policy;
pub mod presets;
pub mod trainer;
pub mod value;

use thiserror::Error as ThisError;

/// Crate-wide error type.
#[derive(Debug, ThisError)]
pub enum Error {
    /// Configuration failed validation; one message per violation.
    #[error("invalid config: {0:?}")]
    Config(Vec<String>),
    /// A dynamics operation was given inconsistent inputs.
    #[error("dynamics error: {0}")]
    Dynamics(String),
    /// A policy operation was given inconsistent inputs.
    #[error("policy error: {0}")]
    Policy(String),
    /// Network shape or numeric failure.
    #[error("network error: {0}")]
    Net(String),
    /// Value-approximation failure (solver, fitting, or estimation).
    #[error("value approximation error: {0}")]
    Value(String),
    /// Exact-solver failure or guard violation.
    #[error("oracle error: {0}")]
    Oracle(String),
    /// Training-loop failure.
    #[error("training error: {0}")]
    Train(String),
    /// Filesystem or serialization failure.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
