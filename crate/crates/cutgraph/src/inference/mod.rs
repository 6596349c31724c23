//! Numerical engines behind the symbolic factorizations.
//!
//! The submodules provide, in rough order of generality:
//!
//! * [`discrete`]: exact inference on finite models by enumeration, the
//!   brute-force conditional independence check, and the KL-divergence
//!   oracle used to validate emitted cut factors.
//! * [`gaussian`]: closed-form conjugate inference for the longitudinal
//!   linear-Gaussian model, including its bias coefficients.
//! * [`mh`]: a random-walk Metropolis–Hastings sampler.
//! * [`nested`]: the two-stage sampler for cut distributions.

pub mod discrete;
pub mod gaussian;
pub mod kl;
pub mod mh;
pub mod nested;
pub mod samples;

use thiserror::Error;

use crate::dag::NodeId;

/// Errors raised by the numerical engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    /// A discrete table is malformed (wrong length, negative entry, or a
    /// row that does not sum to one).
    #[error("invalid table for node `{node}`: {reason}")]
    InvalidTable { node: NodeId, reason: String },
    /// A node of the graph has no table, or a table names no node.
    #[error("table/node mismatch for `{0}`")]
    TableMismatch(NodeId),
    /// The joint state space exceeds the enumeration budget.
    #[error("state space of {size} states exceeds the limit of {limit}")]
    StateSpaceTooLarge { size: u128, limit: u128 },
    /// The conditioning event has probability zero.
    #[error("conditioning event has probability zero")]
    ZeroProbabilityConditioning,
    /// An assignment is missing a required node or lies outside a support.
    #[error("bad assignment for node `{node}`: {reason}")]
    BadAssignment { node: NodeId, reason: String },
    /// Vector or matrix dimensions do not conform.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// A log-density evaluated to NaN or +inf where a finite value or -inf
    /// was required.
    #[error("non-finite density at {0}")]
    NonFiniteDensity(String),
    /// A linear system that should be positive definite failed to factor.
    #[error("singular system: {0}")]
    SingularSystem(String),
    /// The requested sampling engine cannot handle the factor it was
    /// assigned.
    #[error("engine unsupported for factor `{0}`")]
    EngineUnsupported(String),
}
