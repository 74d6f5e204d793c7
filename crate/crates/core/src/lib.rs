//! Dynamic programming on finite ordered value spaces.
//!
//! An abstract dynamic program is a family of order-preserving policy
//! operators; this crate evaluates them, solves for their Bellman fixed point
//! with value function iteration, Howard policy iteration and optimistic
//! policy iteration, and checks the order-theoretic hypotheses behind those
//! algorithms by brute force and sampling.
//!
//! Model families:
//! - [`mdp::FiniteMdp`]: constant-discount Markov decision process.
//! - [`models::risk_sensitive`]: entropic risk with state-dependent discounting,
//!   including the firm-exit application.
//! - [`models::quantile`]: quantile preferences in Q-factor form.
//! - [`models::nonlinear_discount`]: discounting applied through a scalar map.
//! - [`models::data_valuation`]: the affine fixed-point problem `v = π + K v`.

pub mod adp;
pub mod algorithms;
pub mod dynamics;
pub mod error;
pub mod fixtures;
pub mod markov;
pub mod mdp;
pub mod models;
pub mod oracle;
pub mod output;

pub use adp::{
    apply_bellman, apply_policy_operator, greedy_policy, pointwise_le, ActionValueModel, Adp,
    AffineOperator, Policy, StateActionSpace, StateIndexSet, ValueVector,
};
pub use algorithms::{
    howard_policy_iteration, optimistic_policy_iteration, policy_evaluation,
    run_timing_comparison, successive_approximation, value_function_iteration, Algorithm,
    IterationControl, SolveResult,
};
pub use error::{AdpError, Result};
pub use markov::{Ar1Spec, StochasticMatrix};
pub use mdp::FiniteMdp;
