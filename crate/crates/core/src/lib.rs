//! Experiment design and simulation for budget-constrained A/B tests on
//! one-to-many two-sided platforms.
//!
//! The crate models a platform that allocates `m` items to `n` buyers, where
//! each buyer has a hard spending budget. Comparing two allocation policies
//! with plain per-item randomization can overspend those budgets, so the
//! library provides:
//!
//! - a domain model around allocation, experiment and observation matrices
//!   ([`model`]),
//! - experiment-matrix constructors, including the variance-minimizing
//!   budget-constrained design ([`design`], backed by the separable convex
//!   [`solver`]),
//! - budget throttling rules applied to sampled allocations ([`throttle`]),
//! - allocation sampling and inclusion-probability estimation ([`sampling`]),
//! - treatment-effect estimators with closed-form variance/MSE evaluators
//!   ([`estimators`]),
//! - a streaming variant that designs the experiment row by row under
//!   proportionally scaled budgets ([`online`]),
//! - and a synthetic-instance Monte-Carlo harness with parameter sweeps
//!   ([`sim`]).

pub mod design;
pub mod error;
pub mod estimators;
pub mod matrix;
pub mod model;
pub mod online;
pub mod rng;
pub mod sampling;
pub mod sim;
pub mod solver;
pub mod throttle;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
