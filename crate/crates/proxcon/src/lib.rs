//! Distributed constrained convex optimization over time-varying
//! networks via proximal minimization, together with scenario-based
//! probabilistic feasibility certificates for the converged solution.
//!
//! The crate simulates a network of `m` agents that cooperatively solve
//!
//! ```text
//! minimize   sum_i f_i(x)    over x in R^n
//! subject to x in intersection_i X_i
//! ```
//!
//! by alternating doubly stochastic mixing with per-agent proximal
//! steps: each agent averages the iterates it receives and then solves
//! `argmin_{x in X_i} f_i(x) + ||z_i - x||^2 / (2 c(k))` locally. When
//! the constraint sets depend on an uncertain parameter, agents enforce
//! only finitely many sampled constraints and the [`scenario`] module
//! quantifies the violation probability of the resulting solution.
//!
//! Module map:
//! - [`model`] — decision vectors, convex sets, objectives, problems;
//! - [`network`] — mixing-matrix schedules and their validators;
//! - [`prox`] — the per-agent local solver;
//! - [`consensus`] — the iteration driver, diagnostics, and a
//!   centralized reference solver;
//! - [`scenario`] — violation-probability calculators and Monte-Carlo
//!   estimation;
//! - [`bench`] — an L1-regularized multi-agent regression benchmark;
//! - [`cli`] — experiment configs, dispatch, and artifact emission.
//!
//! See the crate examples for one runnable walkthrough per capability.

pub mod bench;
pub mod cli;
pub mod consensus;
pub mod error;
pub mod model;
pub mod network;
pub mod prox;
pub mod scenario;
mod seed;

pub use error::{Error, Result};
pub use model::{
    AgentSpec, ConvexSet, DecisionVector, InteriorPoint, ObjectiveTerm, ProblemSpec,
};
