//! Recovery of simple models from underdetermined linear measurements by
//! atomic-norm minimization.
//!
//! A model is a nonnegative combination of a few atoms from a set `A`
//! (signed coordinate vectors, rank-one matrices, sign vectors, orthogonal
//! matrices, permutation matrices, cut matrices). The crate provides the
//! oracles for each set, proximal and operator-splitting solvers for the
//! convex recovery programs, Monte-Carlo and closed-form Gaussian-width
//! budgets, and a phase-transition harness.

pub mod atoms;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod prox;
pub mod rng;
pub mod solvers;

pub use atoms::{AtomicSet, SetParams};
pub use error::{Error, Result};
pub use model::{synthesize_model, AtomicModel, LinearMap, Problem};
pub use rng::RngStream;
pub use solvers::{SolveReport, SolveStatus, SolverConfig};
