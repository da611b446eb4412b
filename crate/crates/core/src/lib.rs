//! Tabular KL-entropy regularized dynamic programming.
//!
//! The crate implements mirror descent value iteration (explicit and in its
//! Munchausen form) and bounded advantage learning, in which the soft
//! advantage terms of the Munchausen target are passed through bounding
//! functions `f` (current pair) and `g` (successor pair). Around the schemes
//! sit exact oracles ([`mdp`], [`soft_ops`]), convergence and error analytics
//! ([`analysis`]) and a seeded batch runner ([`runner`]).

// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod bounding;
pub mod error;
pub mod mdp;
pub mod runner;
pub mod soft_ops;
pub mod solvers;
pub mod tables;

pub use bounding::BoundingFn;
pub use error::{Error, Result};
pub use mdp::TabularMdp;
pub use soft_ops::RegParams;
pub use solvers::{run_scheme, RunTrace, Scheme, SolverConfig};
pub use tables::{PolicyTable, QTable, ValueVector};
