//! Simulator and library for graph-based oracle models of parallel
//! stochastic convex optimization.
//!
//! The pieces: [`graphs`] builds dependency graphs whose nodes are single
//! stochastic-oracle queries; [`instances`] provides objectives with
//! gradient/prox oracles and closed-form reference optima; [`algorithms`]
//! expresses optimization methods as per-node query rules plus an output
//! rule; [`executor`] runs a program under strict ancestor-only visibility
//! and measures lower-bound progress; [`harness`] drives seeded runs,
//! parameter sweeps and rate-slope fits.

// Parameter validation uses `!(x > 0.0)` so that NaN inputs are rejected
// along with non-positive ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod error;
pub mod executor;
pub mod frame;
pub mod graphs;
pub mod harness;
pub mod instances;
pub mod oracle;
pub mod prox;
pub mod rng;

pub use error::{Error, Result};
