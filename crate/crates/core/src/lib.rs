//! Stochastic gradient Langevin dynamics with hitting-time diagnostics.
//!
//! The crate simulates SGLD and SGD on a bounded parameter space, computes
//! restricted Cheeger constants of Gibbs measures on grids, runs the
//! Metropolis–Hastings chains used to analyse discretized Langevin dynamics,
//! and provides the Massart-noise zero-one learning model as a concrete
//! non-convex workload.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod cheeger;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod objective;
pub mod rng;
pub mod sgld;
pub mod space;
pub mod stats;
pub mod zeroone;

pub use error::{Error, Result};
