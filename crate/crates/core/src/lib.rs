//! Norm bounds for random matrices with dependent entries, computed through
//! their free-probability models.
//!
//! The crate is split by concern: dense linear algebra ([`matrix_core`]),
//! joint cumulants ([`cumulants`]), mixing coefficients of Markov chains
//! ([`dependence`]), closed-form bounds ([`free_bounds`]), the Dyson
//! equation for block variance profiles ([`dyson`]), the block Markov chain
//! model ([`bmc`]), graph and Wigner models ([`models`]) and reproducible
//! Monte Carlo drivers ([`montecarlo`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bmc;
pub mod cumulants;
pub mod dependence;
pub mod dyson;
pub mod error;
pub mod free_bounds;
pub mod matrix_core;
pub mod models;
pub mod montecarlo;
pub mod numfmt;
pub mod rng;

pub use error::{Error, Result};
