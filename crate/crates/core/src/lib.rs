//! Deterministic training engine and experiment harness for studying
//! run-to-run variability of small neural networks under a composite loss
//! (cross-entropy or MSE plus a stability term and a variance penalty).
//!
//! Everything stochastic flows through [`rng::SeededRng`]; a fixed
//! (config, seed) pair reproduces every artifact byte for byte.

pub mod config;
pub mod data;
pub mod error;
pub mod harness;
pub mod loss;
pub mod model;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod tune;

pub use error::{Error, Result};
