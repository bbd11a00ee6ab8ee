//! Adversarially robust Gaussian hypothesis testing.
//!
//! The crate models a K-ary Gaussian test `X = μ_k + e + N` in which an
//! adversary adds a perturbation `e` with `||e||∞ ≤ ε`, and provides:
//!
//! - the matched-filter (clean), minimax linear and GLRT decision rules,
//! - analytical error predictors built on per-coordinate cost moments,
//! - a reproducible, parallelism-invariant Monte Carlo engine,
//! - an experiment runner that writes versioned CSV sweeps.

pub mod analysis;
pub mod attacks;
pub mod config;
pub mod detectors;
pub mod error;
pub mod experiment;
pub mod math;
pub mod model;
pub mod montecarlo;

pub use error::{Error, Result};
