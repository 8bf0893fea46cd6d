//! Sparsity-constrained least squares solvers built around budgeted
//! estimation of extreme gradient entries.
//!
//! The gradient of the least-squares loss `L(w) = 0.5 * ||Xw - y||^2` is the
//! row accumulation `X^T r = sum_i r_i x_i` with `r = Xw - y`.  Greedy solvers
//! only ever consume one extreme entry of that gradient per iteration, so this
//! crate provides a family of selectors that locate the extreme entry without
//! always paying for the full `n * d` accumulation: deterministic partial
//! sums, importance-sampled estimates, and best-arm-identification races over
//! coordinates.  On top of those sit three solvers (gradient pursuit,
//! Frank-Wolfe, CoSaMP), synthetic problem generation, and a benchmark
//! harness with a CLI front end (`sparsex`).
//!
//! All costs are tracked in MACs: one unit per scalar multiply-accumulate on
//! matrix data, so runs are comparable across machines.

pub mod bench;
pub mod error;
pub mod io;
pub mod matrix;
pub mod rng;
pub mod selectors;
pub mod solvers;
pub mod stopping;
pub mod synth;
pub mod work;

pub use error::{Error, Result};
pub use matrix::{DesignMatrix, ResidualVector, SparseIterate};
pub use work::WorkCounter;
