//! Sparse least-squares solvers built on pluggable gradient-entry selection.
//!
//! Every solver threads one [`WorkCounter`](crate::work::WorkCounter) through
//! selection, restricted solves, and residual updates, and reports the split
//! in its trace so the cost of inexact selection is visible end to end.

mod cosamp;
mod fw;
mod omp;

pub use cosamp::{cosamp, CosampConfig};
pub use fw::{frank_wolfe, lmo, FwConfig, FwConstraint, FwStep};
pub use omp::gradient_pursuit;

use crate::selectors::StopCause;
use std::time::Duration;

/// Why a solver run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStop {
    /// Ran its full iteration allowance.
    IterationLimit,
    /// Residual norm fell to the absolute tolerance.
    Tolerance,
    /// Residual norm came within the configured factor of a reference run.
    RelativeToReference,
    /// Residual norm failed to decrease for the configured window.
    Stagnation,
    /// The gradient (or residual) vanished; no further progress possible.
    ZeroGradient,
}

/// MACs split by what they were spent on; the parts sum to the run total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WorkBreakdown {
    /// Gradient-entry selection, including any in-selector stopping overhead.
    pub selection: u64,
    /// Restricted least-squares solves.
    pub solve: u64,
    /// Residual recomputation over the active support.
    pub residual: u64,
    /// Incremental prediction updates (column streaming).
    pub update: u64,
}

impl WorkBreakdown {
    pub fn total(&self) -> u64 {
        self.selection + self.solve + self.residual + self.update
    }
}

/// One solver iteration as it happened.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// Zero-based iteration number.
    pub iteration: usize,
    /// Coordinates brought in (or re-weighted) this iteration.
    pub selected: Vec<usize>,
    /// Half squared residual norm after the iteration's update.
    pub objective: f64,
    /// Euclidean residual norm after the iteration's update.
    pub residual_norm: f64,
    /// Nonzeros in the iterate after the update.
    pub support_size: usize,
    /// L1 norm of the iterate after the update.
    pub l1_norm: f64,
    /// How the selector's own loop ended this iteration.
    pub selector_stop: StopCause,
    pub selection_macs: u64,
    pub solve_macs: u64,
    pub residual_macs: u64,
    pub update_macs: u64,
    /// Cumulative MACs after this iteration.
    pub macs_total: u64,
    /// Wall time from the start of the run to the end of this iteration.
    pub elapsed: Duration,
}

/// Equality of the replayable content only: `elapsed` is machine noise, so it
/// is excluded to keep record comparison usable in reproducibility checks.
impl PartialEq for IterationRecord {
    fn eq(&self, other: &Self) -> bool {
        self.iteration == other.iteration
            && self.selected == other.selected
            && self.objective == other.objective
            && self.residual_norm == other.residual_norm
            && self.support_size == other.support_size
            && self.l1_norm == other.l1_norm
            && self.selector_stop == other.selector_stop
            && self.selection_macs == other.selection_macs
            && self.solve_macs == other.solve_macs
            && self.residual_macs == other.residual_macs
            && self.update_macs == other.update_macs
            && self.macs_total == other.macs_total
    }
}

/// Full account of a solver run.
#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub records: Vec<IterationRecord>,
    pub breakdown: WorkBreakdown,
    /// Total MACs charged over the run.
    pub macs: u64,
    pub wall_time: Duration,
    pub stop: SolveStop,
    /// Times a selector answer duplicated the support and was re-queried
    /// with the support masked out.
    pub masked_retries: u64,
    /// Line-search vertices whose sign came from a zero gradient estimate.
    pub ambiguous_sign_steps: u64,
}

impl SolveTrace {
    /// Equality of everything replayable — wall time excluded.
    pub fn path_eq(&self, other: &Self) -> bool {
        self.records == other.records
            && self.breakdown == other.breakdown
            && self.macs == other.macs
            && self.stop == other.stop
            && self.masked_retries == other.masked_retries
            && self.ambiguous_sign_steps == other.ambiguous_sign_steps
    }
}

/// A solver's answer: the iterate, its residual, and the trace.
#[derive(Debug, Clone)]
pub struct SolverRun {
    pub iterate: crate::matrix::SparseIterate,
    pub residual: crate::matrix::ResidualVector,
    pub trace: SolveTrace,
}
