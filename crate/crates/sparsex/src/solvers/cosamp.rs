//! Support-refinement pursuit: propose a batch of candidate coordinates from
//! the gradient, fit on the union with the current support, prune back to
//! the target sparsity, and re-fit.

use super::{IterationRecord, SolveStop, SolveTrace, SolverRun, WorkBreakdown};
use crate::error::{Error, Result};
use crate::matrix::{compute_residual, restricted_least_squares, DesignMatrix, SparseIterate};
use crate::rng::Rng;
use crate::selectors::{run_selector, SelectorMode, SelectorSpec};
use crate::work::WorkCounter;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosampConfig {
    /// Target sparsity; candidate batches propose twice this many
    /// coordinates (clamped to the column count).
    pub sparsity: usize,
    /// Absolute residual-norm tolerance.
    pub tolerance: f64,
    /// Stop once the residual norm is within this factor of
    /// `reference_norm`, when one is given.
    pub relative_factor: f64,
    /// Residual norm of a paired reference run, if any.
    pub reference_norm: Option<f64>,
    pub max_iterations: usize,
    /// Consecutive non-improving iterations that end the run, when enabled.
    /// Off by default: a baseline run is expected to spend its full
    /// iteration allowance so budgeted variants can be compared against it.
    pub stagnation_window: Option<usize>,
}

impl CosampConfig {
    pub fn new(sparsity: usize, max_iterations: usize) -> Self {
        CosampConfig {
            sparsity,
            tolerance: 1e-3,
            relative_factor: 1.001,
            reference_norm: None,
            max_iterations,
            stagnation_window: None,
        }
    }
}

/// Keeps the `k` largest-magnitude coefficients (ties to the smaller
/// coordinate), returned in ascending coordinate order.
fn prune_to_k(iterate: &SparseIterate, k: usize) -> (Vec<usize>, Vec<f64>) {
    let mut pairs: Vec<(usize, f64)> = iterate
        .support()
        .iter()
        .copied()
        .zip(iterate.coefficients().iter().copied())
        .collect();
    pairs.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap().then(a.0.cmp(&b.0)));
    pairs.truncate(k);
    pairs.sort_by_key(|p| p.0);
    pairs.into_iter().unzip()
}

/// Runs batched support refinement.
///
/// Per iteration: the selector proposes the `2k` largest-magnitude gradient
/// entries, least squares runs on the union of those candidates with the
/// current support (at most `3k` coordinates), the fit is pruned to the `k`
/// largest coefficients, and a second fit on the pruned support yields the
/// new iterate and residual.  Stops on the absolute tolerance, on closing
/// within `relative_factor` of `reference_norm`, after a configured window
/// of consecutive non-improving iterations (disabled by default), at
/// `max_iterations`, or on a vanished gradient.
pub fn cosamp(
    x: &DesignMatrix,
    y: &[f64],
    config: &CosampConfig,
    selector: &SelectorSpec,
    rng: &mut Rng,
) -> Result<SolverRun> {
    let d = x.n_cols();
    let k = config.sparsity;
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!(
            "target support size {k} must lie in 1..={d}"
        )));
    }
    if config.max_iterations == 0 {
        return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
    }
    if !(config.tolerance >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be nonnegative, got {}",
            config.tolerance
        )));
    }
    if !(config.relative_factor >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "relative_factor must be at least 1, got {}",
            config.relative_factor
        )));
    }
    if config.stagnation_window == Some(0) {
        return Err(Error::InvalidArgument("stagnation_window must be at least 1".into()));
    }

    let start = Instant::now();
    let mut counter = WorkCounter::new();
    let mut breakdown = WorkBreakdown::default();
    let mut records = Vec::new();
    let mut stop = SolveStop::IterationLimit;
    let batch = (2 * k).min(d);

    let mut w = SparseIterate::new(d, Vec::new(), Vec::new())?;
    let mut r = compute_residual(x, y, &w, &mut counter)?;
    let mut previous_norm = r.norm();
    let mut flat_streak = 0usize;

    for iteration in 0..config.max_iterations {
        let before_selection = counter.total();
        let outcome =
            run_selector(selector, x, &r, SelectorMode::TopMAbs(batch), &[], rng, &mut counter)?;
        let selection_macs = counter.total() - before_selection;
        breakdown.selection += selection_macs;
        if outcome.meta.zero_gradient {
            stop = SolveStop::ZeroGradient;
            break;
        }

        let mut union = w.support().to_vec();
        union.extend_from_slice(&outcome.indices);
        union.sort_unstable();
        union.dedup();

        let before_solve = counter.total();
        let wide = restricted_least_squares(x, y, &union, &mut counter)?.iterate;
        let (support, _) = prune_to_k(&wide, k);
        w = if support.is_empty() {
            SparseIterate::new(d, Vec::new(), Vec::new())?
        } else {
            restricted_least_squares(x, y, &support, &mut counter)?.iterate
        };
        let solve_macs = counter.total() - before_solve;
        breakdown.solve += solve_macs;

        let before_residual = counter.total();
        r = compute_residual(x, y, &w, &mut counter)?;
        let residual_macs = counter.total() - before_residual;
        breakdown.residual += residual_macs;

        let norm = r.norm();
        records.push(IterationRecord {
            iteration,
            selected: outcome.indices.clone(),
            objective: 0.5 * norm * norm,
            residual_norm: norm,
            support_size: w.nnz(),
            l1_norm: w.l1_norm(),
            selector_stop: outcome.meta.stop_cause,
            selection_macs,
            solve_macs,
            residual_macs,
            update_macs: 0,
            macs_total: counter.total(),
            elapsed: start.elapsed(),
        });

        if norm <= config.tolerance {
            stop = SolveStop::Tolerance;
            break;
        }
        if let Some(reference) = config.reference_norm {
            if norm <= config.relative_factor * reference {
                stop = SolveStop::RelativeToReference;
                break;
            }
        }
        if let Some(window) = config.stagnation_window {
            if norm >= previous_norm {
                flat_streak += 1;
                if flat_streak >= window {
                    stop = SolveStop::Stagnation;
                    break;
                }
            } else {
                flat_streak = 0;
            }
        }
        previous_norm = norm;
    }

    let trace = SolveTrace {
        records,
        breakdown,
        macs: counter.total(),
        wall_time: start.elapsed(),
        stop,
        masked_retries: 0,
        ambiguous_sign_steps: 0,
    };
    Ok(SolverRun { iterate: w, residual: r, trace })
}
