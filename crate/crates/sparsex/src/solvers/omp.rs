//! Greedy pursuit: grow the support one coordinate at a time, re-fit by
//! restricted least squares after every addition.

use super::{IterationRecord, SolveStop, SolveTrace, SolverRun, WorkBreakdown};
use crate::error::{Error, Result};
use crate::matrix::{compute_residual, restricted_least_squares, DesignMatrix, SparseIterate};
use crate::rng::Rng;
use crate::selectors::{run_selector, SelectorMode, SelectorSpec};
use crate::work::WorkCounter;
use std::time::Instant;

/// Runs `k` rounds of select-extend-refit.
///
/// Each round asks the selector for the largest-magnitude gradient entry,
/// adds that coordinate to the support, solves least squares restricted to
/// the support, and recomputes the residual.  An inexact selector may answer
/// with a coordinate already in the support; the round then re-queries once
/// with the support masked out (counted in `masked_retries`), so the support
/// grows by exactly one coordinate per completed round.  A vanished gradient
/// (or residual) ends the run early.
pub fn gradient_pursuit(
    x: &DesignMatrix,
    y: &[f64],
    k: usize,
    selector: &SelectorSpec,
    rng: &mut Rng,
) -> Result<SolverRun> {
    let d = x.n_cols();
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!(
            "target support size {k} must lie in 1..={d}"
        )));
    }
    let start = Instant::now();
    let mut counter = WorkCounter::new();
    let mut breakdown = WorkBreakdown::default();
    let mut records = Vec::with_capacity(k);
    let mut masked_retries = 0u64;
    let mut stop = SolveStop::IterationLimit;

    let mut w = SparseIterate::new(d, Vec::new(), Vec::new())?;
    let mut r = compute_residual(x, y, &w, &mut counter)?;

    for iteration in 0..k {
        let before_selection = counter.total();
        let outcome = run_selector(selector, x, &r, SelectorMode::MaxAbs, &[], rng, &mut counter)?;
        if outcome.meta.zero_gradient {
            breakdown.selection += counter.total() - before_selection;
            stop = SolveStop::ZeroGradient;
            break;
        }
        let mut chosen = outcome.indices[0];
        let mut selector_stop = outcome.meta.stop_cause;
        if w.support().binary_search(&chosen).is_ok() {
            masked_retries += 1;
            let masked =
                run_selector(selector, x, &r, SelectorMode::MaxAbs, w.support(), rng, &mut counter)?;
            if masked.meta.zero_gradient {
                breakdown.selection += counter.total() - before_selection;
                stop = SolveStop::ZeroGradient;
                break;
            }
            chosen = masked.indices[0];
            selector_stop = masked.meta.stop_cause;
        }
        let selection_macs = counter.total() - before_selection;
        breakdown.selection += selection_macs;

        let mut support = w.support().to_vec();
        support.push(chosen);
        support.sort_unstable();

        let before_solve = counter.total();
        w = restricted_least_squares(x, y, &support, &mut counter)?.iterate;
        let solve_macs = counter.total() - before_solve;
        breakdown.solve += solve_macs;

        let before_residual = counter.total();
        r = compute_residual(x, y, &w, &mut counter)?;
        let residual_macs = counter.total() - before_residual;
        breakdown.residual += residual_macs;

        records.push(IterationRecord {
            iteration,
            selected: vec![chosen],
            objective: 0.5 * r.norm() * r.norm(),
            residual_norm: r.norm(),
            support_size: w.nnz(),
            l1_norm: w.l1_norm(),
            selector_stop,
            selection_macs,
            solve_macs,
            residual_macs,
            update_macs: 0,
            macs_total: counter.total(),
            elapsed: start.elapsed(),
        });
    }

    let trace = SolveTrace {
        records,
        breakdown,
        macs: counter.total(),
        wall_time: start.elapsed(),
        stop,
        masked_retries,
        ambiguous_sign_steps: 0,
    };
    Ok(SolverRun { iterate: w, residual: r, trace })
}
