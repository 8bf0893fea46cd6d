//! Deterministic partial accumulation in decreasing row-weight order.

use super::{scan_extreme, zero_gradient_outcome, GradientEstimate, Mask, SelectorMeta, SelectorMode, SelectorOutcome, StopCause};
use crate::error::Result;
use crate::matrix::{DesignMatrix, ResidualVector};
use crate::stopping::{ErrorBoundTracker, StabilityTracker, StoppingRule};
use crate::work::{sort_charge, WorkCounter};

/// Greedy deterministic selector.
///
/// Sorts rows by decreasing weight `|r_i| ||x_i||_2` (ties to the smaller
/// row), accumulates them in that order, and re-evaluates the extreme after
/// every accumulation until the stopping rule fires or all rows are
/// consumed.  Heavy rows bound the largest possible contribution of the
/// remainder, so the running extreme settles long before exhaustion on
/// concentrated residuals; with the `Full` rule the result is the exact
/// selector's.
///
/// MACs: `t * d` for `t` accumulated rows, plus `ceil(n log2 n)` for the
/// sorting pass, plus `d` per step for the extreme check when the rule is
/// `Stability` (the error-bound rule updates a scalar mass instead and
/// checks nothing per coordinate).
pub fn greedy_deterministic_selector(
    x: &DesignMatrix,
    r: &ResidualVector,
    rule: StoppingRule,
    mode: SelectorMode,
    excluded: &[usize],
    counter: &mut WorkCounter,
) -> Result<SelectorOutcome> {
    let n = x.n_rows();
    let d = x.n_cols();
    super::validate_mode_and_residual(mode, x, r)?;
    let mask = Mask::new(excluded, d)?;
    if r.is_zero() {
        return Ok(zero_gradient_outcome("greedy", mode, &mask, d));
    }

    let mut error_tracker = match rule {
        StoppingRule::ErrorBound { epsilon } => Some(ErrorBoundTracker::new(x, r, epsilon)?),
        _ => None,
    };
    let mut stability_tracker = match rule {
        StoppingRule::Stability { consecutive } => Some(StabilityTracker::new(consecutive)),
        _ => None,
    };

    // An epsilon at or above the initial mass fires before any accumulation:
    // the zero estimate is already close enough.
    if error_tracker.as_ref().map(|t| t.fires()).unwrap_or(false) {
        let estimate = GradientEstimate::new(n, d);
        let (indices, values) = scan_extreme(estimate.vector(), mode, &mask);
        return Ok(SelectorOutcome {
            indices,
            values,
            mode,
            macs: 0,
            meta: SelectorMeta {
                selector: "greedy".into(),
                stop_cause: StopCause::ErrorBound,
                ..SelectorMeta::default()
            },
        });
    }

    // Accumulation order: decreasing |r_i| * ||x_i||_2, ties to the smaller
    // row index.
    let weights: Vec<f64> = x
        .row_l2_norms()
        .iter()
        .zip(r.values())
        .map(|(norm, ri)| norm * ri.abs())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| weights[b].partial_cmp(&weights[a]).unwrap().then(a.cmp(&b)));
    let sort_macs = sort_charge(n);

    let mut estimate = GradientEstimate::new(n, d);
    let mut accumulation_macs = 0u64;
    let mut stability_macs = 0u64;
    let mut stop_cause = StopCause::Exhaustion;
    let mut extreme: Option<(Vec<usize>, Vec<f64>)> = None;

    for &i in &order {
        estimate.accumulate(x, i, r.values()[i], 1.0);
        accumulation_macs += d as u64;

        if let Some(tracker) = stability_tracker.as_mut() {
            let scanned = scan_extreme(estimate.vector(), mode, &mask);
            stability_macs += d as u64;
            let fired = tracker.step(&scanned.0);
            extreme = Some(scanned);
            if fired {
                stop_cause = StopCause::Stability;
                break;
            }
        } else if let Some(tracker) = error_tracker.as_mut() {
            if tracker.step(i) {
                stop_cause = StopCause::ErrorBound;
                break;
            }
        }
    }

    let (indices, values) = match extreme {
        Some(pair) => pair,
        None => scan_extreme(estimate.vector(), mode, &mask),
    };
    let macs = accumulation_macs + sort_macs + stability_macs;
    counter.charge(macs);
    Ok(SelectorOutcome {
        indices,
        values,
        mode,
        macs,
        meta: SelectorMeta {
            selector: "greedy".into(),
            rows_accumulated: estimate.t(),
            rows_used: order[..estimate.t()].to_vec(),
            stop_cause,
            stability_macs,
            sort_macs,
            ..SelectorMeta::default()
        },
    })
}
