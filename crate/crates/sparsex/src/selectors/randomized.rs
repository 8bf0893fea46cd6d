//! Randomized selector: importance-weighted Monte-Carlo accumulation.

use super::{
    scan_extreme, validate_mode_and_residual, zero_gradient_outcome, GradientEstimate, Mask,
    SelectorMeta, SelectorMode, SelectorOutcome, StopCause,
};
use crate::error::{Error, Result};
use crate::matrix::{DesignMatrix, ResidualVector};
use crate::rng::Rng;
use crate::stopping::{ErrorBoundTracker, StabilityTracker, StoppingRule};
use crate::work::WorkCounter;

/// Row-sampling law for the randomized selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionKind {
    /// `p_i = 1 / n`.
    Uniform,
    /// `p_i` proportional to `|r_i| ||x_i||_2`: rows are drawn according to
    /// the share of `X^T r` they can contribute, which minimizes the
    /// variance of the single-draw estimator.
    Importance,
}

/// Normalized sampling law over rows with a precomputed CDF for `O(log n)`
/// draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution {
    kind: DistributionKind,
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
    degenerate: bool,
}

impl SamplingDistribution {
    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.probabilities[i]
    }

    /// True when every importance weight was zero and the law fell back to
    /// uniform.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Draws one row index.
    pub fn sample(&self, rng: &mut Rng) -> usize {
        use rand::Rng as _;
        let u: f64 = rng.gen();
        self.cumulative.partition_point(|&c| c <= u).min(self.probabilities.len() - 1)
    }
}

/// Builds the sampling law for `kind` from the current residual.
///
/// Importance weights `|r_i| ||x_i||_2` that are exactly zero are floored at
/// `1e-15` before normalization so every row keeps positive probability; if
/// every weight is zero the law degenerates to uniform and is flagged.
pub fn build_sampling_distribution(
    x: &DesignMatrix,
    r: &ResidualVector,
    kind: DistributionKind,
) -> Result<SamplingDistribution> {
    let n = x.n_rows();
    if r.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "residual has length {} but the matrix has {n} rows",
            r.len()
        )));
    }
    let (weights, degenerate) = match kind {
        DistributionKind::Uniform => (vec![1.0; n], false),
        DistributionKind::Importance => {
            let raw: Vec<f64> = x
                .row_l2_norms()
                .iter()
                .zip(r.values())
                .map(|(norm, ri)| norm * ri.abs())
                .collect();
            if raw.iter().all(|&w| w == 0.0) {
                (vec![1.0; n], true)
            } else {
                (raw.into_iter().map(|w| if w == 0.0 { 1e-15 } else { w }).collect(), false)
            }
        }
    };
    let total: f64 = weights.iter().sum();
    let probabilities: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &p in &probabilities {
        acc += p;
        cumulative.push(acc);
    }
    // Pin the last step to exactly 1 so a draw of u -> 1 cannot fall off the
    // end.
    if let Some(last) = cumulative.last_mut() {
        *last = 1.0;
    }
    Ok(SamplingDistribution { kind, probabilities, cumulative, degenerate })
}

/// Fixed-draw Monte-Carlo estimate `sum (1 / p_i) r_i x_i` over `draws`
/// i.i.d. rows; each draw is an unbiased estimate of `X^T r` (the returned
/// raw sum averages to `draws` times the gradient).  Charges `draws * d`
/// MACs.
pub fn randomized_estimate(
    x: &DesignMatrix,
    r: &ResidualVector,
    dist: &SamplingDistribution,
    draws: usize,
    rng: &mut Rng,
    counter: &mut WorkCounter,
) -> Result<GradientEstimate> {
    if dist.probabilities.len() != x.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "distribution over {} rows does not match {} matrix rows",
            dist.probabilities.len(),
            x.n_rows()
        )));
    }
    let mut estimate = GradientEstimate::new(x.n_rows(), x.n_cols());
    for _ in 0..draws {
        let i = dist.sample(rng);
        estimate.accumulate(x, i, r.values()[i], 1.0 / dist.probability(i));
    }
    counter.charge((draws * x.n_cols()) as u64);
    Ok(estimate)
}

/// Hard cap on draw count: `1000 * n`.  The stability rule fires with
/// probability one long before this, but a cap keeps adversarial inputs from
/// looping forever; hitting it is reported as exhaustion.
fn draw_cap(n: usize) -> usize {
    1000 * n
}

/// Randomized selector.
///
/// Draws rows i.i.d. from `dist` with replacement and accumulates the
/// importance-weighted contributions `(1 / p_i) r_i x_i`, an unbiased
/// estimate of `X^T r` after any number of draws.  Stops per `rule`:
/// stability of the running extreme (the extreme check charges `d` per
/// draw), the error-bound mass of rows never yet drawn, or `Full`, which
/// stops after exactly `n` draws.
///
/// MACs: `t * d` for `t` draws, plus `t * d` more under `Stability`.
#[allow(clippy::too_many_arguments)]
pub fn randomized_selector(
    x: &DesignMatrix,
    r: &ResidualVector,
    dist: &SamplingDistribution,
    rule: StoppingRule,
    mode: SelectorMode,
    excluded: &[usize],
    rng: &mut Rng,
    counter: &mut WorkCounter,
) -> Result<SelectorOutcome> {
    let n = x.n_rows();
    let d = x.n_cols();
    validate_mode_and_residual(mode, x, r)?;
    if dist.probabilities.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "distribution over {} rows does not match {n} matrix rows",
            dist.probabilities.len()
        )));
    }
    let id = match dist.kind() {
        DistributionKind::Uniform => "uniform",
        DistributionKind::Importance => "importance",
    };
    let mask = Mask::new(excluded, d)?;
    if r.is_zero() {
        return Ok(zero_gradient_outcome(id, mode, &mask, d));
    }

    let mut error_tracker = match rule {
        StoppingRule::ErrorBound { epsilon } => Some(ErrorBoundTracker::new(x, r, epsilon)?),
        _ => None,
    };
    let mut stability_tracker = match rule {
        StoppingRule::Stability { consecutive } => Some(StabilityTracker::new(consecutive)),
        _ => None,
    };

    if error_tracker.as_ref().map(|t| t.fires()).unwrap_or(false) {
        let estimate = GradientEstimate::new(n, d);
        let (indices, values) = scan_extreme(estimate.vector(), mode, &mask);
        return Ok(SelectorOutcome {
            indices,
            values,
            mode,
            macs: 0,
            meta: SelectorMeta {
                selector: id.into(),
                stop_cause: StopCause::ErrorBound,
                ..SelectorMeta::default()
            },
        });
    }

    let mut estimate = GradientEstimate::new(n, d);
    let mut rows_used = Vec::new();
    let mut accumulation_macs = 0u64;
    let mut stability_macs = 0u64;
    let mut stop_cause = StopCause::Exhaustion;
    let mut extreme: Option<(Vec<usize>, Vec<f64>)> = None;
    let allowance = match rule {
        StoppingRule::Full => n,
        _ => draw_cap(n),
    };

    while estimate.t() < allowance {
        let i = dist.sample(rng);
        estimate.accumulate(x, i, r.values()[i], 1.0 / dist.probability(i));
        rows_used.push(i);
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
    let macs = accumulation_macs + stability_macs;
    counter.charge(macs);
    Ok(SelectorOutcome {
        indices,
        values,
        mode,
        macs,
        meta: SelectorMeta {
            selector: id.into(),
            rows_accumulated: estimate.t(),
            rows_used,
            stop_cause,
            stability_macs,
            ..SelectorMeta::default()
        },
    })
}
