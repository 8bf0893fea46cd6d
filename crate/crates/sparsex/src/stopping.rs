//! Stopping rules for budgeted gradient accumulation.
//!
//! Partial accumulators stop in one of three ways: the running extreme
//! coordinate has not changed for a fixed number of consecutive steps
//! (stability), the mass of the rows not yet accumulated guarantees the
//! estimate is within `epsilon` of the full gradient in the sup norm
//! (error bound), or never before exhaustion (full).  A budget-doubling
//! wrapper is also provided for selectors that take a pull budget instead of
//! a stopping rule.

use crate::error::{Error, Result};
use crate::matrix::{DesignMatrix, ResidualVector};
use crate::selectors::SelectorOutcome;

/// A stopping rule with all parameters resolved to concrete values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    /// Fire once the extreme coordinate (or coordinate list) has been
    /// observed unchanged for `consecutive` steps in a row.
    Stability { consecutive: usize },
    /// Fire once the unaccumulated mass `sum_{i not yet used} ||x_i||_inf
    /// |r_i|` drops to `epsilon` or below, which bounds the sup-norm error of
    /// a unit-weight partial accumulation.
    ErrorBound { epsilon: f64 },
    /// Never fire before every row has been accumulated.
    Full,
}

/// Parsed form of a stopping-rule identifier; fractions still need the row
/// count to resolve.
///
/// Identifiers: `stability:<N_s>`, `stability-frac:<pct>` (percent of `n`),
/// `errbound:<eps>`, `full`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingSpec {
    Stability(usize),
    /// Stability window given as a percentage of the row count.
    StabilityFrac(f64),
    ErrorBound(f64),
    /// Error bound with the default epsilon, `1e-3` times the initial total
    /// mass; resolved by the solver at setup.
    ErrorBoundAuto,
    Full,
}

impl StoppingSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "full" {
            return Ok(Self::Full);
        }
        if let Some(rest) = s.strip_prefix("stability-frac:") {
            let pct: f64 = rest
                .parse()
                .map_err(|_| Error::Parse(format!("bad stability percentage {rest:?}")))?;
            if !(pct > 0.0) || !pct.is_finite() {
                return Err(Error::Parse(format!("stability percentage must be positive, got {rest}")));
            }
            return Ok(Self::StabilityFrac(pct));
        }
        if let Some(rest) = s.strip_prefix("stability:") {
            let n_s: usize = rest
                .parse()
                .map_err(|_| Error::Parse(format!("bad stability window {rest:?}")))?;
            if n_s == 0 {
                return Err(Error::Parse("stability window must be at least 1".into()));
            }
            return Ok(Self::Stability(n_s));
        }
        if let Some(rest) = s.strip_prefix("errbound:") {
            let eps: f64 = rest
                .parse()
                .map_err(|_| Error::Parse(format!("bad error-bound epsilon {rest:?}")))?;
            if !(eps >= 0.0) || !eps.is_finite() {
                return Err(Error::Parse(format!("error-bound epsilon must be nonnegative, got {rest}")));
            }
            return Ok(Self::ErrorBound(eps));
        }
        Err(Error::Parse(format!("unknown stopping rule {s:?}")))
    }

    /// Canonical identifier string (inverse of `parse` where one exists).
    pub fn id(&self) -> String {
        match self {
            Self::Stability(n_s) => format!("stability:{n_s}"),
            Self::StabilityFrac(pct) => format!("stability-frac:{pct}"),
            Self::ErrorBound(eps) => format!("errbound:{eps}"),
            Self::ErrorBoundAuto => "errbound:auto".into(),
            Self::Full => "full".into(),
        }
    }

    /// Resolves fractions against the row count `n` and the auto epsilon
    /// against `initial_mass` (total mass of the residual at solver setup).
    pub fn resolve(&self, n: usize, initial_mass: f64) -> StoppingRule {
        match *self {
            Self::Stability(n_s) => StoppingRule::Stability { consecutive: n_s },
            Self::StabilityFrac(pct) => StoppingRule::Stability {
                consecutive: ((pct / 100.0 * n as f64).round() as usize).max(1),
            },
            Self::ErrorBound(eps) => StoppingRule::ErrorBound { epsilon: eps },
            Self::ErrorBoundAuto => StoppingRule::ErrorBound { epsilon: 1e-3 * initial_mass },
            Self::Full => StoppingRule::Full,
        }
    }
}

/// Streak counter over the running extreme.
///
/// The tracked observation is the ordered list of extreme coordinates (a
/// single index for min / max-abs queries, `m` indices for top-m queries).
/// A changed observation resets the streak and then counts itself, so the
/// streak equals the number of consecutive identical observations seen;
/// firing at `streak >= consecutive` takes exactly `consecutive` identical
/// observations in a row.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityTracker {
    consecutive: usize,
    current: Option<Vec<usize>>,
    streak: usize,
}

impl StabilityTracker {
    pub fn new(consecutive: usize) -> Self {
        Self { consecutive, current: None, streak: 0 }
    }

    /// Records one observation of the extreme; returns true once it has held
    /// for the configured number of consecutive steps.
    pub fn step(&mut self, extreme: &[usize]) -> bool {
        match &self.current {
            Some(cur) if cur.as_slice() == extreme => self.streak += 1,
            _ => {
                self.current = Some(extreme.to_vec());
                self.streak = 1;
            }
        }
        self.streak >= self.consecutive
    }

    /// Single-index convenience wrapper around [`step`](Self::step).
    pub fn step_index(&mut self, extreme: usize) -> bool {
        self.step(&[extreme])
    }

    pub fn streak(&self) -> usize {
        self.streak
    }
}

/// Remaining-mass tracker backing the error-bound rule.
///
/// Built once per selector call from the row sup norms and the residual; each
/// accumulated row removes its mass `||x_i||_inf |r_i|` (only the first time
/// that row is consumed, so sampling with replacement stays consistent).
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBoundTracker {
    epsilon: f64,
    masses: Vec<f64>,
    remaining: f64,
    consumed: Vec<bool>,
    consumed_count: usize,
}

impl ErrorBoundTracker {
    pub fn new(x: &DesignMatrix, r: &ResidualVector, epsilon: f64) -> Result<Self> {
        if r.len() != x.n_rows() {
            return Err(Error::DimensionMismatch(format!(
                "residual has length {} but the matrix has {} rows",
                r.len(),
                x.n_rows()
            )));
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "error-bound epsilon must be nonnegative and finite, got {epsilon}"
            )));
        }
        let masses: Vec<f64> = x
            .row_linf_norms()
            .iter()
            .zip(r.values())
            .map(|(norm, ri)| norm * ri.abs())
            .collect();
        let remaining = masses.iter().sum();
        Ok(Self {
            epsilon,
            remaining,
            consumed: vec![false; masses.len()],
            consumed_count: 0,
            masses,
        })
    }

    /// Total mass of all rows not yet consumed.
    pub fn remaining_mass(&self) -> f64 {
        self.remaining
    }

    /// True while `remaining <= epsilon`; may hold before any row is
    /// consumed when `epsilon` is at least the initial total mass.
    pub fn fires(&self) -> bool {
        self.remaining <= self.epsilon
    }

    /// Consumes row `i` and reports whether the rule now fires.
    pub fn step(&mut self, i: usize) -> bool {
        if !self.consumed[i] {
            self.consumed[i] = true;
            self.consumed_count += 1;
            if self.consumed_count == self.masses.len() {
                // All mass spent; pin to zero so exhaustion always fires even
                // under epsilon = 0.
                self.remaining = 0.0;
            } else {
                self.remaining = (self.remaining - self.masses[i]).max(0.0);
            }
        }
        self.fires()
    }
}

/// Total mass `sum_i ||x_i||_inf |r_i|`: the sup-norm error budget a
/// unit-weight accumulation starts from.
pub fn total_mass(x: &DesignMatrix, r: &ResidualVector) -> f64 {
    x.row_linf_norms()
        .iter()
        .zip(r.values())
        .map(|(norm, ri)| norm * ri.abs())
        .sum()
}

/// Helper computing the default error-bound epsilon, `1e-3` times the total
/// mass of `r` (the value `ErrorBoundAuto` resolves to at solver setup).
pub fn default_error_bound_epsilon(x: &DesignMatrix, r: &ResidualVector) -> f64 {
    1e-3 * total_mass(x, r)
}

/// Budget-doubling wrapper for budgeted selectors.
///
/// Runs `run(t0)`, `run(2 * t0)`, ... and stops as soon as two consecutive
/// budgets return the same coordinate list; no pulls are shared between
/// runs.  The returned outcome is the terminating run's, with its MAC count
/// replaced by the total across all runs and the terminating budget recorded
/// in the metadata.  After `max_doublings` doublings without agreement the
/// last outcome is returned with the `no_agreement` flag set.
pub fn doubling_trick<F>(mut run: F, t0: u64, max_doublings: usize) -> Result<SelectorOutcome>
where
    F: FnMut(u64) -> Result<SelectorOutcome>,
{
    if t0 == 0 {
        return Err(Error::InvalidArgument("doubling requires a positive initial budget".into()));
    }
    let mut total_macs = 0u64;
    let mut budget = t0;
    let mut previous: Option<SelectorOutcome> = None;
    let mut runs = 0usize;
    loop {
        let outcome = run(budget)?;
        total_macs += outcome.macs;
        runs += 1;
        let agreed = previous
            .as_ref()
            .map(|prev| prev.indices == outcome.indices)
            .unwrap_or(false);
        let exhausted = runs > max_doublings;
        if agreed || exhausted {
            let mut out = outcome;
            out.macs = total_macs;
            out.meta.terminating_budget = Some(budget);
            out.meta.doubling_runs = runs;
            out.meta.no_agreement = !agreed;
            return Ok(out);
        }
        previous = Some(outcome);
        budget = budget.saturating_mul(2);
    }
}
