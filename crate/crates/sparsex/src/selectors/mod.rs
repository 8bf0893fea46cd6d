//! Selectors: find an extreme entry of the gradient `X^T r` at a fraction of
//! the full `n * d` accumulation cost.
//!
//! Every selector answers the same query — the coordinate minimizing the
//! gradient entry, maximizing its absolute value, or the `m` largest entries
//! in absolute value — and reports the MACs it spent.  The exact selector
//! pays for the full accumulation; the others trade accuracy for budget:
//!
//! * [`greedy_deterministic_selector`] accumulates rows by decreasing weight
//!   `|r_i| ||x_i||_2` until a stopping rule fires;
//! * [`randomized_selector`](randomized::randomized_selector) samples rows
//!   i.i.d. from a uniform or importance distribution and accumulates an
//!   unbiased estimate;
//! * the bandit selectors in [`bandit`] treat coordinates as arms and spend a
//!   pull budget via successive halving or successive rejects;
//! * [`stochastic_minibatch_selector`] scores one uniform mini-batch of rows.
//!
//! Ties always resolve to the smallest coordinate index, and a residual that
//! is exactly zero short-circuits every selector with a zero-gradient
//! diagnostic.

mod bandit;
mod greedy;
mod randomized;

pub use bandit::{
    successive_halving_selector, successive_halving_top_m, successive_reject_selector, ArmState,
    BanditLoss, HalvingConfig, TauOrder,
};
pub use greedy::greedy_deterministic_selector;
pub use randomized::{
    build_sampling_distribution, randomized_estimate, randomized_selector, DistributionKind,
    SamplingDistribution,
};

use crate::error::{Error, Result};
use crate::matrix::{full_gradient, DesignMatrix, ResidualVector};
use crate::rng::Rng;
use crate::stopping::StoppingSpec;
use crate::work::WorkCounter;

/// What the selector is asked to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectorMode {
    /// The coordinate with the smallest (signed) gradient entry.
    Min,
    /// The coordinate with the largest absolute gradient entry.
    MaxAbs,
    /// The `m` coordinates with the largest absolute gradient entries, in
    /// decreasing order of absolute value.
    TopMAbs(usize),
}

impl SelectorMode {
    /// Number of coordinates the outcome carries.
    pub fn result_len(&self) -> usize {
        match self {
            Self::Min | Self::MaxAbs => 1,
            Self::TopMAbs(m) => *m,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if let Self::TopMAbs(m) = self {
            if *m == 0 || *m > d {
                return Err(Error::InvalidArgument(format!(
                    "top-m count must be in 1..={d}, got {m}"
                )));
            }
        }
        Ok(())
    }
}

/// Why a selector's accumulation ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StopCause {
    /// No accumulation loop applies (exact selector).
    #[default]
    NotApplicable,
    /// The stability rule fired.
    Stability,
    /// The error-bound rule fired.
    ErrorBound,
    /// Every row was accumulated (or the draw allowance was used up).
    Exhaustion,
    /// The pull or batch budget was spent.
    BudgetSpent,
    /// The residual was exactly zero; nothing to select.
    ZeroGradient,
}

/// Per-round log entry of a bandit selector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundLog {
    pub round: usize,
    /// Arms alive when the round started, ascending.
    pub survivors: Vec<usize>,
    /// Row draws applied this round, in order.  For halving the same draw is
    /// shared by every survivor; successive rejects draws per arm and leaves
    /// this empty.
    pub draws: Vec<usize>,
    /// Pulls each survivor received this round.
    pub pulls_per_survivor: u64,
}

/// Diagnostics accompanying a [`SelectorOutcome`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectorMeta {
    /// Canonical selector identifier (`exact`, `greedy`, ...).
    pub selector: String,
    /// Rows accumulated (deterministic selectors) or draws made (randomized).
    pub rows_accumulated: usize,
    /// Accumulation order for estimate-based selectors; replaying it
    /// reproduces the estimate.
    pub rows_used: Vec<usize>,
    pub stop_cause: StopCause,
    /// True when the input residual was exactly zero.
    pub zero_gradient: bool,
    /// Total (survivor, pull) pairs a bandit performed.
    pub pulls: u64,
    /// The pull budget a bandit was given.
    pub budget: u64,
    /// Pulls beyond the budget forced by the one-pull-per-round floor guard.
    pub budget_overshoot: u64,
    /// Bandit round log.
    pub rounds: Vec<RoundLog>,
    /// Share of `macs` charged by per-step stability checks.
    pub stability_macs: u64,
    /// Share of `macs` charged by the row-weight sorting pass.
    pub sort_macs: u64,
    /// Budget at which the doubling wrapper terminated.
    pub terminating_budget: Option<u64>,
    /// Number of runs the doubling wrapper made.
    pub doubling_runs: usize,
    /// Set when the doubling wrapper ran out of doublings without agreement.
    pub no_agreement: bool,
}

/// A selector's answer: the chosen coordinates, the accumulated estimate at
/// those coordinates, and what the query cost.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorOutcome {
    /// Chosen coordinates; length 1 for `Min`/`MaxAbs`, `m` for `TopMAbs`
    /// (decreasing absolute estimate, ties to the smaller index).
    pub indices: Vec<usize>,
    /// The selector's accumulated estimate at each returned coordinate.
    pub values: Vec<f64>,
    pub mode: SelectorMode,
    /// MACs charged for this query.
    pub macs: u64,
    pub meta: SelectorMeta,
}

/// Partial accumulation of `sum_i weight_i * r_i * x_i`.
///
/// The estimate is kept as a raw sum; rescaling by the number of
/// contributions never changes which coordinate is extreme, so no averaging
/// is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    vector: Vec<f64>,
    used: Vec<bool>,
    unique_rows: usize,
    t: usize,
}

impl GradientEstimate {
    pub fn new(n: usize, d: usize) -> Self {
        Self { vector: vec![0.0; d], used: vec![false; n], unique_rows: 0, t: 0 }
    }

    /// Adds `weight * r_i * x_i`; costs `d` MACs, charged by the caller.
    pub fn accumulate(&mut self, x: &DesignMatrix, i: usize, r_i: f64, weight: f64) {
        let scale = weight * r_i;
        let row = x.row(i);
        for (v, e) in self.vector.iter_mut().zip(row) {
            *v += scale * e;
        }
        if !self.used[i] {
            self.used[i] = true;
            self.unique_rows += 1;
        }
        self.t += 1;
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    /// Accumulation steps performed so far.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Distinct rows that contributed at least once.
    pub fn unique_rows(&self) -> usize {
        self.unique_rows
    }
}

/// Shared entry validation: mode bounds and residual length.
pub(crate) fn validate_mode_and_residual(
    mode: SelectorMode,
    x: &DesignMatrix,
    r: &ResidualVector,
) -> Result<()> {
    mode.validate(x.n_cols())?;
    if r.len() != x.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "residual has length {} but the matrix has {} rows",
            r.len(),
            x.n_rows()
        )));
    }
    Ok(())
}

/// Coordinate exclusion set (already-selected indices a solver wants masked).
pub(crate) struct Mask {
    dense: Option<Vec<bool>>,
}

impl Mask {
    pub(crate) fn new(excluded: &[usize], d: usize) -> Result<Self> {
        if excluded.is_empty() {
            return Ok(Self { dense: None });
        }
        let mut dense = vec![false; d];
        let mut count = 0usize;
        for &j in excluded {
            if j >= d {
                return Err(Error::InvalidArgument(format!(
                    "excluded index {j} out of range for {d} columns"
                )));
            }
            if !dense[j] {
                dense[j] = true;
                count += 1;
            }
        }
        if count == d {
            return Err(Error::InvalidArgument("every coordinate is excluded".into()));
        }
        Ok(Self { dense: Some(dense) })
    }

    pub(crate) fn excluded(&self, j: usize) -> bool {
        self.dense.as_ref().map(|m| m[j]).unwrap_or(false)
    }

    /// Indices not excluded, ascending.
    pub(crate) fn allowed(&self, d: usize) -> Vec<usize> {
        (0..d).filter(|&j| !self.excluded(j)).collect()
    }
}

/// Scans `values` for the extreme per `mode`, skipping masked coordinates.
/// Ties go to the smaller index.
pub(crate) fn scan_extreme(values: &[f64], mode: SelectorMode, mask: &Mask) -> (Vec<usize>, Vec<f64>) {
    match mode {
        SelectorMode::Min => {
            let mut best: Option<(usize, f64)> = None;
            for (j, &v) in values.iter().enumerate() {
                if mask.excluded(j) {
                    continue;
                }
                if best.map(|(_, bv)| v < bv).unwrap_or(true) {
                    best = Some((j, v));
                }
            }
            let (j, v) = best.expect("mask leaves at least one coordinate");
            (vec![j], vec![v])
        }
        SelectorMode::MaxAbs => {
            let mut best: Option<(usize, f64)> = None;
            for (j, &v) in values.iter().enumerate() {
                if mask.excluded(j) {
                    continue;
                }
                if best.map(|(_, bv): (usize, f64)| v.abs() > bv.abs()).unwrap_or(true) {
                    best = Some((j, v));
                }
            }
            let (j, v) = best.expect("mask leaves at least one coordinate");
            (vec![j], vec![v])
        }
        SelectorMode::TopMAbs(m) => {
            let mut candidates: Vec<(usize, f64)> = values
                .iter()
                .enumerate()
                .filter(|(j, _)| !mask.excluded(*j))
                .map(|(j, &v)| (j, v))
                .collect();
            let by_abs_desc = |a: &(usize, f64), b: &(usize, f64)| {
                b.1.abs()
                    .partial_cmp(&a.1.abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.0.cmp(&b.0))
            };
            let keep = m.min(candidates.len());
            if keep < candidates.len() {
                candidates.select_nth_unstable_by(keep - 1, by_abs_desc);
                candidates.truncate(keep);
            }
            candidates.sort_by(by_abs_desc);
            let (indices, values) = candidates.into_iter().unzip();
            (indices, values)
        }
    }
}

/// Builds the zero-gradient outcome returned by every selector when the
/// residual is exactly zero: the first allowed coordinates, value zero.
pub(crate) fn zero_gradient_outcome(
    id: &str,
    mode: SelectorMode,
    mask: &Mask,
    d: usize,
) -> SelectorOutcome {
    let take = mode.result_len();
    let indices: Vec<usize> = mask.allowed(d).into_iter().take(take).collect();
    let values = vec![0.0; indices.len()];
    SelectorOutcome {
        indices,
        values,
        mode,
        macs: 0,
        meta: SelectorMeta {
            selector: id.into(),
            stop_cause: StopCause::ZeroGradient,
            zero_gradient: true,
            ..SelectorMeta::default()
        },
    }
}

/// Exact selector: full row accumulation of `X^T r`, then a scan.
///
/// Charges exactly `n * d` MACs.
pub fn exact_selector(
    x: &DesignMatrix,
    r: &ResidualVector,
    mode: SelectorMode,
    excluded: &[usize],
    counter: &mut WorkCounter,
) -> Result<SelectorOutcome> {
    validate_mode_and_residual(mode, x, r)?;
    let mask = Mask::new(excluded, x.n_cols())?;
    if r.is_zero() {
        return Ok(zero_gradient_outcome("exact", mode, &mask, x.n_cols()));
    }
    let mut local = WorkCounter::new();
    let grad = full_gradient(x, r, &mut local)?;
    let (indices, values) = scan_extreme(&grad, mode, &mask);
    counter.charge(local.total());
    Ok(SelectorOutcome {
        indices,
        values,
        mode,
        macs: local.total(),
        meta: SelectorMeta { selector: "exact".into(), ..SelectorMeta::default() },
    })
}

/// Mini-batch selector: accumulates the unweighted partial gradient over `b`
/// rows drawn uniformly without replacement, then scans it.
///
/// Charges `b * d` MACs.  With `b = n` the batch is every row in natural
/// order there and the outcome matches the exact selector bit for bit.
pub fn stochastic_minibatch_selector(
    x: &DesignMatrix,
    r: &ResidualVector,
    b: usize,
    mode: SelectorMode,
    excluded: &[usize],
    rng: &mut Rng,
    counter: &mut WorkCounter,
) -> Result<SelectorOutcome> {
    validate_mode_and_residual(mode, x, r)?;
    let n = x.n_rows();
    if b == 0 || b > n {
        return Err(Error::InvalidArgument(format!("batch size must be in 1..={n}, got {b}")));
    }
    let mask = Mask::new(excluded, x.n_cols())?;
    if r.is_zero() {
        return Ok(zero_gradient_outcome(&format!("stoch:{b}"), mode, &mask, x.n_cols()));
    }

    // Partial Fisher-Yates draw of b distinct rows, then ascending order so
    // the accumulation is cache-friendly and b = n reproduces the exact
    // selector's summation order.
    let mut pool: Vec<usize> = (0..n).collect();
    for t in 0..b {
        let pick = t + sample_below(rng, n - t);
        pool.swap(t, pick);
    }
    let mut batch: Vec<usize> = pool[..b].to_vec();
    batch.sort_unstable();

    let mut estimate = GradientEstimate::new(n, x.n_cols());
    for &i in &batch {
        estimate.accumulate(x, i, r.values()[i], 1.0);
    }
    let macs = (b * x.n_cols()) as u64;
    counter.charge(macs);
    let (indices, values) = scan_extreme(estimate.vector(), mode, &mask);
    Ok(SelectorOutcome {
        indices,
        values,
        mode,
        macs,
        meta: SelectorMeta {
            selector: format!("stoch:{b}"),
            rows_accumulated: b,
            rows_used: batch,
            stop_cause: StopCause::BudgetSpent,
            ..SelectorMeta::default()
        },
    })
}

/// Uniform integer in `0..bound` (rejection sampling, bound >= 1).
pub(crate) fn sample_below(rng: &mut Rng, bound: usize) -> usize {
    use rand::Rng as _;
    rng.gen_range(0..bound)
}

/// Which selector to run plus its parameters; the single configuration type
/// solvers and the benchmark harness pass around.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorSpec {
    pub kind: SelectorKind,
    /// Stopping rule for greedy / randomized accumulation.
    pub stopping: StoppingSpec,
    /// Pull budget for bandit selectors.
    pub budget: BudgetSpec,
    /// Batch size for the mini-batch selector.
    pub batch: BatchSpec,
    /// Extra knobs for successive halving.
    pub halving: HalvingConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectorKind {
    Exact,
    Greedy,
    /// Randomized with the uniform distribution.
    Uniform,
    /// Randomized with importance sampling proportional to `|r_i| ||x_i||_2`.
    Importance,
    HalvingNonIid,
    HalvingNonStoch,
    Reject,
    Minibatch,
}

/// Bandit pull budget: an absolute pull count or a fraction of `n * d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetSpec {
    Pulls(u64),
    Ratio(f64),
}

impl BudgetSpec {
    pub fn resolve(&self, n: usize, d: usize) -> u64 {
        match *self {
            Self::Pulls(t) => t,
            Self::Ratio(ratio) => ((ratio * (n as f64) * (d as f64)).round() as u64).max(1),
        }
    }
}

/// Mini-batch size: absolute row count or fraction of `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatchSpec {
    Rows(usize),
    Fraction(f64),
}

impl BatchSpec {
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            Self::Rows(b) => b,
            Self::Fraction(f) => ((f * n as f64).round() as usize).clamp(1, n),
        }
    }
}

impl SelectorSpec {
    fn base(kind: SelectorKind) -> Self {
        Self {
            kind,
            stopping: StoppingSpec::Full,
            budget: BudgetSpec::Ratio(0.2),
            batch: BatchSpec::Fraction(0.1),
            halving: HalvingConfig::default(),
        }
    }

    pub fn exact() -> Self {
        Self::base(SelectorKind::Exact)
    }

    pub fn greedy(stopping: StoppingSpec) -> Self {
        Self { stopping, ..Self::base(SelectorKind::Greedy) }
    }

    pub fn uniform(stopping: StoppingSpec) -> Self {
        Self { stopping, ..Self::base(SelectorKind::Uniform) }
    }

    pub fn importance(stopping: StoppingSpec) -> Self {
        Self { stopping, ..Self::base(SelectorKind::Importance) }
    }

    pub fn halving_noniid(budget: BudgetSpec) -> Self {
        Self { budget, ..Self::base(SelectorKind::HalvingNonIid) }
    }

    pub fn halving_nonstoch(budget: BudgetSpec) -> Self {
        Self { budget, ..Self::base(SelectorKind::HalvingNonStoch) }
    }

    pub fn reject(budget: BudgetSpec) -> Self {
        Self { budget, ..Self::base(SelectorKind::Reject) }
    }

    pub fn minibatch(batch: BatchSpec) -> Self {
        Self { batch, ..Self::base(SelectorKind::Minibatch) }
    }

    /// Canonical identifier (`exact`, `greedy`, ..., `stoch:<b>`).  The batch
    /// size of `stoch` needs the row count to print absolute values.
    pub fn id(&self, n: usize) -> String {
        match self.kind {
            SelectorKind::Exact => "exact".into(),
            SelectorKind::Greedy => "greedy".into(),
            SelectorKind::Uniform => "uniform".into(),
            SelectorKind::Importance => "importance".into(),
            SelectorKind::HalvingNonIid => "halving-noniid".into(),
            SelectorKind::HalvingNonStoch => "halving-nonstoch".into(),
            SelectorKind::Reject => "reject".into(),
            SelectorKind::Minibatch => format!("stoch:{}", self.batch.resolve(n)),
        }
    }

    /// Parses a selector identifier.  `stoch:<b>` accepts an absolute batch
    /// size or a fraction of `n` in `(0, 1)`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exact" => return Ok(Self::exact()),
            "greedy" => return Ok(Self::base(SelectorKind::Greedy)),
            "uniform" => return Ok(Self::base(SelectorKind::Uniform)),
            "importance" => return Ok(Self::base(SelectorKind::Importance)),
            "halving-noniid" => return Ok(Self::base(SelectorKind::HalvingNonIid)),
            "halving-nonstoch" => return Ok(Self::base(SelectorKind::HalvingNonStoch)),
            "reject" => return Ok(Self::base(SelectorKind::Reject)),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("stoch:") {
            if let Ok(b) = rest.parse::<usize>() {
                if b == 0 {
                    return Err(Error::Parse("batch size must be positive".into()));
                }
                return Ok(Self::minibatch(BatchSpec::Rows(b)));
            }
            if let Ok(f) = rest.parse::<f64>() {
                if f > 0.0 && f < 1.0 {
                    return Ok(Self::minibatch(BatchSpec::Fraction(f)));
                }
            }
            return Err(Error::Parse(format!("bad batch size {rest:?}")));
        }
        Err(Error::Parse(format!("unknown selector {s:?}")))
    }

    /// True for selectors that consume a stopping rule.
    pub fn uses_stopping(&self) -> bool {
        matches!(self.kind, SelectorKind::Greedy | SelectorKind::Uniform | SelectorKind::Importance)
    }

    /// True for selectors that consume a pull budget.
    pub fn uses_budget(&self) -> bool {
        matches!(
            self.kind,
            SelectorKind::HalvingNonIid | SelectorKind::HalvingNonStoch | SelectorKind::Reject
        )
    }
}

/// Runs the selector described by `spec`.
///
/// `rng` feeds the stochastic selectors and is ignored by deterministic
/// ones.  An `ErrorBoundAuto` stopping rule resolves against the mass of the
/// residual passed here; solvers resolve it once at setup instead so the
/// epsilon stays fixed across iterations.
pub fn run_selector(
    spec: &SelectorSpec,
    x: &DesignMatrix,
    r: &ResidualVector,
    mode: SelectorMode,
    excluded: &[usize],
    rng: &mut Rng,
    counter: &mut WorkCounter,
) -> Result<SelectorOutcome> {
    let n = x.n_rows();
    let d = x.n_cols();
    match spec.kind {
        SelectorKind::Exact => exact_selector(x, r, mode, excluded, counter),
        SelectorKind::Greedy => {
            let rule = resolve_rule(&spec.stopping, x, r);
            greedy_deterministic_selector(x, r, rule, mode, excluded, counter)
        }
        SelectorKind::Uniform | SelectorKind::Importance => {
            let kind = if spec.kind == SelectorKind::Uniform {
                DistributionKind::Uniform
            } else {
                DistributionKind::Importance
            };
            let rule = resolve_rule(&spec.stopping, x, r);
            let dist = build_sampling_distribution(x, r, kind)?;
            randomized_selector(x, r, &dist, rule, mode, excluded, rng, counter)
        }
        SelectorKind::HalvingNonIid | SelectorKind::HalvingNonStoch => {
            let loss = if spec.kind == SelectorKind::HalvingNonIid {
                BanditLoss::NonIidStochastic
            } else {
                BanditLoss::NonStochastic
            };
            let budget = spec.budget.resolve(n, d);
            match mode {
                SelectorMode::TopMAbs(m) => successive_halving_top_m(
                    x, r, m, budget, loss, &spec.halving, excluded, rng, counter,
                ),
                _ => successive_halving_selector(
                    x, r, budget, loss, mode, &spec.halving, excluded, rng, counter,
                ),
            }
        }
        SelectorKind::Reject => {
            let budget = spec.budget.resolve(n, d);
            successive_reject_selector(x, r, budget, mode, excluded, rng, counter)
        }
        SelectorKind::Minibatch => {
            let b = spec.batch.resolve(n);
            stochastic_minibatch_selector(x, r, b, mode, excluded, rng, counter)
        }
    }
}

fn resolve_rule(
    spec: &StoppingSpec,
    x: &DesignMatrix,
    r: &ResidualVector,
) -> crate::stopping::StoppingRule {
    let mass = match spec {
        StoppingSpec::ErrorBoundAuto => crate::stopping::total_mass(x, r),
        _ => 0.0,
    };
    spec.resolve(x.n_rows(), mass)
}
