//! Best-arm-identification selectors: coordinates as arms, single-entry
//! multiply-accumulates as pulls, a fixed total pull budget.

use super::{
    sample_below, validate_mode_and_residual, zero_gradient_outcome, Mask, RoundLog, SelectorMeta,
    SelectorMode, SelectorOutcome, StopCause,
};
use crate::error::{Error, Result};
use crate::matrix::{DesignMatrix, ResidualVector};
use crate::rng::Rng;
use crate::work::WorkCounter;

/// How a pull scores the surviving arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BanditLoss {
    /// Each pull draws one row uniformly with replacement and every
    /// surviving arm `j` adds the importance-weighted entry
    /// `n * r_i * x_{i,j}`; the same draw is shared by all survivors, so
    /// arms with equal pull counts stay comparable.
    NonIidStochastic,
    /// Pulls walk a fixed row permutation; pull `k` adds `r_{tau_k} *
    /// x_{tau_k, j}` to every survivor, and scores freeze once the walk has
    /// consumed all `n` rows (the score then is the exact gradient entry).
    NonStochastic,
}

/// Row order for the non-stochastic walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauOrder {
    /// Decreasing `|r_i| ||x_i||_2`, ties to the smaller row: heaviest
    /// contributions first.
    #[default]
    WeightDecreasing,
    /// A uniformly random permutation drawn from the selector's RNG.
    Random,
}

/// Knobs for successive halving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HalvingConfig {
    pub tau: TauOrder,
    /// Overrides the divisor in the per-round pull formula
    /// `r_l = floor(T / (|S_l| * divisor))`; defaults to `ceil(log2(arms))`,
    /// the round count.
    pub log_divisor: Option<u32>,
}

/// One arm of a bandit race.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmState {
    /// Coordinate index this arm stands for.
    pub arm: usize,
    /// Accumulated score.
    pub score: f64,
    /// Pulls received so far; never decreases.
    pub pulls: u64,
}

fn ceil_log2(v: usize) -> u32 {
    debug_assert!(v >= 1);
    (usize::BITS - (v - 1).leading_zeros()).max(1)
}

/// Weight-decreasing row permutation (ties to the smaller row index).
fn weight_decreasing_order(x: &DesignMatrix, r: &ResidualVector) -> Vec<usize> {
    let weights: Vec<f64> = x
        .row_l2_norms()
        .iter()
        .zip(r.values())
        .map(|(norm, ri)| norm * ri.abs())
        .collect();
    let mut order: Vec<usize> = (0..x.n_rows()).collect();
    order.sort_by(|&a, &b| weights[b].partial_cmp(&weights[a]).unwrap().then(a.cmp(&b)));
    order
}

fn random_order(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    for t in 0..n.saturating_sub(1) {
        let pick = t + sample_below(rng, n - t);
        order.swap(t, pick);
    }
    order
}

/// Ranks `arms` best-first for elimination under `mode`; ties favor the
/// smaller coordinate.
fn sort_best_first(arms: &mut [ArmState], mode: SelectorMode) {
    match mode {
        SelectorMode::Min => arms.sort_by(|a, b| {
            a.score.partial_cmp(&b.score).unwrap().then(a.arm.cmp(&b.arm))
        }),
        SelectorMode::MaxAbs | SelectorMode::TopMAbs(_) => arms.sort_by(|a, b| {
            b.score
                .abs()
                .partial_cmp(&a.score.abs())
                .unwrap()
                .then(a.arm.cmp(&b.arm))
        }),
    }
}

struct HalvingRun {
    arms: Vec<ArmState>,
    rounds: Vec<RoundLog>,
    total_pulls: u64,
}

/// Shared successive-halving schedule: pulls every survivor `r_l` times per
/// round, keeps the best `max(target, floor(|S|/2))`, stops at `target`
/// survivors.
#[allow(clippy::too_many_arguments)]
fn run_halving(
    x: &DesignMatrix,
    r: &ResidualVector,
    budget: u64,
    loss: BanditLoss,
    mode: SelectorMode,
    config: &HalvingConfig,
    mask: &Mask,
    target: usize,
    rng: &mut Rng,
) -> Result<HalvingRun> {
    let n = x.n_rows();
    let d = x.n_cols();
    let mut arms: Vec<ArmState> = mask
        .allowed(d)
        .into_iter()
        .map(|arm| ArmState { arm, score: 0.0, pulls: 0 })
        .collect();
    if (budget as u128) < arms.len() as u128 {
        return Err(Error::BudgetTooSmall(format!(
            "halving needs at least one pull per arm: budget {budget} < {} arms",
            arms.len()
        )));
    }

    let round_count = ceil_log2(arms.len().max(2));
    let divisor = config.log_divisor.unwrap_or(round_count).max(1) as u64;

    let tau = match loss {
        BanditLoss::NonStochastic => Some(match config.tau {
            TauOrder::WeightDecreasing => weight_decreasing_order(x, r),
            TauOrder::Random => random_order(n, rng),
        }),
        BanditLoss::NonIidStochastic => None,
    };
    let mut walked = 0usize; // global position in tau across rounds

    let mut rounds = Vec::new();
    let mut total_pulls = 0u64;
    let mut round = 0usize;
    while arms.len() > target {
        let survivors: Vec<usize> = arms.iter().map(|a| a.arm).collect();
        let pulls_per_survivor = (budget / (arms.len() as u64 * divisor)).max(1);
        let mut draws = Vec::new();
        for _ in 0..pulls_per_survivor {
            match loss {
                BanditLoss::NonIidStochastic => {
                    let i = sample_below(rng, n);
                    draws.push(i);
                    let scale = n as f64 * r.values()[i];
                    let row = x.row(i);
                    for a in arms.iter_mut() {
                        a.score += scale * row[a.arm];
                    }
                }
                BanditLoss::NonStochastic => {
                    if walked < n {
                        let i = tau.as_ref().unwrap()[walked];
                        draws.push(i);
                        let ri = r.values()[i];
                        let row = x.row(i);
                        for a in arms.iter_mut() {
                            a.score += ri * row[a.arm];
                        }
                    }
                    // Beyond n the scores are frozen: the pull still counts
                    // against the budget but adds nothing.
                    walked += 1;
                }
            }
            for a in arms.iter_mut() {
                a.pulls += 1;
            }
            total_pulls += arms.len() as u64;
        }

        let keep = target.max(arms.len() / 2);
        sort_best_first(&mut arms, mode);
        arms.truncate(keep);
        arms.sort_by_key(|a| a.arm);
        rounds.push(RoundLog { round, survivors, draws, pulls_per_survivor });
        round += 1;
    }
    Ok(HalvingRun { arms, rounds, total_pulls })
}

fn bandit_meta(id: &str, run: &HalvingRun, budget: u64) -> SelectorMeta {
    SelectorMeta {
        selector: id.into(),
        stop_cause: StopCause::BudgetSpent,
        pulls: run.total_pulls,
        budget,
        budget_overshoot: run.total_pulls.saturating_sub(budget),
        rounds: run.rounds.clone(),
        ..SelectorMeta::default()
    }
}

fn halving_id(loss: BanditLoss) -> &'static str {
    match loss {
        BanditLoss::NonIidStochastic => "halving-noniid",
        BanditLoss::NonStochastic => "halving-nonstoch",
    }
}

/// Successive halving to a single coordinate.
///
/// Arms start as every non-excluded coordinate.  Each round pulls every
/// survivor `r_l = floor(T / (|S_l| * divisor))` times (at least once — a
/// zero-pull round would eliminate on no evidence, so the floor guard may
/// overshoot tiny budgets), ranks survivors per `mode`, and keeps the best
/// half.  With the non-stochastic walk and a budget of at least
/// `n * d * ceil(log2 d)` the first round already accumulates every row and
/// the race reproduces the exact selector.
///
/// MACs: one per (survivor, pull) pair, i.e. exactly the pulls performed.
#[allow(clippy::too_many_arguments)]
pub fn successive_halving_selector(
    x: &DesignMatrix,
    r: &ResidualVector,
    budget: u64,
    loss: BanditLoss,
    mode: SelectorMode,
    config: &HalvingConfig,
    excluded: &[usize],
    rng: &mut Rng,
    counter: &mut WorkCounter,
) -> Result<SelectorOutcome> {
    validate_mode_and_residual(mode, x, r)?;
    if matches!(mode, SelectorMode::TopMAbs(_)) {
        return Err(Error::InvalidArgument(
            "use successive_halving_top_m for top-m queries".into(),
        ));
    }
    let mask = Mask::new(excluded, x.n_cols())?;
    let id = halving_id(loss);
    if r.is_zero() {
        return Ok(zero_gradient_outcome(id, mode, &mask, x.n_cols()));
    }
    let run = run_halving(x, r, budget, loss, mode, config, &mask, 1, rng)?;
    counter.charge(run.total_pulls);
    let winner = &run.arms[0];
    let meta = bandit_meta(id, &run, budget);
    Ok(SelectorOutcome {
        indices: vec![winner.arm],
        values: vec![winner.score],
        mode,
        macs: run.total_pulls,
        meta,
    })
}

/// Successive halving stopped at `m` survivors, returned by decreasing
/// absolute score (ties to the smaller coordinate).
///
/// Same schedule and accounting as [`successive_halving_selector`], with the
/// per-round keep count floored at `m`.  With `m` equal to the number of
/// arms no round runs at all and every arm comes back (score zero, ascending
/// order).
#[allow(clippy::too_many_arguments)]
pub fn successive_halving_top_m(
    x: &DesignMatrix,
    r: &ResidualVector,
    m: usize,
    budget: u64,
    loss: BanditLoss,
    config: &HalvingConfig,
    excluded: &[usize],
    rng: &mut Rng,
    counter: &mut WorkCounter,
) -> Result<SelectorOutcome> {
    let mode = SelectorMode::TopMAbs(m);
    validate_mode_and_residual(mode, x, r)?;
    let mask = Mask::new(excluded, x.n_cols())?;
    let id = halving_id(loss);
    if r.is_zero() {
        return Ok(zero_gradient_outcome(id, mode, &mask, x.n_cols()));
    }
    let target = m.min(mask.allowed(x.n_cols()).len());
    let mut run = run_halving(x, r, budget, loss, mode, config, &mask, target, rng)?;
    counter.charge(run.total_pulls);
    sort_best_first(&mut run.arms, mode);
    let indices: Vec<usize> = run.arms.iter().map(|a| a.arm).collect();
    let values: Vec<f64> = run.arms.iter().map(|a| a.score).collect();
    let meta = bandit_meta(id, &run, budget);
    Ok(SelectorOutcome { indices, values, mode, macs: run.total_pulls, meta })
}

/// `0.5 + sum_{i=2}^{k} 1/i`, the normalizer of the rejects schedule.
fn log_bar(k: usize) -> f64 {
    0.5 + (2..=k).map(|i| 1.0 / i as f64).sum::<f64>()
}

/// Successive rejects.
///
/// Runs `K - 1` phases over `K` arms (stopping early at `m` survivors for
/// top-m queries).  Phase `l` brings every survivor up to
/// `n_l = ceil((T - K) / (log_bar(K) * (K + 1 - l)))` pulls, where each pull
/// draws its own uniform row `i` and adds the single importance-weighted
/// entry `n * r_i * x_{i,j}`; the phase then rejects the worst survivor
/// (largest score under `Min`, smallest absolute score otherwise, ties
/// rejecting the larger coordinate).  Total pulls stay within `T` by
/// construction of the schedule.
///
/// MACs: one per pull.
pub fn successive_reject_selector(
    x: &DesignMatrix,
    r: &ResidualVector,
    budget: u64,
    mode: SelectorMode,
    excluded: &[usize],
    rng: &mut Rng,
    counter: &mut WorkCounter,
) -> Result<SelectorOutcome> {
    validate_mode_and_residual(mode, x, r)?;
    let n = x.n_rows();
    let mask = Mask::new(excluded, x.n_cols())?;
    if r.is_zero() {
        return Ok(zero_gradient_outcome("reject", mode, &mask, x.n_cols()));
    }
    let mut arms: Vec<ArmState> = mask
        .allowed(x.n_cols())
        .into_iter()
        .map(|arm| ArmState { arm, score: 0.0, pulls: 0 })
        .collect();
    let k = arms.len();
    if (budget as u128) < k as u128 {
        return Err(Error::BudgetTooSmall(format!(
            "rejects needs at least one pull per arm: budget {budget} < {k} arms"
        )));
    }
    let target = mode.result_len().min(k);

    let normalizer = log_bar(k);
    let spendable = budget.saturating_sub(k as u64) as f64;
    let mut rounds = Vec::new();
    let mut total_pulls = 0u64;
    let mut previous_level = 0u64;
    let mut phase = 1usize;
    while arms.len() > target {
        let survivors: Vec<usize> = arms.iter().map(|a| a.arm).collect();
        let level = (spendable / (normalizer * (k + 1 - phase) as f64)).ceil() as u64;
        let additional = level.saturating_sub(previous_level);
        for a in arms.iter_mut() {
            for _ in 0..additional {
                let i = sample_below(rng, n);
                a.score += n as f64 * r.values()[i] * x.get(i, a.arm);
                a.pulls += 1;
                total_pulls += 1;
            }
        }
        // Reject the worst survivor; on ties the larger coordinate goes.
        sort_best_first(&mut arms, mode);
        arms.pop();
        arms.sort_by_key(|a| a.arm);
        rounds.push(RoundLog {
            round: phase,
            survivors,
            draws: Vec::new(),
            pulls_per_survivor: additional,
        });
        previous_level = level;
        phase += 1;
    }
    counter.charge(total_pulls);

    sort_best_first(&mut arms, mode);
    let indices: Vec<usize> = arms.iter().map(|a| a.arm).collect();
    let values: Vec<f64> = arms.iter().map(|a| a.score).collect();
    let run = HalvingRun { arms, rounds, total_pulls };
    let meta = bandit_meta("reject", &run, budget);
    Ok(SelectorOutcome { indices, values, mode, macs: total_pulls, meta })
}
