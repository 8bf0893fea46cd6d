//! Conditional-gradient descent over a polytope: each iteration moves toward
//! the vertex that best correlates with the negative gradient, so iterates
//! stay feasible and at most one new coordinate activates per iteration.

use super::{IterationRecord, SolveStop, SolveTrace, SolverRun, WorkBreakdown};
use crate::error::{Error, Result};
use crate::matrix::{DesignMatrix, ResidualVector, SparseIterate};
use crate::rng::Rng;
use crate::selectors::{run_selector, SelectorMode, SelectorSpec};
use crate::work::WorkCounter;
use std::time::Instant;

/// Feasible region the iterates stay inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FwConstraint {
    /// `||w||_1 <= radius`; vertices are signed scaled basis vectors, found
    /// by the largest-magnitude gradient entry.
    L1Ball { radius: f64 },
    /// Unit simplex `w >= 0`, `sum w <= 1`; vertices are unscaled basis
    /// vectors, found by the most negative gradient entry.
    Simplex,
}

impl FwConstraint {
    pub fn radius(&self) -> f64 {
        match *self {
            FwConstraint::L1Ball { radius } => radius,
            FwConstraint::Simplex => 1.0,
        }
    }

    fn selector_mode(&self) -> SelectorMode {
        match self {
            FwConstraint::L1Ball { .. } => SelectorMode::MaxAbs,
            FwConstraint::Simplex => SelectorMode::Min,
        }
    }
}

/// Step-size rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FwStep {
    /// Minimizes the quadratic objective along the segment to the vertex,
    /// clipped to `[0, 1]`.
    ExactLineSearch,
    /// `2 / (t + 2)` at iteration `t`.
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwConfig {
    pub constraint: FwConstraint,
    pub step: FwStep,
    pub max_iterations: usize,
}

impl Default for FwConfig {
    fn default() -> Self {
        FwConfig {
            constraint: FwConstraint::L1Ball { radius: 1.0 },
            step: FwStep::ExactLineSearch,
            max_iterations: 5000,
        }
    }
}

/// Linear minimization oracle: the polytope vertex best aligned with the
/// descent direction, given the selected gradient coordinate and its
/// (estimated) value.  Returns `(coordinate, vertex coefficient, ambiguous)`
/// where `ambiguous` flags a sign decided on a zero estimate.
pub fn lmo(constraint: &FwConstraint, index: usize, gradient_value: f64) -> (usize, f64, bool) {
    match *constraint {
        FwConstraint::L1Ball { radius } => {
            if gradient_value == 0.0 {
                (index, radius, true)
            } else {
                (index, -radius * gradient_value.signum(), false)
            }
        }
        FwConstraint::Simplex => (index, 1.0, false),
    }
}

/// Runs conditional-gradient descent on `0.5 ||Xw - y||^2`.
///
/// Predictions `z = Xw` are maintained incrementally: each iteration streams
/// the single selected column (charged `n` MACs) and reuses it for both the
/// line search and the update, so per-iteration matrix work stays at the
/// selector cost plus `n`.  The run ends at `max_iterations` or when the
/// gradient vanishes; there is no other early stop.
pub fn frank_wolfe(
    x: &DesignMatrix,
    y: &[f64],
    config: &FwConfig,
    selector: &SelectorSpec,
    rng: &mut Rng,
) -> Result<SolverRun> {
    let n = x.n_rows();
    let d = x.n_cols();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "y has length {} but the matrix has {n} rows",
            y.len()
        )));
    }
    let radius = config.constraint.radius();
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidArgument(format!("constraint radius must be positive, got {radius}")));
    }
    if config.max_iterations == 0 {
        return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
    }

    let start = Instant::now();
    let mut counter = WorkCounter::new();
    let mut breakdown = WorkBreakdown::default();
    let mut records = Vec::new();
    let mut ambiguous_sign_steps = 0u64;
    let mut stop = SolveStop::IterationLimit;
    let mode = config.constraint.selector_mode();

    let mut w = vec![0.0f64; d];
    let mut z = vec![0.0f64; n]; // predictions Xw, updated incrementally
    let mut column = Vec::with_capacity(n);

    for iteration in 0..config.max_iterations {
        let residual = ResidualVector::new(z.iter().zip(y).map(|(zi, yi)| zi - yi).collect())?;
        let before_selection = counter.total();
        let outcome = run_selector(selector, x, &residual, mode, &[], rng, &mut counter)?;
        let selection_macs = counter.total() - before_selection;
        breakdown.selection += selection_macs;
        if outcome.meta.zero_gradient {
            stop = SolveStop::ZeroGradient;
            break;
        }
        let (j, vertex_coef, ambiguous) = lmo(&config.constraint, outcome.indices[0], outcome.values[0]);
        if ambiguous {
            ambiguous_sign_steps += 1;
        }

        x.copy_column(j, &mut column);
        counter.charge(n as u64);
        breakdown.update += n as u64;

        let gamma = match config.step {
            FwStep::Harmonic => 2.0 / (iteration as f64 + 2.0),
            FwStep::ExactLineSearch => {
                // Direction u = vertex - w maps to u_z = coef * col - z in
                // prediction space; minimize ||r + gamma * u_z||.
                let mut numerator = 0.0;
                let mut denominator = 0.0;
                for i in 0..n {
                    let u = vertex_coef * column[i] - z[i];
                    numerator -= residual.values()[i] * u;
                    denominator += u * u;
                }
                if denominator > 0.0 {
                    (numerator / denominator).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            }
        };

        for i in 0..n {
            z[i] = (1.0 - gamma) * z[i] + gamma * vertex_coef * column[i];
        }
        for value in w.iter_mut() {
            *value *= 1.0 - gamma;
        }
        w[j] += gamma * vertex_coef;

        let residual_norm = z
            .iter()
            .zip(y)
            .map(|(zi, yi)| (zi - yi) * (zi - yi))
            .sum::<f64>()
            .sqrt();
        records.push(IterationRecord {
            iteration,
            selected: vec![j],
            objective: 0.5 * residual_norm * residual_norm,
            residual_norm,
            support_size: w.iter().filter(|v| **v != 0.0).count(),
            l1_norm: w.iter().map(|v| v.abs()).sum(),
            selector_stop: outcome.meta.stop_cause,
            selection_macs,
            solve_macs: 0,
            residual_macs: 0,
            update_macs: n as u64,
            macs_total: counter.total(),
            elapsed: start.elapsed(),
        });
    }

    let mut support = Vec::new();
    let mut coefficients = Vec::new();
    for (j, &value) in w.iter().enumerate() {
        if value != 0.0 {
            support.push(j);
            coefficients.push(value);
        }
    }
    let iterate = SparseIterate::new(d, support, coefficients)?;
    let residual = ResidualVector::new(z.iter().zip(y).map(|(zi, yi)| zi - yi).collect())?;
    let trace = SolveTrace {
        records,
        breakdown,
        macs: counter.total(),
        wall_time: start.elapsed(),
        stop,
        masked_retries: 0,
        ambiguous_sign_steps,
    };
    Ok(SolverRun { iterate, residual, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::make_rng;
    use crate::synth::generate_problem;

    fn config(constraint: FwConstraint, step: FwStep, iters: usize) -> FwConfig {
        FwConfig { constraint, step, max_iterations: iters }
    }

    #[test]
    fn lmo_picks_signed_vertices() {
        let ball = FwConstraint::L1Ball { radius: 2.0 };
        assert_eq!(lmo(&ball, 3, -0.5), (3, 2.0, false));
        assert_eq!(lmo(&ball, 3, 0.5), (3, -2.0, false));
        assert_eq!(lmo(&ball, 1, 0.0), (1, 2.0, true));
        assert_eq!(lmo(&FwConstraint::Simplex, 4, -9.0), (4, 1.0, false));
        assert_eq!(lmo(&FwConstraint::Simplex, 4, 9.0), (4, 1.0, false));
    }

    #[test]
    fn lmo_atom_minimizes_over_enumerated_vertices() {
        // Compare the returned atom's inner product with the gradient against
        // every vertex of each feasible set, on a real gradient of dimension
        // ten.
        let inst = generate_problem(30, 10, 3, 3.0, 400).unwrap();
        let residual = crate::matrix::compute_residual(
            &inst.x,
            &inst.y,
            &SparseIterate::new(10, vec![], vec![]).unwrap(),
            &mut crate::work::WorkCounter::new(),
        )
        .unwrap();
        let gradient =
            crate::matrix::full_gradient(&inst.x, &residual, &mut crate::work::WorkCounter::new())
                .unwrap();
        let rho = 1.7;

        let (j_ball, _) = gradient
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap();
        let (idx, coef, _) = lmo(&FwConstraint::L1Ball { radius: rho }, j_ball, gradient[j_ball]);
        let attained = coef * gradient[idx];
        for (j, g) in gradient.iter().enumerate() {
            for sign in [-1.0, 1.0] {
                assert!(attained <= sign * rho * g + 1e-12, "ball vertex {j} beats the atom");
            }
        }

        let (j_min, _) = gradient
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let (idx, coef, _) = lmo(&FwConstraint::Simplex, j_min, gradient[j_min]);
        let attained = coef * gradient[idx];
        for (j, g) in gradient.iter().enumerate() {
            assert!(attained <= *g + 1e-12, "simplex vertex {j} beats the atom");
        }
    }

    #[test]
    fn single_column_interior_optimum_is_hit_in_one_step() {
        // Dyadic data (column entries 0.5, target coefficient 0.75) keeps
        // every intermediate exact, so the step lands on the optimum with a
        // residual of exactly zero.
        let x = DesignMatrix::from_rows(4, 1, vec![0.5; 4]).unwrap();
        let y = vec![0.375; 4];
        let mut rng = make_rng(10);
        let run = frank_wolfe(
            &x,
            &y,
            &config(FwConstraint::L1Ball { radius: 1.0 }, FwStep::ExactLineSearch, 50),
            &SelectorSpec::exact(),
            &mut rng,
        )
        .unwrap();
        // One line-search step lands on w = 0.75; the next iteration sees a
        // zero gradient and stops.
        assert_eq!(run.trace.stop, SolveStop::ZeroGradient);
        assert_eq!(run.trace.records.len(), 1);
        assert_eq!(run.iterate.support(), &[0]);
        assert_eq!(run.iterate.coefficients()[0], 0.75);
        assert_eq!(run.residual.norm(), 0.0);
    }

    #[test]
    fn iterates_stay_inside_the_l1_ball() {
        let inst = generate_problem(50, 20, 4, 3.0, 401).unwrap();
        let radius = 0.8 * inst.true_coefficients.l1_norm();
        let mut rng = make_rng(11);
        let run = frank_wolfe(
            &inst.x,
            &inst.y,
            &config(FwConstraint::L1Ball { radius }, FwStep::ExactLineSearch, 300),
            &SelectorSpec::exact(),
            &mut rng,
        )
        .unwrap();
        for rec in &run.trace.records {
            assert!(rec.l1_norm <= radius + 1e-9, "iteration {} left the ball", rec.iteration);
        }
        assert!(run.iterate.l1_norm() <= radius + 1e-9);
    }

    #[test]
    fn exact_line_search_never_increases_the_residual() {
        let inst = generate_problem(60, 25, 5, 3.0, 402).unwrap();
        let mut rng = make_rng(12);
        let run = frank_wolfe(
            &inst.x,
            &inst.y,
            &config(
                FwConstraint::L1Ball { radius: inst.true_coefficients.l1_norm() },
                FwStep::ExactLineSearch,
                400,
            ),
            &SelectorSpec::exact(),
            &mut rng,
        )
        .unwrap();
        let mut previous = inst.y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for rec in &run.trace.records {
            assert!(rec.residual_norm <= previous + 1e-9);
            previous = rec.residual_norm;
        }
        assert!(run.trace.records.len() == 400);
    }

    #[test]
    fn harmonic_steps_shrink_the_residual_on_an_easy_problem() {
        let inst = generate_problem(60, 25, 5, 30.0, 403).unwrap();
        let mut rng = make_rng(13);
        let run = frank_wolfe(
            &inst.x,
            &inst.y,
            &config(
                FwConstraint::L1Ball { radius: inst.true_coefficients.l1_norm() },
                FwStep::Harmonic,
                600,
            ),
            &SelectorSpec::exact(),
            &mut rng,
        )
        .unwrap();
        let initial = inst.y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(run.residual.norm() < 0.2 * initial);
    }

    #[test]
    fn simplex_iterates_stay_nonnegative_with_unit_mass() {
        // Plant strictly positive coefficients with total mass below one so
        // the unit simplex contains the noiseless optimum.
        let inst = generate_problem(40, 15, 3, 10.0, 404).unwrap();
        let raw: Vec<f64> = inst.true_coefficients.coefficients().iter().map(|c| c.abs()).collect();
        let mass: f64 = raw.iter().sum();
        let scaled: Vec<f64> = raw.iter().map(|c| 0.8 * c / mass).collect();
        let planted = SparseIterate::new(15, inst.true_support.clone(), scaled).unwrap();
        let dense = planted.to_dense();
        let y: Vec<f64> = (0..40)
            .map(|i| inst.x.row(i).iter().zip(&dense).map(|(a, b)| a * b).sum())
            .collect();
        let mut rng = make_rng(14);
        let run = frank_wolfe(
            &inst.x,
            &y,
            &config(FwConstraint::Simplex, FwStep::ExactLineSearch, 500),
            &SelectorSpec::exact(),
            &mut rng,
        )
        .unwrap();
        for rec in &run.trace.records {
            assert!(rec.l1_norm <= 1.0 + 1e-9);
        }
        assert!(run.iterate.coefficients().iter().all(|&c| c >= 0.0));
        assert!(run.iterate.l1_norm() <= 1.0 + 1e-9);
        let initial = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(run.residual.norm() < 0.25 * initial, "simplex run made little progress");
    }

    #[test]
    fn optimum_outside_the_ball_clips_to_the_boundary_vertex() {
        // One column of 0.5 with targets set by a coefficient of two: the
        // unconstrained optimum sits outside a unit ball, so the first full
        // step lands on w = radius and later line searches go nowhere.
        let x = DesignMatrix::from_rows(4, 1, vec![0.5; 4]).unwrap();
        let y = vec![1.0; 4];
        let mut rng = make_rng(18);
        let run = frank_wolfe(
            &x,
            &y,
            &config(FwConstraint::L1Ball { radius: 1.0 }, FwStep::ExactLineSearch, 5),
            &SelectorSpec::exact(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(run.trace.stop, SolveStop::IterationLimit);
        assert_eq!(run.iterate.support(), &[0]);
        assert_eq!(run.iterate.coefficients()[0], 1.0);
        assert_eq!(run.trace.records[0].residual_norm, 1.0);
        assert_eq!(run.residual.norm(), 1.0);
        for rec in &run.trace.records {
            assert_eq!(rec.l1_norm, 1.0);
        }
    }

    #[test]
    fn update_work_is_one_column_stream_per_iteration() {
        let inst = generate_problem(45, 18, 3, 3.0, 405).unwrap();
        let mut rng = make_rng(15);
        let iters = 37;
        let run = frank_wolfe(
            &inst.x,
            &inst.y,
            &config(FwConstraint::L1Ball { radius: 1.0 }, FwStep::ExactLineSearch, iters),
            &SelectorSpec::exact(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(run.trace.records.len(), iters);
        assert_eq!(run.trace.breakdown.update, (iters * 45) as u64);
        assert_eq!(run.trace.breakdown.selection, (iters * 45 * 18) as u64);
        assert_eq!(run.trace.breakdown.total(), run.trace.macs);
    }

    #[test]
    fn runs_are_bit_reproducible_under_equal_seeds() {
        let inst = generate_problem(40, 16, 3, 3.0, 406).unwrap();
        let cfg = config(FwConstraint::L1Ball { radius: 1.5 }, FwStep::ExactLineSearch, 120);
        let spec = SelectorSpec::halving_nonstoch(crate::selectors::BudgetSpec::Ratio(0.4));
        let mut a_rng = make_rng(16);
        let a = frank_wolfe(&inst.x, &inst.y, &cfg, &spec, &mut a_rng).unwrap();
        let mut b_rng = make_rng(16);
        let b = frank_wolfe(&inst.x, &inst.y, &cfg, &spec, &mut b_rng).unwrap();
        assert!(a.trace.path_eq(&b.trace));
        assert_eq!(a.iterate.coefficients(), b.iterate.coefficients());
    }

    #[test]
    fn bad_configurations_are_rejected() {
        let inst = generate_problem(10, 5, 2, 3.0, 407).unwrap();
        let mut rng = make_rng(17);
        let bad_radius = config(FwConstraint::L1Ball { radius: 0.0 }, FwStep::Harmonic, 10);
        assert!(frank_wolfe(&inst.x, &inst.y, &bad_radius, &SelectorSpec::exact(), &mut rng).is_err());
        let bad_iters = config(FwConstraint::L1Ball { radius: 1.0 }, FwStep::Harmonic, 0);
        assert!(frank_wolfe(&inst.x, &inst.y, &bad_iters, &SelectorSpec::exact(), &mut rng).is_err());
    }
}
