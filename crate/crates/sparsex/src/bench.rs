//! Experiment harness: runs a matrix of (solver, selector, stopping) cells
//! over replicated synthetic instances, pairing every inexact cell with an
//! exact-selector twin on the identical instance so recovery and work can be
//! compared like for like.  Results stream out as fixed-column CSV with a
//! JSON-lines mirror, and can be folded into a per-cell summary table.

use crate::error::{Error, Result};
use crate::rng::{make_rng, split_seed};
use crate::selectors::{BudgetSpec, SelectorKind, SelectorSpec};
use crate::solvers::{
    cosamp, frank_wolfe, gradient_pursuit, CosampConfig, FwConfig, FwConstraint, FwStep,
    SolverRun,
};
use crate::stopping::StoppingSpec;
use crate::synth::{f_measure, gamma_support, generate_problem, DEFAULT_SUPPORT_GAMMA};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

/// Which solver a cell runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Omp,
    Fw,
    Cosamp,
}

impl SolverKind {
    pub fn id(self) -> &'static str {
        match self {
            SolverKind::Omp => "omp",
            SolverKind::Fw => "fw",
            SolverKind::Cosamp => "cosamp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "omp" => Ok(SolverKind::Omp),
            "fw" => Ok(SolverKind::Fw),
            "cosamp" => Ok(SolverKind::Cosamp),
            other => Err(Error::Parse(format!(
                "unknown solver `{other}` (expected omp, fw or cosamp)"
            ))),
        }
    }
}

/// One column of the experiment matrix: a solver, its selector, and the
/// solver-specific knobs that deviate from defaults.
#[derive(Debug, Clone)]
pub struct CellConfig {
    pub solver: SolverKind,
    pub selector: SelectorSpec,
    /// Step rule for the conditional-gradient solver.
    pub fw_step: FwStep,
    /// Run the conditional-gradient solver on the unit simplex instead of an
    /// L1 ball.
    pub fw_simplex: bool,
    /// L1-ball radius; `None` sizes the ball per instance to the planted
    /// coefficients' L1 mass.
    pub fw_radius: Option<f64>,
    /// Iteration cap.  Defaults: target sparsity for the pursuit solvers
    /// (twice that when the subspace solver runs with an inexact selector and
    /// a paired reference), 5000 for conditional gradient.
    pub max_iterations: Option<usize>,
    /// Absolute residual tolerance for the subspace pursuit solver.
    pub tolerance: Option<f64>,
}

impl CellConfig {
    pub fn new(solver: SolverKind, selector: SelectorSpec) -> Self {
        CellConfig {
            solver,
            selector,
            fw_step: FwStep::ExactLineSearch,
            fw_simplex: false,
            fw_radius: None,
            max_iterations: None,
            tolerance: None,
        }
    }

    /// Value of the `stopping` record column: the stopping-rule id for
    /// accumulation selectors, the pull budget for bandit selectors, `full`
    /// for the exact selector and `na` for the mini-batch selector.
    pub fn stopping_label(&self) -> String {
        match self.selector.kind {
            SelectorKind::Exact => "full".into(),
            SelectorKind::Greedy | SelectorKind::Uniform | SelectorKind::Importance => {
                self.selector.stopping.id()
            }
            SelectorKind::HalvingNonIid | SelectorKind::HalvingNonStoch | SelectorKind::Reject => {
                match self.selector.budget {
                    BudgetSpec::Ratio(r) => format!("budget:{r}"),
                    BudgetSpec::Pulls(t) => format!("budget:{t}"),
                }
            }
            SelectorKind::Minibatch => "na".into(),
        }
    }
}

/// Shared problem shape: one (n, d, snr) setting swept over sparsity levels,
/// replicated over seeded trials.
#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub n: usize,
    pub d: usize,
    pub k_values: Vec<usize>,
    pub snr_db: f64,
    pub trials: usize,
    pub master_seed: u64,
}

/// A full experiment: the problem shape plus the cell matrix.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub problem: ProblemConfig,
    pub cells: Vec<CellConfig>,
    /// CSV output path; a `.jsonl` mirror is written next to it.
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Checks the problem-level contract.  Per-cell knobs are validated by
    /// the solvers at run time so that a bad cell fails its own records
    /// instead of blocking the whole run.
    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if p.n == 0 || p.d == 0 {
            return Err(Error::InvalidArgument(format!(
                "problem needs at least one row and one column, got {} x {}",
                p.n, p.d
            )));
        }
        if p.trials == 0 {
            return Err(Error::InvalidArgument("at least one trial is required".into()));
        }
        if p.k_values.is_empty() {
            return Err(Error::InvalidArgument("at least one sparsity level is required".into()));
        }
        for &k in &p.k_values {
            if k == 0 || k > p.d {
                return Err(Error::InvalidArgument(format!(
                    "sparsity level {k} must lie in 1..={}",
                    p.d
                )));
            }
        }
        if self.cells.is_empty() {
            return Err(Error::InvalidArgument("at least one cell is required".into()));
        }
        for cell in &self.cells {
            if let BudgetSpec::Ratio(r) = cell.selector.budget {
                if !(r.is_finite() && r > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "budget ratio must be positive and finite, got {r}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Fixed column order of the CSV output.
pub const CSV_HEADER: &str = "trial,solver,selector,stopping,n,d,k,snr,f_measure,residual,\
                              iterations,macs,wall_time_ms,agree_exact,seed,instance_hash";

/// One solver run on one instance, flattened for output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub solver: String,
    pub selector: String,
    pub stopping: String,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub snr: f64,
    pub f_measure: f64,
    pub residual: f64,
    pub iterations: usize,
    pub macs: u64,
    pub wall_time_ms: f64,
    /// `yes`/`no`: recovered support matches the exact-selector twin on the
    /// same instance; `na` for the twin itself.
    pub agree_exact: String,
    pub seed: u64,
    /// Hex digest of the instance consumed, equal across all cells of a
    /// trial.
    pub instance_hash: String,
    /// Failure reason when the cell errored; such records carry NaN measures
    /// and zero work.  Present in the JSON mirror only (the CSV column set is
    /// fixed).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some() || self.f_measure.is_nan()
    }

    /// Field-wise equality excluding wall time, which is machine noise.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.trial == other.trial
            && self.solver == other.solver
            && self.selector == other.selector
            && self.stopping == other.stopping
            && self.n == other.n
            && self.d == other.d
            && self.k == other.k
            && self.snr.to_bits() == other.snr.to_bits()
            && self.f_measure.to_bits() == other.f_measure.to_bits()
            && self.residual.to_bits() == other.residual.to_bits()
            && self.iterations == other.iterations
            && self.macs == other.macs
            && self.agree_exact == other.agree_exact
            && self.seed == other.seed
            && self.instance_hash == other.instance_hash
            && self.error == other.error
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.trial,
            self.solver,
            self.selector,
            self.stopping,
            self.n,
            self.d,
            self.k,
            self.snr,
            self.f_measure,
            self.residual,
            self.iterations,
            self.macs,
            self.wall_time_ms,
            self.agree_exact,
            self.seed,
            self.instance_hash
        )
    }

    pub fn from_csv_line(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 16 {
            return Err(Error::Parse(format!(
                "expected 16 columns, got {}: `{line}`",
                parts.len()
            )));
        }
        fn field<T: std::str::FromStr>(s: &str, name: &str) -> Result<T> {
            s.parse()
                .map_err(|_| Error::Parse(format!("bad {name} value `{s}`")))
        }
        Ok(TrialRecord {
            trial: field(parts[0], "trial")?,
            solver: parts[1].to_string(),
            selector: parts[2].to_string(),
            stopping: parts[3].to_string(),
            n: field(parts[4], "n")?,
            d: field(parts[5], "d")?,
            k: field(parts[6], "k")?,
            snr: field(parts[7], "snr")?,
            f_measure: field(parts[8], "f_measure")?,
            residual: field(parts[9], "residual")?,
            iterations: field(parts[10], "iterations")?,
            macs: field(parts[11], "macs")?,
            wall_time_ms: field(parts[12], "wall_time_ms")?,
            agree_exact: parts[13].to_string(),
            seed: field(parts[14], "seed")?,
            instance_hash: parts[15].to_string(),
            error: None,
        })
    }
}

pub fn write_csv(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{CSV_HEADER}")?;
    for record in records {
        writeln!(out, "{}", record.csv_line())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<TrialRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        Some(header) => {
            return Err(Error::Parse(format!(
                "unexpected header `{header}` in {}",
                path.display()
            )))
        }
        None => return Err(Error::Parse(format!("{} is empty", path.display()))),
    }
    lines.map(TrialRecord::from_csv_line).collect()
}

pub fn write_jsonl(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Parse(format!("record serialization: {e}")))?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Seed of the instance consumed by every cell of one (sparsity, trial) pair:
/// two chained splits off the master seed, so trials are independent streams
/// and parallel execution cannot reorder draws.
pub fn instance_seed(master_seed: u64, k_index: usize, trial: usize) -> u64 {
    split_seed(split_seed(master_seed, k_index as u64), trial as u64)
}

/// Cache key for exact-selector twin runs: every knob that changes what the
/// twin computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct TwinKey {
    solver: SolverKind,
    fw_step_harmonic: bool,
    fw_simplex: bool,
    fw_radius_bits: u64,
    max_iterations: usize,
    tolerance_bits: u64,
}

fn twin_key(cell: &CellConfig, k: usize) -> TwinKey {
    TwinKey {
        solver: cell.solver,
        fw_step_harmonic: cell.fw_step == FwStep::Harmonic,
        fw_simplex: cell.fw_simplex,
        fw_radius_bits: cell.fw_radius.map(f64::to_bits).unwrap_or(u64::MAX),
        max_iterations: match cell.solver {
            SolverKind::Omp => k,
            SolverKind::Fw => cell.max_iterations.unwrap_or(5000),
            SolverKind::Cosamp => cell.max_iterations.unwrap_or(k),
        },
        tolerance_bits: cell.tolerance.unwrap_or(1e-3).to_bits(),
    }
}

struct TrialContext<'a> {
    problem: &'a ProblemConfig,
    instance: crate::synth::ProblemInstance,
    k: usize,
    trial: usize,
    seed: u64,
    hash: String,
    twins: HashMap<TwinKey, SolverRun>,
}

impl TrialContext<'_> {
    fn fw_config(&self, cell: &CellConfig) -> FwConfig {
        let constraint = if cell.fw_simplex {
            FwConstraint::Simplex
        } else {
            FwConstraint::L1Ball {
                radius: cell
                    .fw_radius
                    .unwrap_or_else(|| self.instance.true_coefficients.l1_norm()),
            }
        };
        FwConfig {
            constraint,
            step: cell.fw_step,
            max_iterations: cell.max_iterations.unwrap_or(5000),
        }
    }

    fn run_twin(&mut self, cell: &CellConfig) -> Result<()> {
        let key = twin_key(cell, self.k);
        if self.twins.contains_key(&key) {
            return Ok(());
        }
        // The exact selector draws nothing from the generator, so the twin's
        // stream can be a fixed side channel of the trial seed.
        let mut rng = make_rng(split_seed(self.seed, u64::MAX));
        let exact = SelectorSpec::exact();
        let run = match cell.solver {
            SolverKind::Omp => {
                gradient_pursuit(&self.instance.x, &self.instance.y, self.k, &exact, &mut rng)?
            }
            SolverKind::Fw => {
                frank_wolfe(&self.instance.x, &self.instance.y, &self.fw_config(cell), &exact, &mut rng)?
            }
            SolverKind::Cosamp => {
                let mut config =
                    CosampConfig::new(self.k, cell.max_iterations.unwrap_or(self.k));
                if let Some(tol) = cell.tolerance {
                    config.tolerance = tol;
                }
                cosamp(&self.instance.x, &self.instance.y, &config, &exact, &mut rng)?
            }
        };
        self.twins.insert(key, run);
        Ok(())
    }

    fn run_cell(&mut self, cell_index: usize, cell: &CellConfig) -> Result<TrialRecord> {
        let is_exact = cell.selector.kind == SelectorKind::Exact;
        self.run_twin(cell)?;
        let key = twin_key(cell, self.k);

        let run = if is_exact {
            self.twins[&key].clone()
        } else {
            let mut rng = make_rng(split_seed(self.seed, cell_index as u64));
            match cell.solver {
                SolverKind::Omp => gradient_pursuit(
                    &self.instance.x,
                    &self.instance.y,
                    self.k,
                    &cell.selector,
                    &mut rng,
                )?,
                SolverKind::Fw => frank_wolfe(
                    &self.instance.x,
                    &self.instance.y,
                    &self.fw_config(cell),
                    &cell.selector,
                    &mut rng,
                )?,
                SolverKind::Cosamp => {
                    let mut config =
                        CosampConfig::new(self.k, cell.max_iterations.unwrap_or(2 * self.k));
                    if let Some(tol) = cell.tolerance {
                        config.tolerance = tol;
                    }
                    config.reference_norm = Some(self.twins[&key].residual.norm());
                    cosamp(&self.instance.x, &self.instance.y, &config, &cell.selector, &mut rng)?
                }
            }
        };

        let truth = gamma_support(&self.instance.true_coefficients, DEFAULT_SUPPORT_GAMMA);
        let found = gamma_support(&run.iterate, DEFAULT_SUPPORT_GAMMA);
        let agree_exact = if is_exact {
            "na".to_string()
        } else {
            let twin_support = gamma_support(&self.twins[&key].iterate, DEFAULT_SUPPORT_GAMMA);
            if twin_support == found { "yes" } else { "no" }.to_string()
        };

        Ok(TrialRecord {
            trial: self.trial,
            solver: cell.solver.id().to_string(),
            selector: cell.selector.id(self.problem.n),
            stopping: cell.stopping_label(),
            n: self.problem.n,
            d: self.problem.d,
            k: self.k,
            snr: self.problem.snr_db,
            f_measure: f_measure(&truth, &found),
            residual: run.residual.norm(),
            iterations: run.trace.records.len(),
            macs: run.trace.macs,
            wall_time_ms: run.trace.wall_time.as_secs_f64() * 1000.0,
            agree_exact,
            seed: self.seed,
            instance_hash: self.hash.clone(),
            error: None,
        })
    }
}

fn failed_record(
    problem: &ProblemConfig,
    cell: &CellConfig,
    k: usize,
    trial: usize,
    seed: u64,
    hash: &str,
    reason: &str,
) -> TrialRecord {
    TrialRecord {
        trial,
        solver: cell.solver.id().to_string(),
        selector: cell.selector.id(problem.n),
        stopping: cell.stopping_label(),
        n: problem.n,
        d: problem.d,
        k,
        snr: problem.snr_db,
        f_measure: f64::NAN,
        residual: f64::NAN,
        iterations: 0,
        macs: 0,
        wall_time_ms: 0.0,
        agree_exact: "na".into(),
        seed,
        instance_hash: hash.to_string(),
        error: Some(reason.to_string()),
    }
}

fn run_trial(spec: &ExperimentSpec, k_index: usize, trial: usize) -> Vec<TrialRecord> {
    let problem = &spec.problem;
    let k = problem.k_values[k_index];
    let seed = instance_seed(problem.master_seed, k_index, trial);
    let instance = match generate_problem(problem.n, problem.d, k, problem.snr_db, seed) {
        Ok(instance) => instance,
        Err(e) => {
            let reason = format!("instance generation: {e}");
            return spec
                .cells
                .iter()
                .map(|cell| failed_record(problem, cell, k, trial, seed, "", &reason))
                .collect();
        }
    };
    let hash = format!("{:016x}", instance.hash64());
    let mut ctx = TrialContext {
        problem,
        instance,
        k,
        trial,
        seed,
        hash: hash.clone(),
        twins: HashMap::new(),
    };
    spec.cells
        .iter()
        .enumerate()
        .map(|(cell_index, cell)| {
            ctx.run_cell(cell_index, cell).unwrap_or_else(|e| {
                failed_record(problem, cell, k, trial, seed, &hash, &e.to_string())
            })
        })
        .collect()
}

/// Runs the whole matrix, handing each trial's records to `sink` in task
/// order (sparsity levels outermost, then trials): parallel runs flush
/// through a reorder buffer so the stream order matches a serial run.
/// `jobs` = 0 uses all cores, 1 runs serially, otherwise a pool of that size.
/// Parallelism is across trials only; a solver run is always single-threaded.
pub fn run_experiment_streamed<F>(spec: &ExperimentSpec, jobs: usize, sink: F) -> Result<()>
where
    F: FnMut(&TrialRecord) + Send,
{
    spec.validate()?;
    let tasks: Vec<(usize, usize)> = (0..spec.problem.k_values.len())
        .flat_map(|k_index| (0..spec.problem.trials).map(move |trial| (k_index, trial)))
        .collect();

    if jobs == 1 {
        let mut sink = sink;
        for &(k_index, trial) in &tasks {
            for record in run_trial(spec, k_index, trial) {
                sink(&record);
            }
        }
        return Ok(());
    }

    struct Reorder<F> {
        next: usize,
        pending: BTreeMap<usize, Vec<TrialRecord>>,
        sink: F,
    }
    let reorder = Mutex::new(Reorder { next: 0, pending: BTreeMap::new(), sink });

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| {
        tasks.par_iter().enumerate().for_each(|(task_index, &(k_index, trial))| {
            let records = run_trial(spec, k_index, trial);
            let mut state = reorder.lock().expect("record sink poisoned");
            state.pending.insert(task_index, records);
            loop {
                let next = state.next;
                let Some(records) = state.pending.remove(&next) else { break };
                for record in &records {
                    (state.sink)(record);
                }
                state.next += 1;
            }
        });
    });
    Ok(())
}

/// Like [`run_experiment_streamed`] but collects the records.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<Vec<TrialRecord>> {
    let mut records = Vec::new();
    run_experiment_streamed(spec, jobs, |record| records.push(record.clone()))?;
    Ok(records)
}

/// Aggregate of one cell at one sparsity level.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub solver: String,
    pub selector: String,
    pub stopping: String,
    pub k: usize,
    pub n: usize,
    pub d: usize,
    pub snr: f64,
    /// Successful records folded into the statistics.
    pub trials: usize,
    /// Records that carried a failure and were left out.
    pub failed: usize,
    pub f_mean: f64,
    pub f_std: f64,
    pub macs_mean: f64,
    pub macs_std: f64,
    pub wall_mean_ms: f64,
    pub wall_std_ms: f64,
    /// Exact-twin macs over this cell's macs, when an exact cell with the
    /// same solver and problem shape is present.
    pub speedup_vs_exact: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (values.len() - 1) as f64;
    (mean, var.sqrt())
}

/// Folds records into per-cell rows (cell = solver, selector, stopping and
/// sparsity level), keeping first-appearance order.  Records in one cell must
/// share a problem shape; failed records are counted but excluded from the
/// statistics.
pub fn summarize(records: &[TrialRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to summarize".into()));
    }
    type Key = (String, String, String, usize);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: HashMap<Key, Vec<&TrialRecord>> = HashMap::new();
    for record in records {
        let key = (
            record.solver.clone(),
            record.selector.clone(),
            record.stopping.clone(),
            record.k,
        );
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key.clone());
                Vec::new()
            })
            .push(record);
    }

    let mut rows = Vec::with_capacity(order.len());
    for key in &order {
        let members = &groups[key];
        let shape = (members[0].n, members[0].d, members[0].snr.to_bits());
        for member in members.iter() {
            if (member.n, member.d, member.snr.to_bits()) != shape {
                return Err(Error::Aggregation(format!(
                    "cell {}/{}/{}/k={} mixes problem shapes: {}x{} snr {} vs {}x{} snr {}",
                    key.0, key.1, key.2, key.3, members[0].n, members[0].d, members[0].snr,
                    member.n, member.d, member.snr
                )));
            }
        }
        let good: Vec<&&TrialRecord> = members.iter().filter(|r| !r.failed()).collect();
        let (f_mean, f_std) = mean_std(&good.iter().map(|r| r.f_measure).collect::<Vec<_>>());
        let (macs_mean, macs_std) =
            mean_std(&good.iter().map(|r| r.macs as f64).collect::<Vec<_>>());
        let (wall_mean_ms, wall_std_ms) =
            mean_std(&good.iter().map(|r| r.wall_time_ms).collect::<Vec<_>>());
        rows.push(SummaryRow {
            solver: key.0.clone(),
            selector: key.1.clone(),
            stopping: key.2.clone(),
            k: key.3,
            n: members[0].n,
            d: members[0].d,
            snr: members[0].snr,
            trials: good.len(),
            failed: members.len() - good.len(),
            f_mean,
            f_std,
            macs_mean,
            macs_std,
            wall_mean_ms,
            wall_std_ms,
            speedup_vs_exact: None,
        });
    }

    // Work ratio against the exact cell of the same solver and problem shape.
    let mut exact_macs: HashMap<(String, usize, usize, usize, u64), f64> = HashMap::new();
    for row in &rows {
        if row.selector == "exact" && row.macs_mean.is_finite() {
            exact_macs.insert(
                (row.solver.clone(), row.k, row.n, row.d, row.snr.to_bits()),
                row.macs_mean,
            );
        }
    }
    for row in rows.iter_mut() {
        let key = (row.solver.clone(), row.k, row.n, row.d, row.snr.to_bits());
        if let Some(&reference) = exact_macs.get(&key) {
            if row.macs_mean.is_finite() && row.macs_mean > 0.0 {
                row.speedup_vs_exact = Some(reference / row.macs_mean);
            }
        }
    }
    Ok(rows)
}

/// Renders summary rows as an aligned text table.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let header = [
        "solver", "selector", "stopping", "k", "n", "d", "snr", "trials", "failed",
        "f_measure", "macs", "wall_ms", "speedup",
    ];
    let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for row in rows {
        table.push(vec![
            row.solver.clone(),
            row.selector.clone(),
            row.stopping.clone(),
            row.k.to_string(),
            row.n.to_string(),
            row.d.to_string(),
            format!("{}", row.snr),
            row.trials.to_string(),
            row.failed.to_string(),
            format!("{:.4} ± {:.4}", row.f_mean, row.f_std),
            format!("{:.3e} ± {:.2e}", row.macs_mean, row.macs_std),
            format!("{:.1} ± {:.1}", row.wall_mean_ms, row.wall_std_ms),
            row.speedup_vs_exact
                .map(|s| format!("{s:.2}x"))
                .unwrap_or_else(|| "na".into()),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, width)| format!("{cell:<width$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Config file
// ---------------------------------------------------------------------------

#[derive(Default)]
struct CellDraft {
    solver: Option<String>,
    selector: Option<String>,
    stopping: Option<String>,
    budget_ratio: Option<f64>,
    budget_pulls: Option<u64>,
    step: Option<String>,
    constraint: Option<String>,
    radius: Option<f64>,
    max_iters: Option<usize>,
    tolerance: Option<f64>,
}

fn resolve_cell(draft: &CellDraft) -> Result<CellConfig> {
    let solver_str = draft
        .solver
        .as_deref()
        .ok_or_else(|| Error::Parse("cell is missing `solver`".into()))?;
    let solver = SolverKind::parse(solver_str)?;
    let mut selector = SelectorSpec::parse(draft.selector.as_deref().unwrap_or("exact"))?;

    let accumulating = matches!(
        selector.kind,
        SelectorKind::Greedy | SelectorKind::Uniform | SelectorKind::Importance
    );
    let bandit = matches!(
        selector.kind,
        SelectorKind::HalvingNonIid | SelectorKind::HalvingNonStoch | SelectorKind::Reject
    );

    if let Some(stopping) = &draft.stopping {
        if !accumulating {
            return Err(Error::Parse(format!(
                "`stopping` only applies to accumulation selectors, not `{}`",
                selector.id(0)
            )));
        }
        selector.stopping = StoppingSpec::parse(stopping)?;
    }
    if draft.budget_ratio.is_some() && draft.budget_pulls.is_some() {
        return Err(Error::Parse("give `budget-ratio` or `budget`, not both".into()));
    }
    if let Some(ratio) = draft.budget_ratio {
        if !bandit {
            return Err(Error::Parse("`budget-ratio` only applies to bandit selectors".into()));
        }
        selector.budget = BudgetSpec::Ratio(ratio);
    }
    if let Some(pulls) = draft.budget_pulls {
        if !bandit {
            return Err(Error::Parse("`budget` only applies to bandit selectors".into()));
        }
        selector.budget = BudgetSpec::Pulls(pulls);
    }

    let mut cell = CellConfig::new(solver, selector);
    if let Some(step) = &draft.step {
        if solver != SolverKind::Fw {
            return Err(Error::Parse("`step` only applies to the fw solver".into()));
        }
        cell.fw_step = match step.as_str() {
            "linesearch" => FwStep::ExactLineSearch,
            "harmonic" => FwStep::Harmonic,
            other => {
                return Err(Error::Parse(format!(
                    "unknown step `{other}` (expected linesearch or harmonic)"
                )))
            }
        };
    }
    if let Some(constraint) = &draft.constraint {
        if solver != SolverKind::Fw {
            return Err(Error::Parse("`constraint` only applies to the fw solver".into()));
        }
        cell.fw_simplex = match constraint.as_str() {
            "l1" => false,
            "simplex" => true,
            other => {
                return Err(Error::Parse(format!(
                    "unknown constraint `{other}` (expected l1 or simplex)"
                )))
            }
        };
    }
    if let Some(radius) = draft.radius {
        if solver != SolverKind::Fw {
            return Err(Error::Parse("`radius` only applies to the fw solver".into()));
        }
        if cell.fw_simplex {
            return Err(Error::Parse("the simplex constraint has no radius".into()));
        }
        cell.fw_radius = Some(radius);
    }
    if let Some(iters) = draft.max_iters {
        if solver == SolverKind::Omp {
            return Err(Error::Parse(
                "`max-iters` does not apply to omp, which always runs its sparsity".into(),
            ));
        }
        cell.max_iterations = Some(iters);
    }
    if let Some(tol) = draft.tolerance {
        if solver != SolverKind::Cosamp {
            return Err(Error::Parse("`tolerance` only applies to the cosamp solver".into()));
        }
        cell.tolerance = Some(tol);
    }
    Ok(cell)
}

/// Parses the experiment config format: a `[problem]` section with
/// `key = value` lines (`n`, `d`, `k` as a comma list, `snr`, `trials`,
/// `seed`, `out`) followed by one `[cell]` section per matrix cell
/// (`solver`, `selector`, `stopping`, `budget-ratio`, `budget`, `step`,
/// `constraint`, `radius`, `max-iters`, `tolerance`).  `#` and `;` start
/// comments.
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    enum Section {
        None,
        Problem,
        Cell,
    }
    let mut section = Section::None;
    let mut problem_seen = false;
    let mut n = None;
    let mut d = None;
    let mut k_values: Option<Vec<usize>> = None;
    let mut snr = None;
    let mut trials = None;
    let mut seed = None;
    let mut out: Option<PathBuf> = None;
    let mut drafts: Vec<CellDraft> = Vec::new();

    fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
        value
            .parse()
            .map_err(|_| Error::Parse(format!("bad value `{value}` for `{key}`")))
    }

    for (line_no, raw) in text.lines().enumerate() {
        let line = match raw.find(['#', ';']) {
            Some(comment) => &raw[..comment],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            match name.trim() {
                "problem" => {
                    if problem_seen {
                        return Err(Error::Parse("duplicate [problem] section".into()));
                    }
                    problem_seen = true;
                    section = Section::Problem;
                }
                "cell" => {
                    drafts.push(CellDraft::default());
                    section = Section::Cell;
                }
                other => {
                    return Err(Error::Parse(format!(
                        "unknown section [{other}] on line {}",
                        line_no + 1
                    )))
                }
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!("expected `key = value` on line {}: `{line}`", line_no + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        match section {
            Section::None => {
                return Err(Error::Parse(format!(
                    "`{key}` appears before any section (line {})",
                    line_no + 1
                )))
            }
            Section::Problem => match key {
                "n" => n = Some(parse_value::<usize>(key, value)?),
                "d" => d = Some(parse_value::<usize>(key, value)?),
                "k" => {
                    let parsed: Result<Vec<usize>> = value
                        .split(',')
                        .map(|piece| parse_value::<usize>("k", piece.trim()))
                        .collect();
                    k_values = Some(parsed?);
                }
                "snr" => snr = Some(parse_value::<f64>(key, value)?),
                "trials" => trials = Some(parse_value::<usize>(key, value)?),
                "seed" => seed = Some(parse_value::<u64>(key, value)?),
                "out" => out = Some(PathBuf::from(value)),
                other => {
                    return Err(Error::Parse(format!(
                        "unknown [problem] key `{other}` (line {})",
                        line_no + 1
                    )))
                }
            },
            Section::Cell => {
                let draft = drafts.last_mut().expect("cell section implies a draft");
                match key {
                    "solver" => draft.solver = Some(value.to_string()),
                    "selector" => draft.selector = Some(value.to_string()),
                    "stopping" => draft.stopping = Some(value.to_string()),
                    "budget-ratio" => draft.budget_ratio = Some(parse_value(key, value)?),
                    "budget" => draft.budget_pulls = Some(parse_value(key, value)?),
                    "step" => draft.step = Some(value.to_string()),
                    "constraint" => draft.constraint = Some(value.to_string()),
                    "radius" => draft.radius = Some(parse_value(key, value)?),
                    "max-iters" => draft.max_iters = Some(parse_value(key, value)?),
                    "tolerance" => draft.tolerance = Some(parse_value(key, value)?),
                    other => {
                        return Err(Error::Parse(format!(
                            "unknown [cell] key `{other}` (line {})",
                            line_no + 1
                        )))
                    }
                }
            }
        }
    }

    if !problem_seen {
        return Err(Error::Parse("config needs a [problem] section".into()));
    }
    let problem = ProblemConfig {
        n: n.ok_or_else(|| Error::Parse("[problem] needs `n`".into()))?,
        d: d.ok_or_else(|| Error::Parse("[problem] needs `d`".into()))?,
        k_values: k_values.ok_or_else(|| Error::Parse("[problem] needs `k`".into()))?,
        snr_db: snr.unwrap_or(3.0),
        trials: trials.unwrap_or(10),
        master_seed: seed.unwrap_or(1234),
    };
    let cells: Result<Vec<CellConfig>> = drafts.iter().map(resolve_cell).collect();
    let spec = ExperimentSpec { problem, cells: cells?, out };
    spec.validate()?;
    Ok(spec)
}

/// Command-line overrides layered on top of a config file (or standing alone
/// when no file is given, in which case `n`, `d` and `k` are required and the
/// run has a single cell).
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub k_values: Option<Vec<usize>>,
    pub snr: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub solver: Option<String>,
    pub selector: Option<String>,
    pub stopping: Option<String>,
    pub budget_ratio: Option<f64>,
    pub rho: Option<f64>,
    pub out: Option<PathBuf>,
}

/// Builds the effective experiment: problem fields are replaced where
/// overridden; naming a solver or selector replaces the cell list with that
/// single cell; otherwise `budget-ratio` and `rho` rewrite the matching knob
/// in every cell that has one.
pub fn apply_overrides(base: Option<ExperimentSpec>, ov: &Overrides) -> Result<ExperimentSpec> {
    let mut spec = match base {
        Some(spec) => spec,
        None => {
            let n = ov.n.ok_or_else(|| Error::Parse("--n is required without a config".into()))?;
            let d = ov.d.ok_or_else(|| Error::Parse("--d is required without a config".into()))?;
            let k_values = ov
                .k_values
                .clone()
                .ok_or_else(|| Error::Parse("--k is required without a config".into()))?;
            ExperimentSpec {
                problem: ProblemConfig {
                    n,
                    d,
                    k_values,
                    snr_db: 3.0,
                    trials: 10,
                    master_seed: 1234,
                },
                cells: Vec::new(),
                out: None,
            }
        }
    };
    if let Some(n) = ov.n {
        spec.problem.n = n;
    }
    if let Some(d) = ov.d {
        spec.problem.d = d;
    }
    if let Some(k_values) = &ov.k_values {
        spec.problem.k_values = k_values.clone();
    }
    if let Some(snr) = ov.snr {
        spec.problem.snr_db = snr;
    }
    if let Some(trials) = ov.trials {
        spec.problem.trials = trials;
    }
    if let Some(seed) = ov.seed {
        spec.problem.master_seed = seed;
    }
    if let Some(out) = &ov.out {
        spec.out = Some(out.clone());
    }

    if ov.solver.is_some() || ov.selector.is_some() || spec.cells.is_empty() {
        let draft = CellDraft {
            solver: Some(ov.solver.clone().unwrap_or_else(|| "omp".into())),
            selector: ov.selector.clone(),
            stopping: ov.stopping.clone(),
            budget_ratio: ov.budget_ratio,
            radius: ov.rho,
            ..CellDraft::default()
        };
        spec.cells = vec![resolve_cell(&draft)?];
    } else {
        if let Some(ratio) = ov.budget_ratio {
            for cell in spec.cells.iter_mut() {
                if matches!(
                    cell.selector.kind,
                    SelectorKind::HalvingNonIid | SelectorKind::HalvingNonStoch | SelectorKind::Reject
                ) {
                    cell.selector.budget = BudgetSpec::Ratio(ratio);
                }
            }
        }
        if let Some(rho) = ov.rho {
            for cell in spec.cells.iter_mut() {
                if cell.solver == SolverKind::Fw && !cell.fw_simplex {
                    cell.fw_radius = Some(rho);
                }
            }
        }
        if let Some(stopping) = &ov.stopping {
            let rule = StoppingSpec::parse(stopping)?;
            for cell in spec.cells.iter_mut() {
                if matches!(
                    cell.selector.kind,
                    SelectorKind::Greedy | SelectorKind::Uniform | SelectorKind::Importance
                ) {
                    cell.selector.stopping = rule;
                }
            }
        }
    }
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small_spec(cells: Vec<CellConfig>, trials: usize) -> ExperimentSpec {
        ExperimentSpec {
            problem: ProblemConfig {
                n: 40,
                d: 16,
                k_values: vec![3],
                snr_db: 10.0,
                trials,
                master_seed: 77,
            },
            cells,
            out: None,
        }
    }

    #[test]
    fn single_exact_omp_trial_produces_one_complete_record() {
        let spec = small_spec(vec![CellConfig::new(SolverKind::Omp, SelectorSpec::exact())], 1);
        let records = run_experiment(&spec, 1).unwrap();
        assert_eq!(records.len(), 1);
        let record = &records[0];
        assert!(!record.failed());
        assert!(record.f_measure.is_finite());
        assert!(record.macs > 0);
        assert_eq!(record.agree_exact, "na");
        assert_eq!(record.stopping, "full");
        assert_eq!(record.solver, "omp");
        assert_eq!(record.selector, "exact");
        assert_eq!(record.iterations, 3);
    }

    #[test]
    fn twenty_trials_with_two_selectors_pair_forty_records_by_hash() {
        let cells = vec![
            CellConfig::new(SolverKind::Omp, SelectorSpec::exact()),
            CellConfig::new(
                SolverKind::Omp,
                SelectorSpec::greedy(StoppingSpec::Stability(2)),
            ),
        ];
        let spec = small_spec(cells, 20);
        let records = run_experiment(&spec, 0).unwrap();
        assert_eq!(records.len(), 40);
        for trial in 0..20 {
            let of_trial: Vec<&TrialRecord> =
                records.iter().filter(|r| r.trial == trial).collect();
            assert_eq!(of_trial.len(), 2);
            assert_eq!(of_trial[0].instance_hash, of_trial[1].instance_hash);
            assert_eq!(of_trial[0].seed, of_trial[1].seed);
            assert!(!of_trial[0].instance_hash.is_empty());
        }
        let hashes: std::collections::HashSet<&str> =
            records.iter().map(|r| r.instance_hash.as_str()).collect();
        assert_eq!(hashes.len(), 20, "different trials consume different instances");
    }

    #[test]
    fn parallel_and_serial_runs_produce_identical_records() {
        let cells = vec![
            CellConfig::new(SolverKind::Omp, SelectorSpec::exact()),
            CellConfig::new(
                SolverKind::Omp,
                SelectorSpec::uniform(StoppingSpec::Stability(3)),
            ),
            CellConfig::new(
                SolverKind::Cosamp,
                SelectorSpec::halving_nonstoch(BudgetSpec::Ratio(0.4)),
            ),
        ];
        let mut spec = small_spec(cells, 6);
        spec.problem.k_values = vec![2, 4];
        let serial = run_experiment(&spec, 1).unwrap();
        let parallel = run_experiment(&spec, 4).unwrap();
        let again = run_experiment(&spec, 0).unwrap();
        assert_eq!(serial.len(), 36);
        assert_eq!(serial.len(), parallel.len());
        for (a, b) in serial.iter().zip(&parallel) {
            assert!(a.same_outcome(b), "{a:?} vs {b:?}");
        }
        for (a, b) in serial.iter().zip(&again) {
            assert!(a.same_outcome(b));
        }
    }

    #[test]
    fn record_macs_match_a_direct_solver_run() {
        let spec = small_spec(
            vec![CellConfig::new(
                SolverKind::Omp,
                SelectorSpec::greedy(StoppingSpec::Stability(2)),
            )],
            2,
        );
        let records = run_experiment(&spec, 1).unwrap();
        for (trial, record) in records.iter().enumerate() {
            let seed = instance_seed(77, 0, trial);
            assert_eq!(record.seed, seed);
            let instance = generate_problem(40, 16, 3, 10.0, seed).unwrap();
            let mut rng = make_rng(split_seed(seed, 0));
            let run = gradient_pursuit(
                &instance.x,
                &instance.y,
                3,
                &SelectorSpec::greedy(StoppingSpec::Stability(2)),
                &mut rng,
            )
            .unwrap();
            assert_eq!(record.macs, run.trace.macs);
            assert_eq!(record.macs, run.trace.breakdown.total());
            assert_eq!(record.residual.to_bits(), run.residual.norm().to_bits());
        }
    }

    #[test]
    fn inexact_cells_report_agreement_against_their_exact_twin() {
        // A huge pull budget makes halving exhaust into the exact answer, so
        // agreement must read `yes`; the exact cell itself reads `na`.
        let cells = vec![
            CellConfig::new(SolverKind::Omp, SelectorSpec::exact()),
            CellConfig::new(SolverKind::Omp, SelectorSpec::halving_nonstoch(BudgetSpec::Ratio(8.0))),
        ];
        let spec = small_spec(cells, 3);
        let records = run_experiment(&spec, 1).unwrap();
        for record in &records {
            if record.selector == "exact" {
                assert_eq!(record.agree_exact, "na");
            } else {
                assert_eq!(record.agree_exact, "yes", "{record:?}");
            }
        }
    }

    #[test]
    fn failing_cell_yields_failed_record_and_the_run_continues() {
        let mut bad = CellConfig::new(SolverKind::Cosamp, SelectorSpec::exact());
        bad.tolerance = Some(-1.0); // rejected by the solver at run time
        let cells = vec![bad, CellConfig::new(SolverKind::Omp, SelectorSpec::exact())];
        let spec = small_spec(cells, 2);
        let records = run_experiment(&spec, 1).unwrap();
        assert_eq!(records.len(), 4);
        for pair in records.chunks(2) {
            assert!(pair[0].failed());
            assert!(pair[0].error.as_deref().unwrap().contains("tolerance"));
            assert_eq!(pair[0].macs, 0);
            assert!(pair[0].f_measure.is_nan());
            assert!(!pair[1].failed());
        }
    }

    #[test]
    fn csv_round_trips_and_keeps_the_pinned_header() {
        assert_eq!(
            CSV_HEADER,
            "trial,solver,selector,stopping,n,d,k,snr,f_measure,residual,iterations,macs,\
             wall_time_ms,agree_exact,seed,instance_hash"
        );
        let cells = vec![
            CellConfig::new(SolverKind::Omp, SelectorSpec::exact()),
            CellConfig::new(SolverKind::Fw, SelectorSpec::greedy(StoppingSpec::Stability(2))),
        ];
        let mut spec = small_spec(cells, 2);
        for cell in spec.cells.iter_mut() {
            cell.max_iterations = Some(60);
        }
        spec.cells[0].max_iterations = None;
        let records = run_experiment(&spec, 1).unwrap();
        let dir = tempdir().unwrap();
        let csv = dir.path().join("records.csv");
        let jsonl = dir.path().join("records.jsonl");
        write_csv(&csv, &records).unwrap();
        write_jsonl(&jsonl, &records).unwrap();

        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("trial,solver,"));
        let restored = read_csv(&csv).unwrap();
        assert_eq!(restored.len(), records.len());
        for (a, b) in records.iter().zip(&restored) {
            assert!(a.same_outcome(b));
            assert_eq!(a.wall_time_ms.to_bits(), b.wall_time_ms.to_bits());
        }

        let jsonl_text = std::fs::read_to_string(&jsonl).unwrap();
        assert_eq!(jsonl_text.lines().count(), records.len());
        let first: serde_json::Value =
            serde_json::from_str(jsonl_text.lines().next().unwrap()).unwrap();
        assert_eq!(first["solver"], "omp");
        assert!(first.get("error").is_none());
    }

    #[test]
    fn summarize_computes_sample_statistics_and_speedups() {
        let template = TrialRecord {
            trial: 0,
            solver: "omp".into(),
            selector: "exact".into(),
            stopping: "full".into(),
            n: 40,
            d: 16,
            k: 3,
            snr: 3.0,
            f_measure: 1.0,
            residual: 0.5,
            iterations: 3,
            macs: 1000,
            wall_time_ms: 1.0,
            agree_exact: "na".into(),
            seed: 1,
            instance_hash: "aa".into(),
            error: None,
        };
        let mut records = vec![template.clone()];
        // Single record: mean equals the value, std is zero.
        let rows = summarize(&records).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].f_mean, 1.0);
        assert_eq!(rows[0].f_std, 0.0);
        assert_eq!(rows[0].speedup_vs_exact, Some(1.0));

        let mut second = template.clone();
        second.trial = 1;
        second.f_measure = 0.9;
        records.push(second);
        let mut cheap = template.clone();
        cheap.selector = "greedy".into();
        cheap.stopping = "stability:2".into();
        cheap.macs = 250;
        cheap.agree_exact = "yes".into();
        records.push(cheap);
        let rows = summarize(&records).unwrap();
        assert_eq!(rows.len(), 2);
        assert!((rows[0].f_mean - 0.95).abs() < 1e-12);
        assert!((rows[0].f_std - 0.0707).abs() < 1e-3);
        assert_eq!(rows[1].speedup_vs_exact, Some(4.0));
        let table = render_table(&rows);
        assert!(table.contains("±"));
        assert!(table.contains("4.00x"));

        let mut odd = template.clone();
        odd.n = 80;
        records.push(odd);
        match summarize(&records) {
            Err(Error::Aggregation(msg)) => assert!(msg.contains("mixes problem shapes")),
            other => panic!("expected an aggregation error, got {other:?}"),
        }
    }

    #[test]
    fn summarize_skips_failed_records_but_counts_them() {
        let good = TrialRecord {
            trial: 0,
            solver: "omp".into(),
            selector: "exact".into(),
            stopping: "full".into(),
            n: 10,
            d: 5,
            k: 2,
            snr: 3.0,
            f_measure: 0.8,
            residual: 0.1,
            iterations: 2,
            macs: 100,
            wall_time_ms: 0.5,
            agree_exact: "na".into(),
            seed: 9,
            instance_hash: "bb".into(),
            error: None,
        };
        let mut bad = good.clone();
        bad.trial = 1;
        bad.f_measure = f64::NAN;
        bad.macs = 0;
        bad.error = Some("boom".into());
        let rows = summarize(&[good, bad]).unwrap();
        assert_eq!(rows[0].trials, 1);
        assert_eq!(rows[0].failed, 1);
        assert_eq!(rows[0].f_mean, 0.8);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn config_file_round_trip_covers_problem_and_cells() {
        let text = "
            # matrix shape
            [problem]
            n = 120
            d = 48
            k = 4, 8
            snr = 6.5
            trials = 7
            seed = 99
            out = results.csv

            [cell]
            solver = omp
            selector = greedy
            stopping = stability:4

            [cell]
            solver = cosamp
            selector = halving-nonstoch
            budget-ratio = 0.25
            max-iters = 30
            tolerance = 0.002

            [cell]
            solver = fw
            selector = exact
            step = harmonic
            radius = 2.5
            max-iters = 800
        ";
        let spec = parse_config(text).unwrap();
        assert_eq!(spec.problem.n, 120);
        assert_eq!(spec.problem.d, 48);
        assert_eq!(spec.problem.k_values, vec![4, 8]);
        assert_eq!(spec.problem.snr_db, 6.5);
        assert_eq!(spec.problem.trials, 7);
        assert_eq!(spec.problem.master_seed, 99);
        assert_eq!(spec.out.as_deref(), Some(Path::new("results.csv")));
        assert_eq!(spec.cells.len(), 3);
        assert_eq!(spec.cells[0].solver, SolverKind::Omp);
        assert_eq!(spec.cells[0].selector.stopping, StoppingSpec::Stability(4));
        assert_eq!(spec.cells[1].selector.budget, BudgetSpec::Ratio(0.25));
        assert_eq!(spec.cells[1].max_iterations, Some(30));
        assert_eq!(spec.cells[1].tolerance, Some(0.002));
        assert_eq!(spec.cells[2].fw_step, FwStep::Harmonic);
        assert_eq!(spec.cells[2].fw_radius, Some(2.5));
        assert_eq!(spec.cells[2].max_iterations, Some(800));
        assert_eq!(spec.cells[2].stopping_label(), "full");
        assert_eq!(spec.cells[1].stopping_label(), "budget:0.25");
    }

    #[test]
    fn config_rejects_unknown_and_misplaced_keys() {
        assert!(matches!(
            parse_config("[problem]\nn = 10\nd = 5\nk = 2\nwat = 1"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            parse_config("[problem]\nn = 10\nd = 5\nk = 2\n[cell]\nsolver = omp\nselector = exact\nstopping = stability:3"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            parse_config("[problem]\nn = 10\nd = 5\nk = 2\n[cell]\nsolver = omp\nselector = greedy\nbudget-ratio = 0.2"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            parse_config("[problem]\nn = 10\nd = 5\nk = 2\n[cell]\nsolver = omp\nmax-iters = 5"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(parse_config("[problem]\nn = 10\nd = 5"), Err(Error::Parse(_))));
        assert!(matches!(parse_config("n = 10"), Err(Error::Parse(_))));
        assert!(matches!(parse_config("[weird]"), Err(Error::Parse(_))));
        // Sparsity above the column count fails spec validation.
        assert!(parse_config("[problem]\nn = 10\nd = 5\nk = 9\n[cell]\nsolver = omp").is_err());
    }

    #[test]
    fn overrides_build_and_rewrite_cells() {
        let ov = Overrides {
            n: Some(30),
            d: Some(12),
            k_values: Some(vec![2]),
            selector: Some("halving-noniid".into()),
            budget_ratio: Some(0.5),
            trials: Some(2),
            ..Overrides::default()
        };
        let spec = apply_overrides(None, &ov).unwrap();
        assert_eq!(spec.cells.len(), 1);
        assert_eq!(spec.cells[0].solver, SolverKind::Omp);
        assert_eq!(spec.cells[0].selector.budget, BudgetSpec::Ratio(0.5));
        assert_eq!(spec.problem.trials, 2);

        let base = parse_config(
            "[problem]\nn = 50\nd = 20\nk = 3\n[cell]\nsolver = cosamp\nselector = reject\nbudget-ratio = 0.1\n[cell]\nsolver = fw\nselector = exact",
        )
        .unwrap();
        let ov = Overrides {
            budget_ratio: Some(0.9),
            rho: Some(3.0),
            trials: Some(1),
            ..Overrides::default()
        };
        let spec = apply_overrides(Some(base), &ov).unwrap();
        assert_eq!(spec.cells.len(), 2, "cells survive when no solver/selector override");
        assert_eq!(spec.cells[0].selector.budget, BudgetSpec::Ratio(0.9));
        assert_eq!(spec.cells[1].fw_radius, Some(3.0));

        let missing = apply_overrides(None, &Overrides::default());
        assert!(missing.is_err());
    }

    #[test]
    fn streamed_and_collected_runs_agree() {
        let spec = small_spec(
            vec![
                CellConfig::new(SolverKind::Omp, SelectorSpec::exact()),
                CellConfig::new(SolverKind::Omp, SelectorSpec::greedy(StoppingSpec::Stability(2))),
            ],
            4,
        );
        let collected = run_experiment(&spec, 1).unwrap();
        let mut streamed = Vec::new();
        run_experiment_streamed(&spec, 3, |r| streamed.push(r.clone())).unwrap();
        assert_eq!(collected.len(), streamed.len());
        for (a, b) in collected.iter().zip(&streamed) {
            assert!(a.same_outcome(b));
        }
    }
}
