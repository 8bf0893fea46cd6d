//! Command-line front end: runs experiment matrices, folds record files into
//! summary tables, and generates synthetic instances on disk.

use clap::{Args, Parser, Subcommand};
use sparsex::bench::{
    apply_overrides, parse_config, read_csv, render_table, run_experiment_streamed, summarize,
    write_jsonl, Overrides, TrialRecord, CSV_HEADER,
};
use sparsex::error::Result;
use sparsex::io::{write_matrix, write_metadata, write_targets, InstanceMetadata};
use sparsex::synth::generate_problem;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sparsex",
    version,
    about = "Sparse-recovery experiment runner: solver x selector matrices on seeded synthetic problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment matrix and emit one record per (trial, cell).
    Bench(BenchArgs),
    /// Fold a records CSV into a per-cell mean/std table.
    Summarize(SummarizeArgs),
    /// Generate one synthetic instance and write it to disk.
    Gen(GenArgs),
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment config file ([problem] section plus [cell] sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rows of the design matrix.
    #[arg(long)]
    n: Option<usize>,
    /// Columns of the design matrix.
    #[arg(long)]
    d: Option<usize>,
    /// Sparsity levels to sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Signal-to-noise ratio in dB.
    #[arg(long)]
    snr: Option<f64>,
    /// Replications per sparsity level.
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed; every trial derives its own stream from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Solver for a single-cell run (omp, fw, cosamp); replaces config cells.
    #[arg(long)]
    solver: Option<String>,
    /// Selector for a single-cell run (exact, greedy, uniform, importance,
    /// halving-noniid, halving-nonstoch, reject, stoch:<b>).
    #[arg(long)]
    selector: Option<String>,
    /// Stopping rule for accumulation selectors
    /// (stability:<steps>, stability-frac:<pct>, errbound:<eps>, full).
    #[arg(long)]
    stopping: Option<String>,
    /// Bandit pull budget as a fraction of n*d.
    #[arg(long = "budget-ratio")]
    budget_ratio: Option<f64>,
    /// L1-ball radius for fw cells (default: the planted coefficients' mass).
    #[arg(long)]
    rho: Option<f64>,
    /// Worker threads across trials; 0 uses all cores, 1 runs serially.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// CSV output path (a .jsonl mirror is written next to it).
    /// Records go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Records CSV produced by `bench`.
    path: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Planted support size.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 3.0)]
    snr: f64,
    #[arg(long, default_value_t = 1234)]
    seed: u64,
    /// Output stem: writes <stem>.sxgm, <stem>.y.sxgm and <stem>.meta.json.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Bench(args) => bench(args),
        Command::Summarize(args) => {
            let records = read_csv(&args.path)?;
            let rows = summarize(&records)?;
            print!("{}", render_table(&rows));
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen(args) => gen(args),
    }
}

fn bench(args: BenchArgs) -> Result<ExitCode> {
    let base = match &args.config {
        Some(path) => Some(parse_config(&std::fs::read_to_string(path)?)?),
        None => None,
    };
    let overrides = Overrides {
        n: args.n,
        d: args.d,
        k_values: args.k.clone(),
        snr: args.snr,
        trials: args.trials,
        seed: args.seed,
        solver: args.solver.clone(),
        selector: args.selector.clone(),
        stopping: args.stopping.clone(),
        budget_ratio: args.budget_ratio,
        rho: args.rho,
        out: args.out.clone(),
    };
    let spec = apply_overrides(base, &overrides)?;

    let mut csv: Box<dyn std::io::Write + Send> = match &spec.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(std::io::stdout()),
    };
    writeln!(csv, "{CSV_HEADER}")?;

    let mut records: Vec<TrialRecord> = Vec::new();
    let mut write_error: Option<std::io::Error> = None;
    run_experiment_streamed(&spec, args.jobs, |record| {
        records.push(record.clone());
        if write_error.is_none() {
            let write = writeln!(csv, "{}", record.csv_line()).and_then(|()| csv.flush());
            if let Err(e) = write {
                write_error = Some(e);
            }
        }
    })?;
    if let Some(e) = write_error {
        return Err(e.into());
    }

    let failed = records.iter().filter(|r| r.failed()).count();
    if let Some(path) = &spec.out {
        write_jsonl(&path.with_extension("jsonl"), &records)?;
        eprintln!(
            "{} records ({} failed) -> {} (+ .jsonl mirror)",
            records.len(),
            failed,
            path.display()
        );
    } else {
        eprintln!("{} records ({} failed)", records.len(), failed);
    }
    match summarize(&records) {
        Ok(rows) => {
            let table = render_table(&rows);
            if spec.out.is_some() {
                print!("{table}");
            } else {
                eprint!("{table}");
            }
        }
        Err(e) => eprintln!("summary unavailable: {e}"),
    }
    for record in records.iter().filter(|r| r.failed()) {
        eprintln!(
            "failed: trial {} {}/{}/{}: {}",
            record.trial,
            record.solver,
            record.selector,
            record.stopping,
            record.error.as_deref().unwrap_or("unknown reason")
        );
    }
    Ok(if failed > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn gen(args: GenArgs) -> Result<ExitCode> {
    let instance = generate_problem(args.n, args.d, args.k, args.snr, args.seed)?;
    let stem = args.out.display().to_string();
    let matrix_path = PathBuf::from(format!("{stem}.sxgm"));
    let targets_path = PathBuf::from(format!("{stem}.y.sxgm"));
    let meta_path = PathBuf::from(format!("{stem}.meta.json"));
    write_matrix(&matrix_path, &instance.x)?;
    write_targets(&targets_path, &instance.y)?;
    write_metadata(&meta_path, &InstanceMetadata::of(&instance))?;
    eprintln!(
        "wrote {} ({}x{}), {} and {}",
        matrix_path.display(),
        args.n,
        args.d,
        targets_path.display(),
        meta_path.display()
    );
    Ok(ExitCode::SUCCESS)
}
