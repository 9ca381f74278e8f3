//! `sslhs`: sequential stratified estimation from the command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 model failure,
//! 4 numerical failure.

mod commands;
mod experiment;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sslhs::sobol::ScoreMode;
use sslhs::{Error, Result};

use experiment::{ExperimentFile, Flags, ModelFlags};

#[derive(Parser)]
#[command(
    name = "sslhs",
    version,
    about = "Hierarchical stratified sampling with per-stratum LHS and surrogate-guided refinement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One estimation run; writes a trace file and prints a summary line
    Run(CommonOpts),
    /// Replicated variance-vs-samples study; writes CSV, prints slopes
    Convergence(CommonOpts),
    /// Summarize a trace file
    Report(ReportOpts),
    /// Serve a model over the line protocol (one point in, one value out)
    Serve(CommonOpts),
}

#[derive(Args, Debug, Default)]
struct CommonOpts {
    /// TOML experiment file; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem: p1, p2, p3, or blackbox
    #[arg(long)]
    problem: Option<String>,
    /// Total dimension
    #[arg(long)]
    d: Option<usize>,
    /// Active block dimension (p2/p3)
    #[arg(long)]
    dprime: Option<usize>,
    /// Ridge center (p1)
    #[arg(long)]
    a: Option<f64>,
    /// Ridge width (p1)
    #[arg(long)]
    delta: Option<f64>,
    /// Ball radius (p2; sets both radii for p3)
    #[arg(long)]
    radius: Option<f64>,
    /// First-block radius (p3)
    #[arg(long)]
    r1: Option<f64>,
    /// Second-block radius (p3)
    #[arg(long)]
    r2: Option<f64>,
    /// Indicator scale c (p2/p3)
    #[arg(long)]
    scale: Option<f64>,
    /// Black-box command line, whitespace-separated
    #[arg(long)]
    blackbox_cmd: Option<String>,
    /// Stage count L
    #[arg(long)]
    stages: Option<usize>,
    /// Per-stratum sample budget
    #[arg(long)]
    nbar: Option<usize>,
    /// Master seed (falls back to SSLHS_SEED, then 0)
    #[arg(long)]
    seed: Option<u64>,
    /// Refinement score: total or first-order
    #[arg(long, value_parser = parse_score_mode)]
    score_mode: Option<ScoreMode>,
    /// Effective-dimension threshold recorded in traces
    #[arg(long)]
    alpha: Option<f64>,
    /// Surrogate index-set cardinality bound (default: nbar)
    #[arg(long)]
    index_budget: Option<usize>,
    /// Embed surrogate coefficients in the trace
    #[arg(long)]
    dump_surrogates: bool,
    /// Replications for convergence studies
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated stage counts, e.g. 6,20,63
    #[arg(long)]
    schedule: Option<String>,
    /// Comma-separated methods from SS-LHS-gPC, LHS, SMC
    #[arg(long)]
    methods: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread bound
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct ReportOpts {
    /// Trace file written by `sslhs run`
    trace: PathBuf,
    /// Per-stratum tables for every stage, not just the last
    #[arg(long)]
    full: bool,
    /// Also print all recorded variance contributions by subset
    #[arg(long)]
    sobol: bool,
}

fn parse_score_mode(s: &str) -> std::result::Result<ScoreMode, String> {
    match s {
        "total" => Ok(ScoreMode::Total),
        "first-order" => Ok(ScoreMode::FirstOrder),
        other => Err(format!(
            "unknown score mode '{other}' (expected total or first-order)"
        )),
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::InvalidConfig(format!("bad {what} entry '{s}'")))
        })
        .collect()
}

fn to_flags(opts: &CommonOpts) -> Result<(Option<ExperimentFile>, Flags)> {
    let file = match &opts.config {
        Some(path) => Some(ExperimentFile::load(path)?),
        None => None,
    };
    let schedule = opts
        .schedule
        .as_deref()
        .map(|s| parse_list::<usize>(s, "schedule"))
        .transpose()?;
    let methods = match opts.methods.as_deref() {
        Some(text) => Some(
            parse_list::<String>(text, "method")?
                .iter()
                .map(|s| s.parse())
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let flags = Flags {
        model: ModelFlags {
            problem: opts.problem.clone(),
            d: opts.d,
            dprime: opts.dprime,
            a: opts.a,
            delta: opts.delta,
            radius: opts.radius,
            r1: opts.r1,
            r2: opts.r2,
            scale: opts.scale,
            blackbox_cmd: opts.blackbox_cmd.clone(),
        },
        stages: opts.stages,
        nbar: opts.nbar,
        seed: opts.seed,
        score_mode: opts.score_mode,
        alpha: opts.alpha,
        index_budget: opts.index_budget,
        dump_surrogates: opts.dump_surrogates,
        reps: opts.reps,
        schedule,
        methods,
        out: opts.out.clone(),
        workers: opts.workers,
    };
    Ok((file, flags))
}

fn init_workers(workers: Option<usize>) -> Result<()> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::InvalidConfig("workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("cannot size worker pool: {e}")))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(opts) => {
            let (file, flags) = to_flags(&opts)?;
            let resolved = experiment::resolve(file, &flags)?;
            init_workers(resolved.workers)?;
            commands::cmd_run(&resolved)?;
        }
        Command::Convergence(opts) => {
            let (file, flags) = to_flags(&opts)?;
            let resolved = experiment::resolve(file, &flags)?;
            init_workers(resolved.workers)?;
            commands::cmd_convergence(&resolved)?;
        }
        Command::Report(opts) => {
            commands::cmd_report(&opts.trace, opts.full, opts.sobol)?;
        }
        Command::Serve(opts) => {
            let (file, flags) = to_flags(&opts)?;
            let resolved = experiment::resolve(file, &flags)?;
            commands::cmd_serve(&resolved.spec)?;
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::ModelFailure { .. } | Error::Protocol(_) | Error::NonFiniteValue { .. } => 3,
        Error::DegenerateInterval { .. }
        | Error::InsufficientQuadrature { .. }
        | Error::PointOutsideStratum
        | Error::InvalidEnsemble(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
