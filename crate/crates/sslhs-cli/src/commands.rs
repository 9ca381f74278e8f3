//! The four subcommands: run, convergence, report, serve.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use sslhs::driver::{run_observed, RunTrace, StageRecord};
use sslhs::harness::{baseline_convergence, method_slope, ss_convergence, write_csv, Method};
use sslhs::models::ModelSpec;
use sslhs::sobol::SobolDecomposition;
use sslhs::{Error, Result};

use crate::experiment::Resolved;

/// Reports always quote effective dimensions at this threshold, whatever
/// the run recorded.
const REPORT_ALPHA: f64 = 0.99;

fn io_error(context: &str, e: std::io::Error) -> Error {
    Error::InvalidConfig(format!("{context}: {e}"))
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| io_error("cannot create output directory", e))
}

/// One sequential run. Completed stages are appended to a `.partial.jsonl`
/// file as they finish; on success the full trace replaces it.
pub fn cmd_run(res: &Resolved) -> Result<PathBuf> {
    ensure_out_dir(&res.out)?;
    let model = res.spec.build()?;
    let label = res.spec.label();
    let trace_path = res
        .out
        .join(format!("{label}-seed{}-trace.json", res.config.seed));
    let partial_path = trace_path.with_extension("partial.jsonl");

    let partial = File::create(&partial_path)
        .map_err(|e| io_error("cannot create partial trace", e))?;
    let mut partial = BufWriter::new(partial);
    let out = run_observed(&res.config, model.as_ref(), |record: &StageRecord| {
        serde_json::to_writer(&mut partial, record)
            .map_err(|e| Error::InvalidConfig(format!("cannot write partial trace: {e}")))?;
        partial
            .write_all(b"\n")
            .and_then(|()| partial.flush())
            .map_err(|e| io_error("cannot write partial trace", e))
    })?;

    let file =
        File::create(&trace_path).map_err(|e| io_error("cannot create trace file", e))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer(&mut writer, &out.trace)
        .map_err(|e| Error::InvalidConfig(format!("cannot write trace: {e}")))?;
    writer
        .write_all(b"\n")
        .and_then(|()| writer.flush())
        .map_err(|e| io_error("cannot write trace", e))?;
    let _ = fs::remove_file(&partial_path);

    println!(
        "estimate={} variance={} N={} trace={}",
        out.ensemble.value,
        out.ensemble.variance,
        out.trace.total_samples,
        trace_path.display()
    );
    Ok(trace_path)
}

/// Replicated variance study across the selected methods at matched
/// total sample counts; CSV on disk, slopes on standard output.
pub fn cmd_convergence(res: &Resolved) -> Result<PathBuf> {
    ensure_out_dir(&res.out)?;
    let model = res.spec.build()?;
    let label = res.spec.label();
    let params = res.spec.params_string();

    let ns: Vec<usize> = res
        .schedule
        .iter()
        .map(|&l| res.config.nbar * l * (l + 1) / 2)
        .collect();
    let mut records = Vec::new();
    for &method in &res.methods {
        match method {
            Method::SsLhsGpc => records.extend(ss_convergence(
                model.as_ref(),
                label,
                &params,
                &res.config,
                &res.schedule,
                res.reps,
            )?),
            Method::Lhs | Method::Smc => records.extend(baseline_convergence(
                method,
                model.as_ref(),
                label,
                &params,
                &ns,
                res.reps,
                res.config.seed,
            )?),
        }
    }

    let csv_path = res.out.join(format!("{label}-convergence.csv"));
    let file = File::create(&csv_path).map_err(|e| io_error("cannot create CSV", e))?;
    let mut writer = BufWriter::new(file);
    write_csv(&mut writer, &records).map_err(|e| io_error("cannot write CSV", e))?;
    writer.flush().map_err(|e| io_error("cannot write CSV", e))?;

    println!(
        "# model={label} params={params} d={} nbar={} reps={} seed={} schedule={:?}",
        res.config.dim, res.config.nbar, res.reps, res.config.seed, res.schedule
    );
    for &method in &res.methods {
        match method_slope(&records, method) {
            Some(slope) => println!("slope {method} {slope:.4}"),
            None => println!("slope {method} n/a"),
        }
    }
    println!("csv {}", csv_path.display());
    Ok(csv_path)
}

fn load_trace(path: &Path) -> Result<RunTrace> {
    let text = fs::read_to_string(path)
        .map_err(|e| io_error(&format!("cannot read {}", path.display()), e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{} is not a run trace: {e}", path.display())))
}

fn subset_name(mask: u64) -> String {
    let dims: Vec<String> = (0..64)
        .filter(|k| mask >> k & 1 == 1)
        .map(|k| format!("y{}", k + 1))
        .collect();
    dims.join("*")
}

fn push_stratum_table(
    out: &mut String,
    trace: &RunTrace,
    record: &sslhs::driver::StageRecord,
) -> Result<()> {
    let _ = writeln!(
        out,
        "strata at stage {} (alpha = {REPORT_ALPHA}):",
        record.stage
    );
    let _ = writeln!(
        out,
        "  {:>4} {:>10} {:>13} {:>10} {:>6} {:>5}  flags",
        "id", "p", "mean", "std", "d_sup", "d_tr"
    );
    for s in &record.strata {
        let sobol = SobolDecomposition::from_contributions(
            s.id,
            trace.config.dim,
            s.sobol.iter().copied(),
        )?;
        let d_sup = sobol.effective_dim_superposition(REPORT_ALPHA)?;
        let d_tr = sobol.effective_dim_truncation(REPORT_ALPHA)?;
        let _ = writeln!(
            out,
            "  {:>4} {:>10.6} {:>13.6e} {:>10.4e} {:>6} {:>5}  {}",
            s.id,
            s.probability,
            s.mean,
            s.std_dev,
            d_sup,
            d_tr,
            if s.rank_deficient { "rank-deficient" } else { "" }
        );
    }
    Ok(())
}

/// Human-readable summary of a trace: per-stage means, variances,
/// weights and splits, then per-stratum effective dimensions. The
/// report is assembled first and written in one piece; a closed pipe on
/// standard output is not an error.
pub fn cmd_report(path: &Path, full: bool, sobol: bool) -> Result<()> {
    let trace = load_trace(path)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "model {} d={} nbar={} seed={} score-mode={} alpha={}",
        trace.model,
        trace.config.dim,
        trace.config.nbar,
        trace.config.seed,
        trace.config.score_mode,
        trace.config.alpha,
    );
    let _ = writeln!(
        out,
        "stages {}  total samples {}  estimate {:.6e}  variance {:.6e}",
        trace.stages.len(),
        trace.total_samples,
        trace.estimate,
        trace.variance
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "  {:>5} {:>6} {:>13} {:>13} {:>12}  split",
        "stage", "strata", "mean", "variance", "weight"
    );
    for (record, weight) in trace.stages.iter().zip(&trace.weights) {
        let split = match record.split {
            Some(c) if c.fallback => format!("S{} dim {} (fallback)", c.stratum_id, c.dim),
            Some(c) => format!("S{} dim {}", c.stratum_id, c.dim),
            None => "-".to_string(),
        };
        let _ = writeln!(
            out,
            "  {:>5} {:>6} {:>13.6e} {:>13.6e} {:>12.6}  {}",
            record.stage,
            record.stratification.len(),
            record.mean,
            record.variance,
            weight,
            split
        );
    }
    let _ = writeln!(out, "weights sum = {}", trace.weights.iter().sum::<f64>());
    let _ = writeln!(out);

    if full {
        for record in &trace.stages {
            push_stratum_table(&mut out, &trace, record)?;
            let _ = writeln!(out);
        }
    } else if let Some(last) = trace.stages.last() {
        push_stratum_table(&mut out, &trace, last)?;
    }

    if sobol {
        let _ = writeln!(out);
        let _ = writeln!(out, "sobol contributions (stage,stratum,subset,sigma2):");
        for record in &trace.stages {
            for s in &record.strata {
                for &(mask, value) in &s.sobol {
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        record.stage,
                        s.id,
                        subset_name(mask),
                        value
                    );
                }
            }
        }
    }

    match std::io::stdout().write_all(out.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => other.map_err(|e| io_error("cannot write report", e)),
    }
}

/// Serve a model over the line protocol: one request of `d` reals per
/// line on standard input, one real per line on standard output.
pub fn cmd_serve(spec: &ModelSpec) -> Result<()> {
    let model = spec.build()?;
    let dim = model.dim();
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| Error::Protocol(format!("request read failed: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let point: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::Protocol(format!("malformed coordinate '{tok}'")))
            })
            .collect::<Result<_>>()?;
        if point.len() != dim {
            return Err(Error::Protocol(format!(
                "expected {dim} coordinates, got {}",
                point.len()
            )));
        }
        let value = model.eval(&point)?;
        writeln!(out, "{value}")
            .and_then(|()| out.flush())
            .map_err(|e| Error::Protocol(format!("response write failed: {e}")))?;
    }
    Ok(())
}
