//! Replication harness: measure estimator variance as a function of the
//! total sample count, for the sequential method and for plain LHS and
//! Monte Carlo baselines at matched budgets.
//!
//! Replications use independently derived seeds and are reduced in
//! replication order, so records do not depend on execution order. A
//! single sequential run to the largest stage count yields the pooled
//! estimate at every smaller stage count along the way: stage `ℓ`
//! depends only on stages before it, so the prefix of a long run is
//! bit-identical to a short run with the same seed.

use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::driver::{run_sequential, RunConfig};
use crate::error::{Error, Result};
use crate::estimators::{combine, lhs_estimate, optimal_weights, smc_estimate};
use crate::models::Model;
use crate::sampling::{replication_seed, RngStream};

/// Estimators compared by the studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SS-LHS-gPC")]
    SsLhsGpc,
    #[serde(rename = "LHS")]
    Lhs,
    #[serde(rename = "SMC")]
    Smc,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::SsLhsGpc => "SS-LHS-gPC",
            Method::Lhs => "LHS",
            Method::Smc => "SMC",
        }
    }

    /// Stream tag separating baseline draws from sequential stages and
    /// from each other; sequential runs use stage indices starting at 1,
    /// baselines reserve stage 0 with this tag in the stratum slot.
    fn stream_tag(self) -> u64 {
        match self {
            Method::SsLhsGpc => 0,
            Method::Smc => 1 << 32,
            Method::Lhs => 2 << 32,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SS-LHS-gPC" => Ok(Method::SsLhsGpc),
            "LHS" => Ok(Method::Lhs),
            "SMC" => Ok(Method::Smc),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

/// One (method, budget) point: mean and unbiased variance of the
/// estimates across `r` independent replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub method: Method,
    pub problem: String,
    pub params: String,
    pub d: usize,
    pub n: usize,
    pub r: usize,
    pub mean: f64,
    pub variance: f64,
}

fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1) as f64)
}

fn check_reps(reps: usize) -> Result<()> {
    if reps < 2 {
        return Err(Error::InvalidConfig(format!(
            "replication count must be at least 2, got {reps}"
        )));
    }
    Ok(())
}

/// Total samples consumed by a sequential run with `stages` stages.
fn total_samples(nbar: usize, stages: usize) -> usize {
    nbar * stages * (stages + 1) / 2
}

/// Replicated sequential estimates at every stage count in `schedule`,
/// reusing one run per replicate: the estimate at `L` pools stages
/// `1..=L` of the run to the largest scheduled stage count.
pub fn ss_convergence(
    model: &dyn Model,
    problem: &str,
    params: &str,
    base: &RunConfig,
    schedule: &[usize],
    reps: usize,
) -> Result<Vec<ConvergenceRecord>> {
    check_reps(reps)?;
    if schedule.is_empty() {
        return Err(Error::InvalidConfig("empty stage schedule".into()));
    }
    if schedule.iter().any(|&l| l == 0) {
        return Err(Error::InvalidConfig("stage counts must be positive".into()));
    }
    let l_max = *schedule.iter().max().expect("non-empty schedule");

    // estimates[k][rep] = pooled estimate at schedule[k] for replicate rep.
    let mut estimates = vec![Vec::with_capacity(reps); schedule.len()];
    for rep in 0..reps {
        let mut config = base.clone();
        config.stages = l_max;
        config.seed = replication_seed(base.seed, rep as u64);
        let out = run_sequential(&config, model)?;
        let means = &out.ensemble.stage_means;
        let vars = &out.ensemble.stage_variances;
        for (k, &l) in schedule.iter().enumerate() {
            let weights = optimal_weights(&vars[..l])?;
            let pooled = combine(&means[..l], &vars[..l], &weights)?;
            estimates[k].push(pooled.value);
        }
    }

    Ok(schedule
        .iter()
        .zip(estimates)
        .map(|(&l, values)| {
            let (mean, variance) = mean_and_variance(&values);
            ConvergenceRecord {
                method: Method::SsLhsGpc,
                problem: problem.to_string(),
                params: params.to_string(),
                d: base.dim,
                n: total_samples(base.nbar, l),
                r: reps,
                mean,
                variance,
            }
        })
        .collect())
}

/// Replicated plain-LHS or Monte Carlo estimates at the given sample
/// counts.
pub fn baseline_convergence(
    method: Method,
    model: &dyn Model,
    problem: &str,
    params: &str,
    ns: &[usize],
    reps: usize,
    master_seed: u64,
) -> Result<Vec<ConvergenceRecord>> {
    check_reps(reps)?;
    if method == Method::SsLhsGpc {
        return Err(Error::InvalidConfig(
            "sequential estimates use ss_convergence".into(),
        ));
    }
    ns.iter()
        .enumerate()
        .map(|(idx, &n)| {
            let mut values = Vec::with_capacity(reps);
            for rep in 0..reps {
                let seed = replication_seed(master_seed, rep as u64);
                let mut stream = RngStream::derive(seed, 0, method.stream_tag() | idx as u64);
                let estimate = match method {
                    Method::Lhs => lhs_estimate(model, n, &mut stream)?,
                    Method::Smc => smc_estimate(model, n, &mut stream)?.0,
                    Method::SsLhsGpc => unreachable!(),
                };
                values.push(estimate);
            }
            let (mean, variance) = mean_and_variance(&values);
            Ok(ConvergenceRecord {
                method,
                problem: problem.to_string(),
                params: params.to_string(),
                d: model.dim(),
                n,
                r: reps,
                mean,
                variance,
            })
        })
        .collect()
}

/// Full three-method study on matched budgets: sequential estimates at
/// each scheduled stage count, and both baselines at exactly the same
/// total sample counts.
pub fn convergence_study(
    model: &dyn Model,
    problem: &str,
    params: &str,
    base: &RunConfig,
    schedule: &[usize],
    reps: usize,
) -> Result<Vec<ConvergenceRecord>> {
    let mut records = ss_convergence(model, problem, params, base, schedule, reps)?;
    let ns: Vec<usize> = schedule
        .iter()
        .map(|&l| total_samples(base.nbar, l))
        .collect();
    for method in [Method::Lhs, Method::Smc] {
        records.extend(baseline_convergence(
            method, model, problem, params, &ns, reps, base.seed,
        )?);
    }
    Ok(records)
}

/// Least-squares slope of `log10(variance)` against `log10(n)`;
/// non-positive or non-finite variances are skipped. `None` without two
/// usable points or without spread in `n`.
pub fn loglog_slope<I>(points: I) -> Option<f64>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let usable: Vec<(f64, f64)> = points
        .into_iter()
        .filter(|&(n, v)| n > 0.0 && v > 0.0 && v.is_finite())
        .map(|(n, v)| (n.log10(), v.log10()))
        .collect();
    if usable.len() < 2 {
        return None;
    }
    let m = usable.len() as f64;
    let x_bar = usable.iter().map(|p| p.0).sum::<f64>() / m;
    let y_bar = usable.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = usable.iter().map(|p| (p.0 - x_bar).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = usable
        .iter()
        .map(|p| (p.0 - x_bar) * (p.1 - y_bar))
        .sum();
    Some(sxy / sxx)
}

/// Fitted slope for one method's records.
pub fn method_slope(records: &[ConvergenceRecord], method: Method) -> Option<f64> {
    loglog_slope(
        records
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (r.n as f64, r.variance)),
    )
}

const CSV_HEADER: &str = "method,problem,params,d,N,R,mean,variance";

fn csv_field(value: &str) -> String {
    if value.contains([',', '"', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

/// Write records in the fixed-column CSV schema
/// `method,problem,params,d,N,R,mean,variance`.
pub fn write_csv<W: Write>(w: &mut W, records: &[ConvergenceRecord]) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for rec in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            rec.method,
            csv_field(&rec.problem),
            csv_field(&rec.params),
            rec.d,
            rec.n,
            rec.r,
            rec.mean,
            rec.variance
        )?;
    }
    Ok(())
}

fn split_csv_line(line: &str) -> Result<Vec<String>> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    current.push('"');
                } else {
                    quoted = false;
                }
            }
            '"' if current.is_empty() => quoted = true,
            ',' if !quoted => fields.push(std::mem::take(&mut current)),
            c => current.push(c),
        }
    }
    if quoted {
        return Err(Error::InvalidConfig(format!(
            "unterminated quote in CSV line '{line}'"
        )));
    }
    fields.push(current);
    Ok(fields)
}

/// Read records written by [`write_csv`].
pub fn read_csv<R: BufRead>(reader: R) -> Result<Vec<ConvergenceRecord>> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidConfig("empty CSV".into()))?
        .map_err(|e| Error::InvalidConfig(format!("CSV read failed: {e}")))?;
    if header.trim() != CSV_HEADER {
        return Err(Error::InvalidConfig(format!(
            "unexpected CSV header '{}'",
            header.trim()
        )));
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::InvalidConfig(format!("CSV read failed: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_csv_line(&line)?;
        if fields.len() != 8 {
            return Err(Error::InvalidConfig(format!(
                "expected 8 CSV fields, got {} in '{line}'",
                fields.len()
            )));
        }
        let parse_num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad {what} '{s}'")))
        };
        let parse_count = |s: &str, what: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("bad {what} '{s}'")))
        };
        records.push(ConvergenceRecord {
            method: fields[0].parse()?,
            problem: fields[1].clone(),
            params: fields[2].clone(),
            d: parse_count(&fields[3], "dimension")?,
            n: parse_count(&fields[4], "sample count")?,
            r: parse_count(&fields[5], "replication count")?,
            mean: parse_num(&fields[6], "mean")?,
            variance: parse_num(&fields[7], "variance")?,
        });
    }
    Ok(records)
}
