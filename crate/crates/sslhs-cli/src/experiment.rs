//! Experiment configuration: a TOML file describing the model and run,
//! every key of which can be overridden by a command-line flag, plus the
//! `SSLHS_SEED` environment fallback for the seed.

use std::path::PathBuf;

use serde::Deserialize;

use sslhs::driver::RunConfig;
use sslhs::harness::Method;
use sslhs::models::ModelSpec;
use sslhs::sobol::ScoreMode;
use sslhs::{Error, Result};

/// On-disk experiment description. Unknown keys are rejected so typos
/// fail before any sampling.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub study: StudySection,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub stages: Option<usize>,
    pub nbar: Option<usize>,
    pub seed: Option<u64>,
    pub score_mode: Option<ScoreMode>,
    pub alpha: Option<f64>,
    pub index_budget: Option<usize>,
    pub dump_surrogates: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub reps: Option<usize>,
    pub schedule: Option<Vec<usize>>,
    pub methods: Option<Vec<Method>>,
}

impl ExperimentFile {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

/// Model-selection flags; `problem` present means the model is built
/// from flags alone, otherwise the flags override the file's model.
#[derive(Debug, Default, Clone)]
pub struct ModelFlags {
    pub problem: Option<String>,
    pub d: Option<usize>,
    pub dprime: Option<usize>,
    pub a: Option<f64>,
    pub delta: Option<f64>,
    pub radius: Option<f64>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub scale: Option<f64>,
    pub blackbox_cmd: Option<String>,
}

/// All flag-supplied overrides.
#[derive(Debug, Default, Clone)]
pub struct Flags {
    pub model: ModelFlags,
    pub stages: Option<usize>,
    pub nbar: Option<usize>,
    pub seed: Option<u64>,
    pub score_mode: Option<ScoreMode>,
    pub alpha: Option<f64>,
    pub index_budget: Option<usize>,
    pub dump_surrogates: bool,
    pub reps: Option<usize>,
    pub schedule: Option<Vec<usize>>,
    pub methods: Option<Vec<Method>>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Fully resolved experiment, ready to execute.
#[derive(Debug)]
pub struct Resolved {
    pub spec: ModelSpec,
    pub config: RunConfig,
    pub reps: usize,
    pub schedule: Vec<usize>,
    pub methods: Vec<Method>,
    pub out: PathBuf,
    pub workers: Option<usize>,
}

fn split_command(cmd: &str) -> Result<Vec<String>> {
    let parts: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
    if parts.is_empty() {
        return Err(Error::InvalidConfig("empty black-box command".into()));
    }
    Ok(parts)
}

fn reject(flag: &str, problem: &str) -> Error {
    Error::InvalidConfig(format!("--{flag} does not apply to problem {problem}"))
}

fn build_model_from_flags(f: &ModelFlags) -> Result<ModelSpec> {
    let problem = f.problem.as_deref().expect("checked by caller");
    match problem {
        "p1" => {
            if let Some(d) = f.d {
                if d != 2 {
                    return Err(Error::InvalidConfig(format!(
                        "p1 is two-dimensional, got --d {d}"
                    )));
                }
            }
            if f.dprime.is_some() {
                return Err(reject("dprime", "p1"));
            }
            if f.radius.is_some() || f.r1.is_some() || f.r2.is_some() {
                return Err(reject("radius", "p1"));
            }
            if f.scale.is_some() {
                return Err(reject("scale", "p1"));
            }
            Ok(ModelSpec::P1 {
                a: f.a.unwrap_or(0.3),
                delta: f.delta.unwrap_or(1.0),
            })
        }
        "p2" => {
            if f.a.is_some() || f.delta.is_some() {
                return Err(reject("delta", "p2"));
            }
            if f.r1.is_some() || f.r2.is_some() {
                return Err(reject("r1", "p2"));
            }
            let dprime = f.dprime.unwrap_or(2);
            Ok(ModelSpec::P2 {
                dprime,
                radius: f.radius.unwrap_or(0.4),
                scale: f.scale.unwrap_or(1.0),
                dim: f.d.unwrap_or(dprime),
            })
        }
        "p3" => {
            if f.a.is_some() || f.delta.is_some() {
                return Err(reject("delta", "p3"));
            }
            let dprime = f.dprime.unwrap_or(2);
            let radius = f.radius.unwrap_or(0.4);
            Ok(ModelSpec::P3 {
                dprime,
                r1: f.r1.unwrap_or(radius),
                r2: f.r2.unwrap_or(radius),
                scale: f.scale.unwrap_or(1.0),
                dim: f.d.unwrap_or(2 * dprime),
            })
        }
        "blackbox" => {
            let cmd = f.blackbox_cmd.as_deref().ok_or_else(|| {
                Error::InvalidConfig("blackbox requires --blackbox-cmd".into())
            })?;
            let dim = f
                .d
                .ok_or_else(|| Error::InvalidConfig("blackbox requires --d".into()))?;
            Ok(ModelSpec::Blackbox {
                command: split_command(cmd)?,
                dim,
            })
        }
        other => Err(Error::InvalidConfig(format!(
            "unknown problem '{other}' (expected p1, p2, p3, or blackbox)"
        ))),
    }
}

fn apply_model_overrides(spec: ModelSpec, f: &ModelFlags) -> Result<ModelSpec> {
    match spec {
        ModelSpec::P1 { mut a, mut delta } => {
            if let Some(d) = f.d {
                if d != 2 {
                    return Err(Error::InvalidConfig(format!(
                        "p1 is two-dimensional, got --d {d}"
                    )));
                }
            }
            if f.dprime.is_some() || f.radius.is_some() || f.scale.is_some() {
                return Err(reject("dprime/radius/scale", "p1"));
            }
            if let Some(v) = f.a {
                a = v;
            }
            if let Some(v) = f.delta {
                delta = v;
            }
            Ok(ModelSpec::P1 { a, delta })
        }
        ModelSpec::P2 {
            mut dprime,
            mut radius,
            mut scale,
            mut dim,
        } => {
            if f.a.is_some() || f.delta.is_some() || f.r1.is_some() || f.r2.is_some() {
                return Err(reject("delta/r1/r2", "p2"));
            }
            if let Some(v) = f.dprime {
                dprime = v;
            }
            if let Some(v) = f.radius {
                radius = v;
            }
            if let Some(v) = f.scale {
                scale = v;
            }
            if let Some(v) = f.d {
                dim = v;
            }
            Ok(ModelSpec::P2 {
                dprime,
                radius,
                scale,
                dim,
            })
        }
        ModelSpec::P3 {
            mut dprime,
            mut r1,
            mut r2,
            mut scale,
            mut dim,
        } => {
            if f.a.is_some() || f.delta.is_some() {
                return Err(reject("delta", "p3"));
            }
            if let Some(v) = f.dprime {
                dprime = v;
            }
            if let Some(v) = f.radius {
                r1 = v;
                r2 = v;
            }
            if let Some(v) = f.r1 {
                r1 = v;
            }
            if let Some(v) = f.r2 {
                r2 = v;
            }
            if let Some(v) = f.scale {
                scale = v;
            }
            if let Some(v) = f.d {
                dim = v;
            }
            Ok(ModelSpec::P3 {
                dprime,
                r1,
                r2,
                scale,
                dim,
            })
        }
        ModelSpec::Blackbox {
            mut command,
            mut dim,
        } => {
            if let Some(cmd) = f.blackbox_cmd.as_deref() {
                command = split_command(cmd)?;
            }
            if let Some(v) = f.d {
                dim = v;
            }
            Ok(ModelSpec::Blackbox { command, dim })
        }
    }
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var("SSLHS_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Error::InvalidConfig(format!("SSLHS_SEED is not a u64: '{text}'"))),
        Err(_) => Ok(None),
    }
}

/// Merge file, flags, and environment into a validated experiment.
/// Precedence: flag, then file, then environment (seed only), then
/// defaults.
pub fn resolve(file: Option<ExperimentFile>, flags: &Flags) -> Result<Resolved> {
    let file = file.unwrap_or_default();

    let spec = if flags.model.problem.is_some() {
        build_model_from_flags(&flags.model)?
    } else if let Some(model) = file.model {
        apply_model_overrides(model, &flags.model)?
    } else {
        return Err(Error::InvalidConfig(
            "no model: pass --problem or a config file with a [model] table".into(),
        ));
    };
    spec.validate()?;

    let seed = match flags.seed.or(file.run.seed) {
        Some(s) => s,
        None => seed_from_env()?.unwrap_or(0),
    };

    let mut config = RunConfig::new(spec.dim(), flags.stages.or(file.run.stages).unwrap_or(6), seed);
    if let Some(nbar) = flags.nbar.or(file.run.nbar) {
        config.nbar = nbar;
    }
    if let Some(mode) = flags.score_mode.or(file.run.score_mode) {
        config.score_mode = mode;
    }
    if let Some(alpha) = flags.alpha.or(file.run.alpha) {
        config.alpha = alpha;
    }
    if let Some(budget) = flags.index_budget.or(file.run.index_budget) {
        config.index_budget = Some(budget);
    }
    config.dump_surrogates = flags.dump_surrogates || file.run.dump_surrogates.unwrap_or(false);
    config.validate()?;

    let reps = flags.reps.or(file.study.reps).unwrap_or(100);
    if reps < 2 {
        return Err(Error::InvalidConfig(format!(
            "replication count must be at least 2, got {reps}"
        )));
    }
    let schedule = flags
        .schedule
        .clone()
        .or(file.study.schedule)
        .unwrap_or_else(|| vec![6, 20, 63]);
    if schedule.is_empty() || schedule.iter().any(|&l| l == 0) {
        return Err(Error::InvalidConfig(
            "schedule must list positive stage counts".into(),
        ));
    }
    let methods = flags
        .methods
        .clone()
        .or(file.study.methods)
        .unwrap_or_else(|| vec![Method::SsLhsGpc, Method::Lhs, Method::Smc]);
    if methods.is_empty() {
        return Err(Error::InvalidConfig("no methods selected".into()));
    }

    Ok(Resolved {
        spec,
        config,
        reps,
        schedule,
        methods,
        out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from(".")),
        workers: flags.workers.or(file.workers),
    })
}
