//! The sequential refinement loop: run a fixed number of stages, each on
//! a stratification one bisection finer than the last, then pool the
//! stage estimates by inverse-variance weighting.
//!
//! Stage `ℓ` runs on `ℓ` strata. The stratum and dimension to bisect
//! next are chosen from the fitted surrogates: the split maximizes
//! `p_S²·score_k(S)`, the stratum's squared probability times its
//! per-dimension Sobol score, so refinement chases the largest
//! contribution to the estimator's variance. Every stage is recorded in
//! a serializable trace as soon as it completes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    combine, optimal_weights, stage_estimate, EnsembleEstimate, StageEstimate,
};
use crate::gpc::total_degree_index_set;
use crate::models::Model;
use crate::sobol::{ScoreMode, MAX_DIM};
use crate::stratification::Stratification;

/// Parameters of one sequential run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dim: usize,
    /// Number of stages `L`; stage `ℓ` uses `ℓ` strata.
    pub stages: usize,
    /// Per-stratum sample budget.
    #[serde(default = "default_nbar")]
    pub nbar: usize,
    pub seed: u64,
    #[serde(default)]
    pub score_mode: ScoreMode,
    /// Threshold used for the effective dimensions reported per stratum.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Cardinality bound for the surrogate index set; defaults to the
    /// per-stratum budget.
    #[serde(default)]
    pub index_budget: Option<usize>,
    /// Embed fitted coefficients in the trace.
    #[serde(default)]
    pub dump_surrogates: bool,
}

fn default_nbar() -> usize {
    50
}

fn default_alpha() -> f64 {
    0.99
}

impl RunConfig {
    pub fn new(dim: usize, stages: usize, seed: u64) -> Self {
        RunConfig {
            dim,
            stages,
            nbar: default_nbar(),
            seed,
            score_mode: ScoreMode::default(),
            alpha: default_alpha(),
            index_budget: None,
            dump_surrogates: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(Error::InvalidConfig(format!(
                "dimension must lie in 1..={MAX_DIM}, got {}",
                self.dim
            )));
        }
        if self.stages == 0 {
            return Err(Error::InvalidConfig("at least one stage is required".into()));
        }
        if self.nbar < 2 {
            return Err(Error::InvalidConfig(format!(
                "per-stratum budget must be at least 2, got {}",
                self.nbar
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "effective-dimension threshold must lie in (0,1], got {}",
                self.alpha
            )));
        }
        if let Some(budget) = self.index_budget {
            if budget < 2 {
                return Err(Error::InvalidConfig(format!(
                    "index budget must be at least 2, got {budget}"
                )));
            }
        }
        Ok(())
    }

    /// Total model evaluations of a full run: `N̄·L(L+1)/2`.
    pub fn total_samples(&self) -> usize {
        self.nbar * self.stages * (self.stages + 1) / 2
    }
}

/// The split chosen at the end of a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementChoice {
    pub stratum_id: u64,
    pub dim: usize,
    /// True when every refinement score was zero and the split fell back
    /// to the largest-volume stratum along its longest edge.
    pub fallback: bool,
}

/// Pick the stratum and dimension to bisect: the maximizer of
/// `p_S²·score_k(S)`, ties resolved toward the lower stratum id, then
/// the lower dimension.
pub fn select_refinement(stage: &StageEstimate, mode: ScoreMode) -> RefinementChoice {
    let mut best: Option<(f64, u64, usize)> = None;
    for stats in stage.stats() {
        let p2 = stats.probability * stats.probability;
        for (k, score) in stats.sobol.scores(mode).into_iter().enumerate() {
            let value = p2 * score;
            if value <= 0.0 {
                continue;
            }
            let candidate = (value, stats.stratum_id, k);
            let better = match best {
                None => true,
                Some((bv, bid, bk)) => {
                    value > bv || (value == bv && (stats.stratum_id, k) < (bid, bk))
                }
            };
            if better {
                best = Some(candidate);
            }
        }
    }
    if let Some((_, stratum_id, dim)) = best {
        return RefinementChoice {
            stratum_id,
            dim,
            fallback: false,
        };
    }

    // Degenerate stage: no surrogate carries variance. Split the
    // largest-volume stratum (lowest id on ties) along its longest edge
    // (lowest dimension on ties).
    let target = stage
        .stratification()
        .strata()
        .iter()
        .max_by(|a, b| {
            a.rect
                .volume()
                .partial_cmp(&b.rect.volume())
                .expect("finite volumes")
                .then(b.id.cmp(&a.id))
        })
        .expect("non-empty stratification");
    let dim = (0..stage.stratification().dim())
        .max_by(|&a, &b| {
            target
                .rect
                .extent(a)
                .partial_cmp(&target.rect.extent(b))
                .expect("finite extents")
                .then(b.cmp(&a))
        })
        .expect("positive dimension");
    RefinementChoice {
        stratum_id: target.id,
        dim,
        fallback: true,
    }
}

/// Optional coefficient dump for downstream analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateDump {
    pub indices: Vec<Vec<u32>>,
    pub coefficients: Vec<f64>,
}

/// Per-stratum summary stored in the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRecord {
    pub id: u64,
    pub probability: f64,
    pub mean: f64,
    pub std_dev: f64,
    pub rank_deficient: bool,
    /// Surrogate variance and its split over dimension subsets
    /// (bitmask, contribution), ascending by mask.
    pub sobol_total: f64,
    pub sobol: Vec<(u64, f64)>,
    pub scores: Vec<f64>,
    /// Effective dimensions of the local surrogate at the configured
    /// threshold.
    pub d_sup: usize,
    pub d_tr: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub surrogate: Option<SurrogateDump>,
}

/// Everything recorded about one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: u64,
    pub stratification: Stratification,
    pub mean: f64,
    pub variance: f64,
    pub samples: usize,
    /// The split applied after this stage; absent on the final stage.
    pub split: Option<RefinementChoice>,
    pub strata: Vec<StratumRecord>,
}

/// Full run record: configuration, per-stage records, final weighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub config: RunConfig,
    pub model: String,
    pub stages: Vec<StageRecord>,
    pub weights: Vec<f64>,
    pub estimate: f64,
    pub variance: f64,
    pub total_samples: usize,
}

/// A completed run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub ensemble: EnsembleEstimate,
    pub trace: RunTrace,
}

fn stage_record(stage: &StageEstimate, split: Option<RefinementChoice>, config: &RunConfig) -> StageRecord {
    let strata = stage
        .stats()
        .iter()
        .map(|s| StratumRecord {
            id: s.stratum_id,
            probability: s.probability,
            mean: s.mean,
            std_dev: s.std_dev,
            rank_deficient: s.surrogate.rank_deficient(),
            sobol_total: s.sobol.total_variance(),
            sobol: s.sobol.contributions().collect(),
            scores: s.sobol.scores(config.score_mode),
            d_sup: s
                .sobol
                .effective_dim_superposition(config.alpha)
                .expect("threshold validated"),
            d_tr: s
                .sobol
                .effective_dim_truncation(config.alpha)
                .expect("threshold validated"),
            surrogate: config.dump_surrogates.then(|| SurrogateDump {
                indices: s.surrogate.index_set().indices().to_vec(),
                coefficients: s.surrogate.coefficients().to_vec(),
            }),
        })
        .collect();
    StageRecord {
        stage: stage.stage(),
        stratification: stage.stratification().clone(),
        mean: stage.mean(),
        variance: stage.variance(),
        samples: stage.samples(),
        split,
        strata,
    }
}

/// Run all stages, invoking `on_stage` as each stage completes, so
/// callers can persist partial progress; a model failure aborts the run
/// after the observer has seen every completed stage.
pub fn run_observed(
    config: &RunConfig,
    model: &dyn Model,
    mut on_stage: impl FnMut(&StageRecord) -> Result<()>,
) -> Result<RunOutput> {
    config.validate()?;
    if model.dim() != config.dim {
        return Err(Error::DimensionMismatch {
            expected: config.dim,
            got: model.dim(),
        });
    }
    let index_set = total_degree_index_set(config.dim, config.index_budget.unwrap_or(config.nbar))?;

    let mut strat = Stratification::trivial(config.dim);
    let mut records: Vec<StageRecord> = Vec::with_capacity(config.stages);
    let mut means = Vec::with_capacity(config.stages);
    let mut variances = Vec::with_capacity(config.stages);
    for ell in 1..=config.stages as u64 {
        let stage = stage_estimate(&strat, model, config.nbar, ell, config.seed, &index_set)?;
        let split = if (ell as usize) < config.stages {
            Some(select_refinement(&stage, config.score_mode))
        } else {
            None
        };
        means.push(stage.mean());
        variances.push(stage.variance());
        let record = stage_record(&stage, split, config);
        on_stage(&record)?;
        records.push(record);
        if let Some(choice) = split {
            strat = strat.bisect(choice.stratum_id, choice.dim)?;
        }
    }

    let weights = optimal_weights(&variances)?;
    let ensemble = combine(&means, &variances, &weights)?;
    let total_samples = records.iter().map(|r| r.samples).sum();
    let trace = RunTrace {
        config: config.clone(),
        model: model.label(),
        stages: records,
        weights: ensemble.weights.clone(),
        estimate: ensemble.value,
        variance: ensemble.variance,
        total_samples,
    };
    Ok(RunOutput { ensemble, trace })
}

/// Run all stages and pool the results.
pub fn run_sequential(config: &RunConfig, model: &dyn Model) -> Result<RunOutput> {
    run_observed(config, model, |_| Ok(()))
}
