//! Stage estimators over a stratification, their variance estimates,
//! plain Monte Carlo and Latin Hypercube baselines, and inverse-variance
//! ensemble weighting.
//!
//! A stage estimator draws one LHS design per stratum, averages the model
//! there, and combines the per-stratum means with the stratum
//! probabilities. Stages from successive stratifications are then pooled
//! into a single estimate with weights proportional to inverse estimated
//! variance, which minimizes the variance of the pooled estimator over
//! all convex weightings.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gpc::{fit_gpc, GpcSurrogate, MultiIndexSet};
use crate::models::Model;
use crate::sampling::{lhs_sample, uniform_sample, RngStream};
use crate::sobol::{sobol_from_gpc, SobolDecomposition};
use crate::stratification::{HyperRectangle, Stratification};

/// Everything measured inside one stratum during a stage.
#[derive(Debug, Clone)]
pub struct StratumStats {
    pub stratum_id: u64,
    /// Probability mass of the stratum, `p_S` = its volume.
    pub probability: f64,
    /// Sample mean of the model over the stratum's LHS batch.
    pub mean: f64,
    /// Bessel-corrected sample standard deviation of those values.
    pub std_dev: f64,
    pub n: usize,
    pub surrogate: GpcSurrogate,
    pub sobol: SobolDecomposition,
}

/// One stage: a stratification, its per-stratum statistics, and the
/// resulting estimate with variance.
#[derive(Debug, Clone)]
pub struct StageEstimate {
    stage: u64,
    stratification: Stratification,
    stats: Vec<StratumStats>,
    mean: f64,
    variance: f64,
    samples: usize,
}

impl StageEstimate {
    /// Assemble a stage from per-stratum statistics, deriving the stage
    /// mean `Σ p_S·mean_S` and variance. Every stratum must hold exactly
    /// `nbar` samples.
    pub fn from_stats(
        stage: u64,
        stratification: Stratification,
        stats: Vec<StratumStats>,
        nbar: usize,
    ) -> Result<Self> {
        if stats.is_empty() {
            return Err(Error::InvalidEnsemble("stage has no strata".into()));
        }
        if stats.len() != stratification.len() {
            return Err(Error::DimensionMismatch {
                expected: stratification.len(),
                got: stats.len(),
            });
        }
        for s in &stats {
            if s.n != nbar {
                return Err(Error::InvalidConfig(format!(
                    "stratum {} holds {} samples, expected {nbar}",
                    s.stratum_id, s.n
                )));
            }
        }
        let mean = stats.iter().map(|s| s.probability * s.mean).sum();
        let pairs: Vec<(f64, f64)> = stats.iter().map(|s| (s.probability, s.std_dev)).collect();
        let variance = stage_variance(&pairs, nbar);
        let samples = nbar * stats.len();
        Ok(StageEstimate {
            stage,
            stratification,
            stats,
            mean,
            variance,
            samples,
        })
    }

    pub fn stage(&self) -> u64 {
        self.stage
    }

    pub fn stratification(&self) -> &Stratification {
        &self.stratification
    }

    pub fn stats(&self) -> &[StratumStats] {
        &self.stats
    }

    /// The stage estimate `μ̂_ℓ`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// The estimated estimator variance `v_ℓ`.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn samples(&self) -> usize {
        self.samples
    }
}

/// Estimator variance of a stage from `(p_S, σ̂_S)` pairs under the
/// constant per-stratum allocation: `(1/N̄)·Σ_S p_S²·σ̂_S²`.
pub fn stage_variance(per_stratum: &[(f64, f64)], nbar: usize) -> f64 {
    per_stratum
        .iter()
        .map(|&(p, sd)| p * p * sd * sd)
        .sum::<f64>()
        / nbar as f64
}

/// Run one stage over `strat`: per stratum, an LHS batch of `nbar` model
/// evaluations from the stream keyed by `(master_seed, stage, stratum)`,
/// its mean and standard deviation, a fitted surrogate, and its Sobol
/// decomposition. Strata are processed in parallel; results are reduced
/// in stratification order, so the outcome is independent of thread
/// scheduling.
pub fn stage_estimate(
    strat: &Stratification,
    model: &dyn Model,
    nbar: usize,
    stage: u64,
    master_seed: u64,
    index_set: &MultiIndexSet,
) -> Result<StageEstimate> {
    if nbar < 2 {
        return Err(Error::InvalidConfig(format!(
            "per-stratum budget must be at least 2, got {nbar}"
        )));
    }
    if model.dim() != strat.dim() {
        return Err(Error::DimensionMismatch {
            expected: strat.dim(),
            got: model.dim(),
        });
    }
    if index_set.len() >= nbar {
        return Err(Error::InvalidConfig(format!(
            "index set with {} entries cannot be fit from {nbar} samples",
            index_set.len()
        )));
    }

    let stats: Vec<StratumStats> = strat
        .strata()
        .par_iter()
        .map(|s| -> Result<StratumStats> {
            let mut stream = RngStream::derive(master_seed, stage, s.id);
            let batch = lhs_sample(&s.rect, nbar, &mut stream)?;
            let mut values = Vec::with_capacity(nbar);
            for point in batch.iter_points() {
                let value = model.eval(point)?;
                if !value.is_finite() {
                    return Err(Error::ModelFailure {
                        point: point.to_vec(),
                        detail: format!("model returned non-finite value {value}"),
                    });
                }
                values.push(value);
            }
            let (mean, std_dev) = mean_and_std(&values);
            let surrogate = fit_gpc(&batch, &values, &s.rect, index_set)?;
            let sobol = sobol_from_gpc(&surrogate);
            Ok(StratumStats {
                stratum_id: s.id,
                probability: s.rect.volume(),
                mean,
                std_dev,
                n: nbar,
                surrogate,
                sobol,
            })
        })
        .collect::<Result<_>>()?;

    StageEstimate::from_stats(stage, strat.clone(), stats, nbar)
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// The pooled estimator over all stages.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEstimate {
    pub weights: Vec<f64>,
    pub stage_means: Vec<f64>,
    pub stage_variances: Vec<f64>,
    /// Weighted value `Σ α_ℓ μ̂_ℓ`.
    pub value: f64,
    /// `1/Σ(1/v_ℓ)`, or 0 when a zero-variance stage is selected.
    pub variance: f64,
}

/// Variance-minimizing convex weights: proportional to `1/v_ℓ`. A stage
/// with zero estimated variance takes all the weight; with several, the
/// latest (finest stratification) wins.
pub fn optimal_weights(variances: &[f64]) -> Result<Vec<f64>> {
    if variances.is_empty() {
        return Err(Error::InvalidEnsemble("no stage variances given".into()));
    }
    for &v in variances {
        if !(v >= 0.0) {
            return Err(Error::InvalidEnsemble(format!(
                "stage variance must be non-negative and finite, got {v}"
            )));
        }
    }
    let mut weights = vec![0.0; variances.len()];
    if let Some(k) = variances.iter().rposition(|&v| v == 0.0) {
        weights[k] = 1.0;
        return Ok(weights);
    }
    let total: f64 = variances.iter().map(|v| 1.0 / v).sum();
    for (w, &v) in weights.iter_mut().zip(variances) {
        *w = 1.0 / v / total;
    }
    Ok(weights)
}

/// Pool stage means with the given convex weights.
pub fn combine(means: &[f64], variances: &[f64], weights: &[f64]) -> Result<EnsembleEstimate> {
    if means.len() != variances.len() || means.len() != weights.len() {
        return Err(Error::InvalidEnsemble(format!(
            "length mismatch: {} means, {} variances, {} weights",
            means.len(),
            variances.len(),
            weights.len()
        )));
    }
    if means.is_empty() {
        return Err(Error::InvalidEnsemble("no stages to combine".into()));
    }
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidEnsemble(format!(
            "weights must be non-negative and sum to 1, got sum {sum}"
        )));
    }
    let value = means.iter().zip(weights).map(|(m, w)| m * w).sum();
    let variance = if variances.iter().any(|&v| v == 0.0) {
        0.0
    } else {
        1.0 / variances.iter().map(|v| 1.0 / v).sum::<f64>()
    };
    Ok(EnsembleEstimate {
        weights: weights.to_vec(),
        stage_means: means.to_vec(),
        stage_variances: variances.to_vec(),
        value,
        variance,
    })
}

/// Plain Monte Carlo baseline on the unit cube: the mean of `n` i.i.d.
/// evaluations, plus the usual variance proxy `σ̂²/n`.
pub fn smc_estimate(model: &dyn Model, n: usize, stream: &mut RngStream) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "plain Monte Carlo needs at least 2 samples, got {n}"
        )));
    }
    let rect = HyperRectangle::unit(model.dim());
    let batch = uniform_sample(&rect, n, stream)?;
    let values = eval_batch(model, batch.iter_points())?;
    let (mean, std_dev) = mean_and_std(&values);
    Ok((mean, std_dev * std_dev / n as f64))
}

/// Latin Hypercube baseline on the unit cube: the mean over one size-`n`
/// design.
pub fn lhs_estimate(model: &dyn Model, n: usize, stream: &mut RngStream) -> Result<f64> {
    let rect = HyperRectangle::unit(model.dim());
    let batch = lhs_sample(&rect, n, stream)?;
    let values = eval_batch(model, batch.iter_points())?;
    Ok(values.iter().sum::<f64>() / n as f64)
}

fn eval_batch<'a>(
    model: &dyn Model,
    points: impl Iterator<Item = &'a [f64]>,
) -> Result<Vec<f64>> {
    points
        .map(|p| {
            let value = model.eval(p)?;
            if !value.is_finite() {
                return Err(Error::ModelFailure {
                    point: p.to_vec(),
                    detail: format!("model returned non-finite value {value}"),
                });
            }
            Ok(value)
        })
        .collect()
}
