//! Sobol variance decomposition read off polynomial chaos coefficients,
//! effective dimensions, and the per-dimension scores that steer
//! refinement.
//!
//! With an orthonormal basis the variance attributed to a subset `T` of
//! dimensions is the sum of squared coefficients whose multi-index is
//! supported exactly on `T`. Subsets are bitmasks over at most 63
//! dimensions; absent entries mean zero contribution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpc::GpcSurrogate;

/// Largest dimension representable by the subset bitmasks.
pub const MAX_DIM: usize = 63;

/// How a stratum's variance splits across subsets of input dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolDecomposition {
    stratum_id: u64,
    dim: usize,
    total_variance: f64,
    contributions: BTreeMap<u64, f64>,
}

impl SobolDecomposition {
    /// Build from explicit (subset bitmask, variance) pairs. The total is
    /// the sum of the stored contributions.
    pub fn from_contributions(
        stratum_id: u64,
        dim: usize,
        entries: impl IntoIterator<Item = (u64, f64)>,
    ) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidConfig(format!(
                "sobol decomposition supports 1..={MAX_DIM} dimensions, got {dim}"
            )));
        }
        let mut contributions = BTreeMap::new();
        for (mask, sigma2) in entries {
            if mask == 0 || mask >= 1u64 << dim {
                return Err(Error::InvalidConfig(format!(
                    "subset mask {mask:#b} out of range for dimension {dim}"
                )));
            }
            if !(sigma2 >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "negative or non-finite contribution {sigma2} for mask {mask:#b}"
                )));
            }
            if sigma2 > 0.0 {
                *contributions.entry(mask).or_insert(0.0) += sigma2;
            }
        }
        let total_variance = contributions.values().sum();
        Ok(SobolDecomposition {
            stratum_id,
            dim,
            total_variance,
            contributions,
        })
    }

    pub fn stratum_id(&self) -> u64 {
        self.stratum_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Surrogate variance: the sum of all stored contributions.
    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    /// Variance attributed to exactly the subset encoded by `mask`
    /// (bit `k` set means dimension `k` participates).
    pub fn contribution(&self, mask: u64) -> f64 {
        self.contributions.get(&mask).copied().unwrap_or(0.0)
    }

    /// All stored (mask, variance) pairs in ascending mask order.
    pub fn contributions(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.contributions.iter().map(|(&m, &s)| (m, s))
    }

    /// Per-dimension refinement scores: the unnormalized total Sobol
    /// index `Σ_{T ∋ k} σ²_T`, so interaction variance is attributed to
    /// every participating dimension.
    pub fn total_scores(&self) -> Vec<f64> {
        let mut scores = vec![0.0; self.dim];
        for (&mask, &sigma2) in &self.contributions {
            let mut bits = mask;
            while bits != 0 {
                let k = bits.trailing_zeros() as usize;
                scores[k] += sigma2;
                bits &= bits - 1;
            }
        }
        scores
    }

    /// Per-dimension first-order scores: only the singleton subsets.
    pub fn first_order_scores(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|k| self.contribution(1u64 << k))
            .collect()
    }

    /// Smallest `s` such that subsets of at most `s` dimensions carry at
    /// least `alpha` of the total variance; 0 when the variance is zero.
    pub fn effective_dim_superposition(&self, alpha: f64) -> Result<usize> {
        check_alpha(alpha)?;
        if self.total_variance == 0.0 {
            return Ok(0);
        }
        let mut by_order = vec![0.0; self.dim + 1];
        for (&mask, &sigma2) in &self.contributions {
            by_order[mask.count_ones() as usize] += sigma2;
        }
        let target = alpha * self.total_variance;
        let mut cum = 0.0;
        for (s, &mass) in by_order.iter().enumerate().skip(1) {
            cum += mass;
            if cum >= target {
                return Ok(s);
            }
        }
        Ok(self.dim)
    }

    /// Smallest `t` such that subsets inside the leading `t` dimensions
    /// carry at least `alpha` of the total variance; 0 when the variance
    /// is zero.
    pub fn effective_dim_truncation(&self, alpha: f64) -> Result<usize> {
        check_alpha(alpha)?;
        if self.total_variance == 0.0 {
            return Ok(0);
        }
        let mut by_highest = vec![0.0; self.dim + 1];
        for (&mask, &sigma2) in &self.contributions {
            let highest = 64 - mask.leading_zeros() as usize;
            by_highest[highest] += sigma2;
        }
        let target = alpha * self.total_variance;
        let mut cum = 0.0;
        for (t, &mass) in by_highest.iter().enumerate().skip(1) {
            cum += mass;
            if cum >= target {
                return Ok(t);
            }
        }
        Ok(self.dim)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "variance threshold must lie in (0,1], got {alpha}"
        )));
    }
    Ok(())
}

/// Which per-dimension score steers refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    #[default]
    Total,
    FirstOrder,
}

impl std::fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreMode::Total => "total",
            ScoreMode::FirstOrder => "first-order",
        })
    }
}

impl SobolDecomposition {
    pub fn scores(&self, mode: ScoreMode) -> Vec<f64> {
        match mode {
            ScoreMode::Total => self.total_scores(),
            ScoreMode::FirstOrder => self.first_order_scores(),
        }
    }
}

/// Read the decomposition off a surrogate: each non-constant coefficient
/// contributes its square to the subset of dimensions its multi-index
/// touches.
pub fn sobol_from_gpc(surrogate: &GpcSurrogate) -> SobolDecomposition {
    let dim = surrogate.index_set().dim();
    assert!(
        dim <= MAX_DIM,
        "surrogate dimension {dim} exceeds bitmask capacity"
    );
    let mut contributions: BTreeMap<u64, f64> = BTreeMap::new();
    for (m, &c) in surrogate
        .index_set()
        .indices()
        .iter()
        .zip(surrogate.coefficients())
    {
        let mut mask = 0u64;
        for (k, &mk) in m.iter().enumerate() {
            if mk > 0 {
                mask |= 1 << k;
            }
        }
        if mask != 0 && c != 0.0 {
            *contributions.entry(mask).or_insert(0.0) += c * c;
        }
    }
    let total_variance = contributions.values().sum();
    SobolDecomposition {
        stratum_id: surrogate.stratum_id(),
        dim,
        total_variance,
        contributions,
    }
}
