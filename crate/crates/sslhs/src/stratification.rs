//! Hyperrectangular strata over the unit hypercube.
//!
//! A stratification is a disjoint cover of `[0,1]^d` by axis-aligned
//! boxes. Strata are half-open `[lower, upper)` in every dimension, closed
//! at the global boundary 1, so the cover is an exact partition: every
//! point of the cube belongs to exactly one stratum. Refinement only ever
//! bisects a single stratum at the midpoint of one of its edges, which
//! keeps total volume exactly conserved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the unit-total-volume check.
pub const VOLUME_TOLERANCE: f64 = 1e-12;

/// An axis-aligned box inside `[0,1]^d` with strictly positive extent in
/// every dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRectangle {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl HyperRectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (k, (&lo, &up)) in lower.iter().zip(&upper).enumerate() {
            let in_cube = (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&up);
            if !in_cube || !(lo < up) {
                return Err(Error::InvalidBounds {
                    dim: k,
                    lower: lo,
                    upper: up,
                });
            }
        }
        Ok(HyperRectangle { lower, upper })
    }

    /// The whole unit hypercube `[0,1]^d`.
    pub fn unit(dim: usize) -> Self {
        HyperRectangle {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Extent `upper[k] - lower[k]` of the box along dimension `k`.
    pub fn extent(&self, k: usize) -> f64 {
        self.upper[k] - self.lower[k]
    }

    /// Lebesgue volume; equals the probability mass of the box under the
    /// uniform distribution on the unit cube.
    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, up)| up - lo)
            .product()
    }

    /// Membership under the half-open convention: `lower[k] <= y < upper[k]`,
    /// with the upper bound inclusive where it coincides with the domain
    /// boundary 1.
    pub fn contains(&self, point: &[f64]) -> Result<bool> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        Ok(self.lower.iter().zip(&self.upper).zip(point).all(
            |((&lo, &up), &y)| {
                if up == 1.0 {
                    lo <= y && y <= up
                } else {
                    lo <= y && y < up
                }
            },
        ))
    }

    /// True if the interiors of the two boxes are disjoint.
    pub fn interior_disjoint(&self, other: &HyperRectangle) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(other.lower.iter().zip(&other.upper))
            .any(|((&lo_a, &up_a), (&lo_b, &up_b))| up_a <= lo_b || up_b <= lo_a)
    }
}

/// One member of a stratification, with its refinement lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub id: u64,
    pub parent: Option<u64>,
    #[serde(flatten)]
    pub rect: HyperRectangle,
}

/// A disjoint cover of `[0,1]^d` by hyperrectangles. Immutable: `bisect`
/// returns a new value.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratification {
    dim: usize,
    strata: Vec<Stratum>,
    next_id: u64,
}

/// A defect reported by [`Stratification::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    /// Two strata with overlapping interiors.
    Overlap { first: u64, second: u64 },
    /// Total volume differs from 1 by more than [`VOLUME_TOLERANCE`].
    VolumeMismatch { total: f64 },
    /// Duplicate stratum identifier.
    DuplicateId(u64),
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValidationIssue::Overlap { first, second } => {
                write!(f, "strata {first} and {second} have overlapping interiors")
            }
            ValidationIssue::VolumeMismatch { total } => {
                write!(f, "stratum volumes sum to {total}, expected 1")
            }
            ValidationIssue::DuplicateId(id) => write!(f, "duplicate stratum id {id}"),
        }
    }
}

impl Stratification {
    /// The trivial stratification: the whole domain as a single stratum
    /// with id 0.
    pub fn trivial(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Stratification {
            dim,
            strata: vec![Stratum {
                id: 0,
                parent: None,
                rect: HyperRectangle::unit(dim),
            }],
            next_id: 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn get(&self, id: u64) -> Option<&Stratum> {
        self.strata.iter().find(|s| s.id == id)
    }

    /// Replace the named stratum by its two halves, split at the midpoint
    /// of its extent along `dim`. Children receive fresh ids and record
    /// the parent id. All other strata are untouched.
    pub fn bisect(&self, stratum_id: u64, dim: usize) -> Result<Stratification> {
        if dim >= self.dim {
            return Err(Error::DimensionOutOfRange {
                dim,
                max: self.dim - 1,
            });
        }
        let pos = self
            .strata
            .iter()
            .position(|s| s.id == stratum_id)
            .ok_or(Error::UnknownStratum(stratum_id))?;
        let parent = &self.strata[pos];
        let lo = parent.rect.lower()[dim];
        let up = parent.rect.upper()[dim];
        let mid = 0.5 * (lo + up);
        if !(lo < mid && mid < up) {
            return Err(Error::InvalidBounds {
                dim,
                lower: lo,
                upper: up,
            });
        }

        let mut left_upper = parent.rect.upper().to_vec();
        left_upper[dim] = mid;
        let mut right_lower = parent.rect.lower().to_vec();
        right_lower[dim] = mid;

        let mut strata = self.strata.clone();
        strata[pos] = Stratum {
            id: self.next_id,
            parent: Some(stratum_id),
            rect: HyperRectangle::new(parent.rect.lower().to_vec(), left_upper)?,
        };
        strata.insert(
            pos + 1,
            Stratum {
                id: self.next_id + 1,
                parent: Some(stratum_id),
                rect: HyperRectangle::new(right_lower, parent.rect.upper().to_vec())?,
            },
        );
        Ok(Stratification {
            dim: self.dim,
            strata,
            next_id: self.next_id + 2,
        })
    }

    /// Check pairwise interior-disjointness, unit total volume and id
    /// uniqueness, reporting every defect found.
    pub fn validate(&self) -> Vec<ValidationIssue> {
        let mut issues = Vec::new();
        let mut ids: Vec<u64> = self.strata.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        for w in ids.windows(2) {
            if w[0] == w[1] {
                issues.push(ValidationIssue::DuplicateId(w[0]));
            }
        }
        for i in 0..self.strata.len() {
            for j in i + 1..self.strata.len() {
                if !self.strata[i].rect.interior_disjoint(&self.strata[j].rect) {
                    issues.push(ValidationIssue::Overlap {
                        first: self.strata[i].id,
                        second: self.strata[j].id,
                    });
                }
            }
        }
        let total: f64 = self.strata.iter().map(|s| s.rect.volume()).sum();
        if (total - 1.0).abs() > VOLUME_TOLERANCE {
            issues.push(ValidationIssue::VolumeMismatch { total });
        }
        issues
    }

    /// Id of the stratum containing `point`, under the half-open
    /// membership convention.
    pub fn locate(&self, point: &[f64]) -> Result<Option<u64>> {
        for s in &self.strata {
            if s.rect.contains(point)? {
                return Ok(Some(s.id));
            }
        }
        Ok(None)
    }

    /// Build a stratification from parts, e.g. when deserializing a trace.
    pub fn from_strata(dim: usize, strata: Vec<Stratum>) -> Result<Self> {
        for s in &strata {
            if s.rect.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.rect.dim(),
                });
            }
        }
        let next_id = strata.iter().map(|s| s.id + 1).max().unwrap_or(0);
        Ok(Stratification {
            dim,
            strata,
            next_id,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct StratificationRepr {
    d: usize,
    strata: Vec<Stratum>,
}

impl Serialize for Stratification {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        StratificationRepr {
            d: self.dim,
            strata: self.strata.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Stratification {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = StratificationRepr::deserialize(deserializer)?;
        Stratification::from_strata(repr.d, repr.strata).map_err(serde::de::Error::custom)
    }
}
