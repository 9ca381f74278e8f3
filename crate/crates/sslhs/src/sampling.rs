//! Seedable random streams, uniform sampling and Latin Hypercube Sampling
//! restricted to a hyperrectangle.
//!
//! Streams are derived from a 64-bit master seed plus (stage, stratum)
//! tags, so every stratum of every stage owns an independent, reproducible
//! sequence regardless of evaluation order. The generator is ChaCha8,
//! which is platform-independent: the same key yields the same draws on
//! any target.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stratification::HyperRectangle;

/// Domain separation constant folded into every stream key, so streams
/// from this crate never collide with other ChaCha users of the same seed.
const DOMAIN_TAG: u64 = 0x534c_4853_5f76_3031;

/// A reproducible random stream tied to a (master seed, stage, stratum)
/// key.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: [u64; 4],
    rng: ChaCha8Rng,
}

impl RngStream {
    /// Derive the stream for stage `stage` and stratum `stratum_id`.
    /// Distinct keys give statistically independent sequences; equal keys
    /// give identical sequences on any platform.
    pub fn derive(master_seed: u64, stage: u64, stratum_id: u64) -> Self {
        let key = [master_seed, stage, stratum_id, DOMAIN_TAG];
        let mut seed = [0u8; 32];
        for (chunk, word) in seed.chunks_exact_mut(8).zip(key) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        RngStream {
            key,
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    /// The (master, stage, stratum) key this stream was derived from.
    pub fn key(&self) -> (u64, u64, u64) {
        (self.key[0], self.key[1], self.key[2])
    }

    pub fn stratum_id(&self) -> u64 {
        self.key[2]
    }

    /// One draw uniform on `[0,1)`.
    pub fn uniform01(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    fn shuffled_indices(&mut self, n: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut self.rng);
        perm
    }
}

/// Derive an independent master seed for replicate `replicate` of a study,
/// via a SplitMix64 step. Used so repeated runs share nothing but the
/// top-level seed.
pub fn replication_seed(master_seed: u64, replicate: u64) -> u64 {
    let mut z = master_seed.wrapping_add(
        replicate
            .wrapping_add(1)
            .wrapping_mul(0x9e37_79b9_7f4a_7c15),
    );
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Which design produced a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Design {
    Lhs,
    Smc,
}

/// A batch of points drawn inside one stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    points: Vec<f64>,
    n: usize,
    dim: usize,
    stratum_id: u64,
    design: Design,
}

impl SampleBatch {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stratum_id(&self) -> u64 {
        self.stratum_id
    }

    pub fn design(&self) -> Design {
        self.design
    }

    /// The `j`-th point as a coordinate slice.
    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j * self.dim..(j + 1) * self.dim]
    }

    pub fn iter_points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }
}

/// Draw `n` i.i.d. points uniform on `rect`.
pub fn uniform_sample(rect: &HyperRectangle, n: usize, rng: &mut RngStream) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let dim = rect.dim();
    let mut points = Vec::with_capacity(n * dim);
    for _ in 0..n {
        for k in 0..dim {
            let lo = rect.lower()[k];
            let up = rect.upper()[k];
            let mut y = lo + rng.uniform01() * (up - lo);
            // Rounding may land exactly on the open upper face; pull back
            // one ulp so the half-open membership test holds.
            if y >= up {
                y = up.next_down();
            }
            points.push(y);
        }
    }
    Ok(SampleBatch {
        points,
        n,
        dim,
        stratum_id: rng.stratum_id(),
        design: Design::Smc,
    })
}

/// Draw an `n`-point Latin Hypercube design on `rect`: per dimension an
/// independent uniform permutation of the `n` equal-width cells, each
/// sampled at an independent uniform offset. Every dimension's cell
/// occupancy is exactly a permutation of `{0,…,n−1}`.
pub fn lhs_sample(rect: &HyperRectangle, n: usize, rng: &mut RngStream) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let dim = rect.dim();
    let mut points = vec![0.0; n * dim];
    for k in 0..dim {
        let lo = rect.lower()[k];
        let up = rect.upper()[k];
        let perm = rng.shuffled_indices(n);
        for (j, &cell) in perm.iter().enumerate() {
            let u = rng.uniform01();
            points[j * dim + k] = place_in_cell(lo, up, n, cell, u);
        }
    }
    Ok(SampleBatch {
        points,
        n,
        dim,
        stratum_id: rng.stratum_id(),
        design: Design::Lhs,
    })
}

/// The LHS cell index of coordinate `y` along an interval split into `n`
/// equal cells.
pub fn cell_index(lo: f64, up: f64, n: usize, y: f64) -> usize {
    (((y - lo) / (up - lo)) * n as f64).floor() as usize
}

/// Coordinate at offset `u ∈ [0,1)` within cell `cell` of `[lo,up)` split
/// into `n` cells, nudged by ulps if rounding crossed a cell boundary so
/// that `cell_index` recovers `cell` exactly.
fn place_in_cell(lo: f64, up: f64, n: usize, cell: usize, u: f64) -> f64 {
    let mut y = lo + (cell as f64 + u) / n as f64 * (up - lo);
    for _ in 0..64 {
        let idx = cell_index(lo, up, n, y);
        if idx < cell {
            y = y.next_up();
        } else if idx > cell {
            y = y.next_down();
        } else {
            return y;
        }
    }
    unreachable!("cell placement did not converge");
}
