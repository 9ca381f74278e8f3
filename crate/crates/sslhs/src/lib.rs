//! Hierarchically refined stratified sampling with per-stratum Latin
//! Hypercube designs.
//!
//! The estimator targets `E[f(Y)]` for a black-box `f` over uniform
//! inputs on the unit hypercube. It builds a sequence of stratifications
//! of the domain, runs a Latin Hypercube design inside every stratum of
//! every stage, decides where to refine next from local polynomial
//! surrogates and their Sobol variance decompositions, and combines the
//! per-stage estimates by inverse-variance weighting.

pub mod driver;
pub mod error;
pub mod estimators;
pub mod gpc;
pub mod harness;
pub mod models;
pub mod quadrature;
pub mod sampling;
pub mod sobol;
pub mod stratification;

pub use error::{Error, Result};

/// Long-form guide, mirrored from `book/src`; every code block compiles
/// and runs as a documentation test, so the book cannot drift from the
/// crate.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/stratification.md")]
    pub mod stratification {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    pub mod sampling {}
    #[doc = include_str!("../../../book/src/surrogates.md")]
    pub mod surrogates {}
    #[doc = include_str!("../../../book/src/sensitivity.md")]
    pub mod sensitivity {}
    #[doc = include_str!("../../../book/src/weighted-ensemble.md")]
    pub mod weighted_ensemble {}
    #[doc = include_str!("../../../book/src/adaptive-loop.md")]
    pub mod adaptive_loop {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    pub mod benchmarks {}
}
