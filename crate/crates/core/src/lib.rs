//! Random-forest regression with the sample CART splitting rule, height-`k`
//! trees, column and row subsampling, and a population-level oracle for
//! conditional moments, impurity quantities, theoretical CART splits, and
//! sufficient-impurity-decrease (SID) constants.
//!
//! The crate is organized in layers:
//!
//! * [`geometry`] — cells (axis-aligned boxes in `[0,1]^p`), splits, and the
//!   grid construction with boundary snapping.
//! * [`data`] — immutable datasets, CSV ingestion, and synthetic sampling.
//! * [`model`] — the registry of regression functions with their feature
//!   distributions, noise laws, and known SID constants.
//! * [`cart`] — the sample CART split scan, its binary-feature restriction,
//!   the sample impurity decrease, and a brute-force oracle for tests.
//! * [`population`] — conditional moments, impurity decrease `(II)` and
//!   remaining bias `(I)`, theoretical CART, SID estimation, and the
//!   growing-rule certificate check.
//! * [`forest`] — feature-subset schedules, tree growing under a pluggable
//!   splitter, tree/forest prediction, the population tree estimate, the
//!   semi-sample trimming rule, and tree serialization.
//! * [`evaluation`] — Monte-Carlo bias/variance decomposition, bound checks,
//!   the relevance experiment, and convergence sweeps.

pub mod cart;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod forest;
pub mod geometry;
pub mod model;
pub mod population;
pub mod rng;

pub use error::{Error, Result};

/// Crate version embedded in every emitted report.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
