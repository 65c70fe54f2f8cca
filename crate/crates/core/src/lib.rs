//! Regret-minimizing sample weighting for small, imbalanced datasets.
//!
//! Samples are scored by how uncertain a probe model is about them, grouped
//! into quantile curriculum stages, and weighted by `exp(-d / T)` while a
//! convex learner is trained. The crate also ships the metrics, rank tests,
//! a perturbation harness and an online-convex-optimization simulator used to
//! check the regret bound of the weighted update empirically.
//!
//! Module map:
//!
//! - [`difficulty`]: difficulty scores and quantile stratification
//! - [`weighting`]: exponential, focal, meta and uniform weights, temperature schedules
//! - [`oco`]: weighted projected online gradient descent and regret accounting
//! - [`learner`]: weighted logistic regression, stratified folds, cross-validation
//! - [`evaluation`]: AUC, confusion metrics, ECE, rank and paired tests
//! - [`data`]: synthetic generators, perturbations, CSV ingestion
//! - [`experiment`]: config-driven subcommands behind the `fossil` binary

pub mod data;
pub mod difficulty;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod learner;
pub mod oco;
pub mod weighting;

mod digest;
mod linalg;

pub use error::{Error, Result};
