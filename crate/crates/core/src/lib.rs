//! Marginal and Empirical Bayes estimation of ARX models, with forward and
//! backward conditionally Gaussian Kalman filters and a Monte-Carlo harness
//! comparing the two estimators.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod estimators;
pub mod experiments;
pub mod filters;
pub mod model;
pub mod numerics;
pub mod rng;

pub use estimators::{EstimateReport, EstimatorError, Prior};
pub use experiments::{MseAggregate, MseReport, ScenarioSpec};
pub use filters::{FilterError, FilterState, FilterTrace, TerminalCondition};
pub use model::{ArxSpec, Dataset, ModelError, RegressorSet};
pub use numerics::{Matrix, SymMatrix, Vector};
