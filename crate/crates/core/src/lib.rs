//! Error prediction and Monte Carlo validation for the generalized (square-root)
//! LASSO `min ||y - Ax||_2 + lambda f(x)` when the measurements pass through a
//! nonlinear, possibly random link `y_i = g(a_i^T x0)`.
//!
//! The crate provides link moments, signal priors, proximal regularizers, a
//! primal-dual LASSO solver, analytic error predictors, Lloyd-Max quantizer
//! design and an experiment harness with a CLI (`nlasso`).

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod link;
mod optim;
pub mod predict;
pub mod quantize;
pub mod regularizer;
pub mod signal;
pub mod solver;

pub use error::{Error, Result};
pub use experiment::{ExperimentSpec, SummaryRecord};
pub use link::{LinkModel, LinkMoments, QuadConfig};
pub use predict::{MaxMinSolution, SparsePrediction};
pub use quantize::{DesignResult, QuantizerDesign};
pub use regularizer::RegularizerSpec;
pub use signal::{SignalInstance, SignalPrior};
pub use solver::{ProblemInstance, SolveResult, SolverConfig};
