// Negated comparisons on floats are used on purpose: `!(x > 0.0)` rejects
// NaN along with nonpositive values, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Time-series modeling with latent shocks and observation noise.
//!
//! The model family here explains each value of a series by a linear
//! combination of unobserved shocks, its own recent past, optional lagged
//! values of other series, and a small observation noise. Because shocks are
//! latent Gaussians, inference stays exact under arbitrarily missing data:
//! a clique-chain sweep computes likelihoods, posteriors of the shocks, and
//! predictive distributions without imputation.
//!
//! The pieces:
//! - [`series`], [`io`]: collections of possibly-gappy series, CSV reading
//!   and writing, standardization, differencing, interpolation.
//! - [`model`]: structures (orders, cross predictors), parameters, JSON
//!   persistence.
//! - [`gaussian`], [`inference`], [`dense`]: the exact chain sweep and a
//!   brute-force dense oracle for validating it.
//! - [`estimation`]: expectation-maximization on the chain's sufficient
//!   statistics.
//! - [`forecast`]: one-step and multi-step predictive distributions.
//! - [`search`]: greedy order and cross-predictor selection.
//! - [`arma`], [`evaluation`], [`experiment`]: classic ARMA baselines,
//!   sequential predictive scoring, the exact sign test, and a declarative
//!   experiment runner.
//! - [`simulate`], [`cli`]: sampling from stored models and the `sigma-arma`
//!   command-line tool.

pub mod arma;
pub mod cli;
pub mod dense;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod experiment;
pub mod forecast;
pub mod gaussian;
pub mod inference;
pub mod io;
pub mod model;
pub mod search;
pub mod series;
pub mod simulate;

pub use error::{Error, Result};
