//! Surrogate-assisted design optimization for half-bridge power converters.
//!
//! The crate is organised as a pipeline:
//!
//! * [`converter`] is an analytic steady-state electro-thermal model that
//!   labels random designs with efficiency and junction temperature.
//! * [`dataset`] holds labeled samples, the feasibility rule,
//!   Z-standardization, splits and CSV persistence.
//! * [`nn`] is a small dense network engine (backprop, dropout, Adam) used by
//!   the [`classifier`] and the Monte Carlo dropout regressor.
//! * [`regress`] provides Gaussian predictive regressors: natural gradient
//!   boosting over extra-trees, exact Gaussian process regression and
//!   Monte Carlo dropout.
//! * [`metrics`] implements the classification, pointwise and probabilistic
//!   scores plus calibration curves.
//! * [`fitness`] composes the classifier and a regressor into the
//!   soft-penalty multi-objective fitness.
//! * [`optim`] contains the five metaheuristics (GA, PSO, SA, tabu search
//!   and stochastic hill climbing) and the comparison driver.

pub mod classifier;
pub mod converter;
pub mod dataset;
pub mod error;
pub mod fitness;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod regress;
pub mod rng;

pub use error::{Error, Result};
