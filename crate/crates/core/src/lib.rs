//! Simulation and estimation toolkit for diffusion of binary outcomes on
//! networks.
//!
//! The crate generates data from a binary spatial autoregressive (BSAR)
//! process on an exogenous contiguity structure, estimates it with a Bayesian
//! spatial-probit Gibbs sampler and with a stochastic actor-oriented model
//! (SAOM) method-of-moments estimator, and aggregates both over a seeded
//! Monte Carlo design.
//!
//! Module map:
//! - [`net`]: connectivity structures (random geometric generation,
//!   row-normalization, spectra, edge-list persistence).
//! - [`bsar`]: the latent-variable autoregressive data-generating process,
//!   plain probit maximum likelihood, and the Gibbs sampler.
//! - [`saom_core`]: effect statistics, the behaviour objective function,
//!   ministep choice probabilities, and forward simulation of one period.
//! - [`saom_fit`]: method-of-moments estimation by Robbins-Monro stochastic
//!   approximation, the cross-sectional two-wave construction, and the
//!   multi-wave panel mode.
//! - [`mc`]: the replication harness sweeping autocorrelation, sample size,
//!   and seeds, with CSV emission of rows and summary tables.

pub mod bsar;
pub mod error;
pub mod mc;
pub mod net;
pub mod rng;
pub mod saom_core;
pub mod saom_fit;
pub mod stats;

pub use error::{Error, Result};
