//! Hierarchical Bayesian modeling of accidental mark locations on shoe
//! soles.
//!
//! The library covers the full workflow: a generative model for accidental
//! locations conditioned on a shoe's contact surface, an auxiliary-variable
//! MCMC sampler for the posterior over global parameters, an
//! importance-sampling estimator for held-out densities, competitor
//! baselines, and Monte Carlo random-match-probability estimation. The
//! `solemark` binary wires these into `simulate` / `fit` / `heldout` /
//! `baseline` / `rmp` / `diagnose` subcommands.
//!
//! All sampling entry points take an explicit `Rng`, so every run is a
//! deterministic function of its inputs and seed.

pub mod baselines;
pub mod coarse;
pub mod dataset;
pub mod error;
pub mod geweke;
pub mod grid;
pub mod heldout;
pub mod intensity;
pub mod kernel;
pub mod likelihood;
pub mod mcmc;
pub mod oracle;
pub mod params;
pub mod records;
pub mod rmp;
pub mod slice;
pub mod util;

pub use error::{Error, Result};
