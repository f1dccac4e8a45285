//! Multi-fidelity Bayesian optimization with deep Gaussian process surrogates.
//!
//! The crate is organized bottom-up:
//!
//! - [`gp`]: exact GP regression (kernels, marginal-likelihood fitting, posterior prediction and sampling)
//! - [`dgp`]: a sequentially composed multi-fidelity deep GP with Monte-Carlo uncertainty propagation
//! - [`bo`]: the cost-aware UCB campaign loop with fidelity selection and budget accounting
//! - [`objectives`]: the Forrester benchmark family and a coiled-tube reactor proxy scored by tanks-in-series fitting
//! - [`cli`]: configuration, append-only results logs and the `mfdgp` command implementations

pub mod bo;
pub mod cli;
pub mod design;
pub mod dgp;
pub mod error;
pub mod fidelity;
pub mod gp;
pub mod objectives;
pub mod optim;
pub mod rng;

pub use error::{Error, Result};
