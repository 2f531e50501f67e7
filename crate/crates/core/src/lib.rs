//! Robust Bayesian experimental design with Sibson's alpha-mutual
//! information.
//!
//! The crate provides closed forms for conjugate Gaussian regression and
//! Beta-Binomial A/B tests, a nested Monte Carlo estimator for general
//! models, PAC-Bayes design policies, and drivers for the standard
//! experiments.

pub mod abtest;
pub mod design;
pub mod error;
pub mod harness;
mod linalg;
pub mod linreg;
pub mod nmc;
pub mod policy;
pub mod primitives;
pub mod renyi;
pub mod rng;
pub mod shannon;
pub mod special;

pub use error::{Error, Result};
pub use primitives::{log_sum_exp, Order};
pub use rng::Seed;
