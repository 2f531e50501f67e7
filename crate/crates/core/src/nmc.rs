//! Nested Monte Carlo estimation of Sibson's alpha-mutual information.
//!
//! For each outer index `i` the estimator draws a joint pair
//! `(theta_i, x_i)` and `M` auxiliary prior draws `theta_ij`, then works
//! entirely in the log domain:
//!
//! 1. `log w_ij = l(theta_ij, x_i) - LSE_k l(theta_ik, x_i) + log M`
//!    (contrastive weights; the generating `theta_i` is not in the set),
//! 2. `log ell_i = LSE_j(alpha log w_ij) - log M`,
//! 3. `I = alpha / (alpha - 1) * (LSE_i(log ell_i / alpha) - log N)`.
//!
//! Each outer index owns one derived random stream covering its joint draw
//! and all of its auxiliary draws, so growing `N` leaves earlier indices
//! untouched and parallel evaluation matches sequential evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{Order, RegularityConstants};
use crate::rng::{Rng, Seed};

/// A model that can be simulated and scored at a design.
///
/// `prepare` caches whatever the model needs per design (design matrices,
/// binomial coefficients); the remaining methods are called in hot loops.
pub trait GenerativeModel: Sync {
    type Design: ?Sized + Sync;
    type Prepared: Sync;
    type Param: Send + Sync;
    type Outcome: Send + Sync;

    fn prepare(&self, design: &Self::Design) -> Result<Self::Prepared>;

    fn sample_prior(&self, rng: &mut Rng) -> Self::Param;

    fn sample_outcome(&self, prepared: &Self::Prepared, theta: &Self::Param, rng: &mut Rng) -> Self::Outcome;

    fn log_likelihood(&self, prepared: &Self::Prepared, x: &Self::Outcome, theta: &Self::Param) -> f64;

    /// Exact `log p(x | design)` when the model has a closed-form marginal.
    fn log_marginal(&self, _prepared: &Self::Prepared, _x: &Self::Outcome) -> Option<f64> {
        None
    }

    /// `log p(x | theta)` at a fresh prior draw. Overrides may draw only the
    /// statistic of `theta` the likelihood depends on; the returned value
    /// must keep its law under the prior, not the exact random stream.
    fn log_likelihood_at_prior_draw(&self, prepared: &Self::Prepared, x: &Self::Outcome, rng: &mut Rng) -> f64 {
        let theta = self.sample_prior(rng);
        self.log_likelihood(prepared, x, &theta)
    }
}

/// How the density ratio `p(x | theta) / p(x)` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// Marginal replaced by an average over auxiliary prior draws.
    #[default]
    Contrastive,
    /// Closed-form marginal; isolates the contrastive bias in diagnostics.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmcConfig {
    pub outer_n: usize,
    pub inner_m: usize,
    /// Size of a separate contrastive set. `None` reuses the `M` inner draws.
    pub contrastive_k: Option<usize>,
    pub order: Order,
    pub weights: WeightMode,
}

impl NmcConfig {
    pub fn new(outer_n: usize, inner_m: usize, order: Order) -> Self {
        NmcConfig {
            outer_n,
            inner_m,
            contrastive_k: None,
            order,
            weights: WeightMode::Contrastive,
        }
    }

    pub fn with_weights(mut self, weights: WeightMode) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_contrastive_k(mut self, k: usize) -> Self {
        self.contrastive_k = Some(k);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_n == 0 || self.inner_m == 0 || self.contrastive_k == Some(0) {
            return Err(Error::invalid("sample budgets N, M and K must be at least 1"));
        }
        self.order.require_proper()?;
        Ok(())
    }
}

/// Cached log-likelihoods for one outer index.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRow {
    /// `l(theta_ij, x_i)` for the `M` inner draws.
    pub inner: Vec<f64>,
    pub normalizer: Normalizer,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Normalizer {
    /// Log-likelihoods of the contrastive set.
    Contrastive(Vec<f64>),
    /// Exact `log p(x_i)`.
    Exact(f64),
    /// Reuse the inner draws as the contrastive set.
    Inner,
}

/// `log (1/n sum exp v)`, shifted so that equal inputs give exactly `v[0]`.
fn log_mean_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = v.iter().map(|x| (x - max).exp()).sum();
    max + (s / v.len() as f64).ln()
}

impl OuterRow {
    /// `log ell_i`: log of the inner average of powered weights.
    pub fn log_ell(&self, alpha: f64) -> f64 {
        let max = self.inner.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // log of the mean ratio relative to the largest inner term
        let log_norm_shifted = match &self.normalizer {
            Normalizer::Inner => log_mean_exp(&self.inner.iter().map(|l| l - max).collect::<Vec<_>>()),
            Normalizer::Contrastive(c) => log_mean_exp(&c.iter().map(|l| l - max).collect::<Vec<_>>()),
            Normalizer::Exact(m) => m - max,
        };
        let powered: Vec<f64> = self
            .inner
            .iter()
            .map(|l| alpha * ((l - max) - log_norm_shifted))
            .collect();
        log_mean_exp(&powered)
    }
}

/// Final aggregation over outer indices, in index order.
pub fn aggregate(log_ells: &[f64], order: Order) -> Result<f64> {
    order.require_proper()?;
    if log_ells.is_empty() {
        return Err(Error::invalid("no outer samples"));
    }
    let a = order.alpha();
    let scaled: Vec<f64> = log_ells.iter().map(|l| l / a).collect();
    let value = a / (a - 1.0) * log_mean_exp(&scaled);
    if !value.is_finite() {
        return Err(Error::Numeric(format!("estimate is not finite ({value})")));
    }
    Ok(value)
}

/// Estimate from cached rows.
pub fn estimate_from_rows(rows: &[OuterRow], order: Order) -> Result<f64> {
    let a = order.alpha();
    let log_ells: Vec<f64> = rows.iter().map(|r| r.log_ell(a)).collect();
    aggregate(&log_ells, order)
}

fn check_finite(value: f64, outer: usize, inner: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::EstimationFailed {
            outer,
            inner,
            reason: format!("log-likelihood is {value}"),
        })
    }
}

fn draw_row<G: GenerativeModel>(
    model: &G,
    prepared: &G::Prepared,
    config: &NmcConfig,
    seed: Seed,
    i: usize,
) -> Result<OuterRow> {
    let mut rng = seed.derive(i as u64).rng();
    let theta = model.sample_prior(&mut rng);
    let x = model.sample_outcome(prepared, &theta, &mut rng);
    let mut inner = Vec::with_capacity(config.inner_m);
    for j in 0..config.inner_m {
        inner.push(check_finite(model.log_likelihood_at_prior_draw(prepared, &x, &mut rng), i, j)?);
    }
    let normalizer = match (config.weights, config.contrastive_k) {
        (WeightMode::Exact, _) => {
            let m = model
                .log_marginal(prepared, &x)
                .ok_or_else(|| Error::invalid("exact weights requested but the model has no closed-form marginal"))?;
            Normalizer::Exact(check_finite(m, i, usize::MAX)?)
        }
        (WeightMode::Contrastive, None) => Normalizer::Inner,
        (WeightMode::Contrastive, Some(k)) => {
            let mut c = Vec::with_capacity(k);
            for j in 0..k {
                c.push(check_finite(
                    model.log_likelihood_at_prior_draw(prepared, &x, &mut rng),
                    i,
                    config.inner_m + j,
                )?);
            }
            Normalizer::Contrastive(c)
        }
    };
    Ok(OuterRow { inner, normalizer })
}

/// Draws and caches all log-likelihoods (memory `O(N (M + K))`).
pub fn draw_rows<G: GenerativeModel>(
    model: &G,
    design: &G::Design,
    config: &NmcConfig,
    seed: Seed,
) -> Result<Vec<OuterRow>> {
    config.validate()?;
    let prepared = model.prepare(design)?;
    (0..config.outer_n)
        .into_par_iter()
        .map(|i| draw_row(model, &prepared, config, seed, i))
        .collect()
}

/// Nested Monte Carlo estimate of the robust expected information gain at
/// `design`. Deterministic given `seed`.
pub fn estimate<G: GenerativeModel>(model: &G, design: &G::Design, config: &NmcConfig, seed: Seed) -> Result<f64> {
    config.validate()?;
    let prepared = model.prepare(design)?;
    let a = config.order.alpha();
    let log_ells: Vec<f64> = (0..config.outer_n)
        .into_par_iter()
        .with_min_len(64)
        .map(|i| draw_row(model, &prepared, config, seed, i).map(|row| row.log_ell(a)))
        .collect::<Result<_>>()?;
    aggregate(&log_ells, config.order)
}

/// One independent estimate per design, design `k` using `seed.derive(k)`.
pub fn estimate_per_design<G: GenerativeModel>(
    model: &G,
    designs: &[&G::Design],
    config: &NmcConfig,
    seed: Seed,
) -> Result<Vec<f64>> {
    if designs.is_empty() {
        return Err(Error::invalid("design list is empty"));
    }
    designs
        .iter()
        .enumerate()
        .map(|(k, d)| estimate(model, d, config, seed.derive(k as u64)).map_err(|e| e.context(format!("design {k}"))))
        .collect()
}

/// Inner budget making the PAC-Bayes bound valid:
/// `ceil(2 N L_h^2 sigma_w^2 / (C_h^2 log(2 / delta)))`, at least 1.
pub fn min_inner_samples(outer_n: usize, delta: f64, constants: &RegularityConstants) -> Result<usize> {
    constants.validate()?;
    if constants.c_h == 0.0 {
        return Err(Error::invalid("C_h must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let raw = 2.0 * outer_n as f64 * constants.l_h.powi(2) * constants.sigma_w.powi(2)
        / (constants.c_h.powi(2) * (2.0 / delta).ln());
    Ok((raw.ceil() as usize).max(1))
}

/// Unrounded inner-budget requirement, for proportionality checks.
pub fn min_inner_samples_raw(outer_n: usize, delta: f64, constants: &RegularityConstants) -> f64 {
    2.0 * outer_n as f64 * constants.l_h.powi(2) * constants.sigma_w.powi(2)
        / (constants.c_h.powi(2) * (2.0 / delta).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasRow {
    pub inner_m: usize,
    pub mean_error: f64,
    /// Sample standard deviation of the error; absent for a single repetition.
    pub std_error: Option<f64>,
}

/// Empirical bias of the estimator against a closed-form `reference`, for
/// each inner budget in `inner_grid`.
#[allow(clippy::too_many_arguments)]
pub fn bias_curve<G: GenerativeModel>(
    model: &G,
    design: &G::Design,
    order: Order,
    outer_n: usize,
    inner_grid: &[usize],
    reps: usize,
    seed: Seed,
    reference: f64,
) -> Result<Vec<BiasRow>> {
    if reps == 0 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    inner_grid
        .iter()
        .enumerate()
        .map(|(g, &m)| {
            let config = NmcConfig::new(outer_n, m, order);
            let errors: Vec<f64> = (0..reps)
                .map(|r| estimate(model, design, &config, seed.derive2(g as u64, r as u64)).map(|v| v - reference))
                .collect::<Result<_>>()?;
            let mean = errors.iter().sum::<f64>() / reps as f64;
            let std_error = (reps > 1).then(|| {
                (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt()
            });
            Ok(BiasRow {
                inner_m: m,
                mean_error: mean,
                std_error,
            })
        })
        .collect()
}
