//! Beta-Binomial A/B test: two groups with independent Beta priors on their
//! success rates, `n_a + n_b = N_x` subjects, binomial success counts.
//!
//! Every quantity is exact: outcome spaces are enumerated and all Beta and
//! binomial terms go through log-Gamma.

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nmc::GenerativeModel;
use crate::primitives::{log_sum_exp, Order};
use crate::renyi::{kl_beta, renyi_beta, BetaDist};
use crate::rng::{Rng, Seed};
use crate::special::{ln_beta, ln_choose};

/// Largest total budget for which the joint outcome grid is enumerated.
pub const ENUMERATION_LIMIT: u32 = 200;

/// Number of subjects assigned to each group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Allocation {
    pub n_a: u32,
    pub n_b: u32,
}

impl Allocation {
    pub fn new(n_a: u32, n_b: u32) -> Self {
        Allocation { n_a, n_b }
    }

    /// `n_a` subjects to group A, the rest of `total` to group B.
    pub fn split(total: u32, n_a: u32) -> Result<Self> {
        if n_a > total {
            return Err(Error::invalid(format!("n_a = {n_a} exceeds the budget {total}")));
        }
        Ok(Allocation { n_a, n_b: total - n_a })
    }

    pub fn total(&self) -> u32 {
        self.n_a + self.n_b
    }
}

/// Success counts `(x_a, x_b)`.
pub type Outcome = (u32, u32);

fn check_count(n: u32, x: u32, group: &str) -> Result<()> {
    if x > n {
        return Err(Error::invalid(format!("group {group}: {x} successes out of {n} trials")));
    }
    Ok(())
}

/// `log Z_alpha(x; n) = alpha log C(n, x) + log B(delta + alpha x, gamma + alpha (n - x)) - log B(delta, gamma)`,
/// the log of `E_prior[p(x | theta)^alpha]` for one group.
pub fn log_z_alpha(prior: &BetaDist, n: u32, x: u32, order: Order) -> Result<f64> {
    check_count(n, x, "?")?;
    Ok(log_z_unchecked(prior, n, x, order.alpha()))
}

fn log_z_unchecked(prior: &BetaDist, n: u32, x: u32, a: f64) -> f64 {
    let (xf, nf) = (x as f64, n as f64);
    a * ln_choose(n, x) + ln_beta(prior.delta() + a * xf, prior.gamma() + a * (nf - xf)) - prior.ln_beta()
}

/// Beta-Binomial log pmf of one group.
fn beta_binomial_log_pmf(shapes: &BetaDist, n: u32, x: u32) -> f64 {
    log_z_unchecked(shapes, n, x, 1.0)
}

/// Normalized log tilted pmf over `x = 0..=n` for one group.
pub fn group_tilted_log_pmf(prior: &BetaDist, n: u32, order: Order) -> Vec<f64> {
    let a = order.alpha();
    let scaled: Vec<f64> = (0..=n).map(|x| log_z_unchecked(prior, n, x, a) / a).collect();
    let norm = log_sum_exp(&scaled).expect("non-empty finite grid");
    scaled.into_iter().map(|v| v - norm).collect()
}

/// Sibson's alpha-MI of a single group with `n` trials.
pub fn group_sibson_mi(prior: &BetaDist, n: u32, order: Order) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if order.is_shannon() {
        return group_shannon_mi(prior, n);
    }
    let a = order.alpha();
    let scaled: Vec<f64> = (0..=n).map(|x| log_z_unchecked(prior, n, x, a) / a).collect();
    let lse = log_sum_exp(&scaled).expect("non-empty finite grid");
    (a / (a - 1.0) * lse).max(0.0)
}

/// Shannon mutual information of one group, `sum_x p(x) KL(p(theta | x) || p(theta))`.
pub fn group_shannon_mi(prior: &BetaDist, n: u32) -> f64 {
    (0..=n)
        .map(|x| {
            let post = conjugate(prior, n, x, 1.0);
            beta_binomial_log_pmf(prior, n, x).exp() * kl_beta(&post, prior)
        })
        .sum()
}

fn conjugate(prior: &BetaDist, n: u32, x: u32, a: f64) -> BetaDist {
    BetaDist::new(prior.delta() + a * x as f64, prior.gamma() + a * (n - x) as f64).expect("shapes stay positive")
}

/// Joint pmf over the `(n_a + 1) x (n_b + 1)` outcome grid, row-major in `x_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomePmf {
    pub alloc: Allocation,
    pub probs: Vec<f64>,
}

impl OutcomePmf {
    pub fn get(&self, x_a: u32, x_b: u32) -> f64 {
        self.probs[(x_a * (self.alloc.n_b + 1) + x_b) as usize]
    }

    pub fn outcomes(&self) -> impl Iterator<Item = Outcome> + '_ {
        let nb = self.alloc.n_b;
        (0..=self.alloc.n_a).flat_map(move |xa| (0..=nb).map(move |xb| (xa, xb)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ABModel {
    prior_a: BetaDist,
    prior_b: BetaDist,
    total: u32,
}

impl ABModel {
    pub fn new(prior_a: BetaDist, prior_b: BetaDist, total: u32) -> Result<Self> {
        if total == 0 {
            return Err(Error::invalid("total budget must be at least 1"));
        }
        Ok(ABModel { prior_a, prior_b, total })
    }

    /// Uniform priors on both rates.
    pub fn uniform(total: u32) -> Result<Self> {
        ABModel::new(BetaDist::uniform(), BetaDist::uniform(), total)
    }

    pub fn prior_a(&self) -> &BetaDist {
        &self.prior_a
    }

    pub fn prior_b(&self) -> &BetaDist {
        &self.prior_b
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    /// All allocations `n_a = 0..=N_x`.
    pub fn allocations(&self) -> Vec<Allocation> {
        (0..=self.total)
            .map(|n_a| Allocation::new(n_a, self.total - n_a))
            .collect()
    }

    fn check_alloc(&self, alloc: &Allocation) -> Result<()> {
        if alloc.total() != self.total {
            return Err(Error::invalid(format!(
                "allocation ({}, {}) does not use the budget {}",
                alloc.n_a, alloc.n_b, self.total
            )));
        }
        Ok(())
    }

    fn check_outcome(&self, alloc: &Allocation, x: Outcome) -> Result<()> {
        check_count(alloc.n_a, x.0, "A")?;
        check_count(alloc.n_b, x.1, "B")
    }

    pub fn marginal_log_pmf(&self, alloc: &Allocation, x: Outcome) -> Result<f64> {
        self.check_outcome(alloc, x)?;
        Ok(beta_binomial_log_pmf(&self.prior_a, alloc.n_a, x.0) + beta_binomial_log_pmf(&self.prior_b, alloc.n_b, x.1))
    }

    pub fn posterior(&self, alloc: &Allocation, x: Outcome) -> Result<(BetaDist, BetaDist)> {
        self.tilted_posterior(alloc, x, Order::SHANNON)
    }

    /// Per-group `Beta(delta + alpha x, gamma + alpha (n - x))`.
    pub fn tilted_posterior(&self, alloc: &Allocation, x: Outcome, order: Order) -> Result<(BetaDist, BetaDist)> {
        self.check_outcome(alloc, x)?;
        let a = order.alpha();
        Ok((
            conjugate(&self.prior_a, alloc.n_a, x.0, a),
            conjugate(&self.prior_b, alloc.n_b, x.1, a),
        ))
    }

    /// Tilted marginal over the full outcome grid.
    pub fn tilted_marginal_pmf(&self, alloc: &Allocation, order: Order) -> Result<OutcomePmf> {
        if alloc.total() > ENUMERATION_LIMIT {
            return Err(Error::Capacity(format!(
                "outcome grid for budget {} exceeds the enumeration limit {ENUMERATION_LIMIT}",
                alloc.total()
            )));
        }
        let la = group_tilted_log_pmf(&self.prior_a, alloc.n_a, order);
        let lb = group_tilted_log_pmf(&self.prior_b, alloc.n_b, order);
        let probs = la
            .iter()
            .flat_map(|pa| lb.iter().map(move |pb| (pa + pb).exp()))
            .collect();
        Ok(OutcomePmf { alloc: *alloc, probs })
    }

    /// Sibson's alpha-MI, additive over groups.
    pub fn sibson_mi(&self, alloc: &Allocation, order: Order) -> f64 {
        group_sibson_mi(&self.prior_a, alloc.n_a, order) + group_sibson_mi(&self.prior_b, alloc.n_b, order)
    }

    /// `sibson_mi` for every allocation `n_a = 0..=N_x`.
    pub fn sibson_mi_all(&self, order: Order) -> Vec<f64> {
        self.allocations().iter().map(|al| self.sibson_mi(al, order)).collect()
    }

    /// Allocation maximizing `sibson_mi`; ties go to the smallest `n_a`.
    pub fn optimal_allocation(&self, order: Order) -> (Allocation, f64) {
        let values = self.sibson_mi_all(order);
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = i;
            }
        }
        (Allocation::new(best as u32, self.total - best as u32), values[best])
    }

    /// `count` draws from the worst-case joint: `x` from the tilted marginal
    /// by inverse CDF, then each rate from its tilted posterior.
    pub fn sample_worst_case(
        &self,
        alloc: &Allocation,
        order: Order,
        count: usize,
        seed: Seed,
    ) -> Result<Vec<((f64, f64), Outcome)>> {
        if count == 0 {
            return Err(Error::invalid("count must be at least 1"));
        }
        let cdf = |prior: &BetaDist, n: u32| {
            let mut acc = 0.0;
            group_tilted_log_pmf(prior, n, order)
                .into_iter()
                .map(|l| {
                    acc += l.exp();
                    acc
                })
                .collect::<Vec<f64>>()
        };
        let cdf_a = cdf(&self.prior_a, alloc.n_a);
        let cdf_b = cdf(&self.prior_b, alloc.n_b);
        let invert = |cdf: &[f64], u: f64| {
            let total = cdf[cdf.len() - 1];
            cdf.iter().position(|c| u * total < *c).unwrap_or(cdf.len() - 1) as u32
        };
        let a = order.alpha();
        let mut rng = seed.rng();
        Ok((0..count)
            .map(|_| {
                let xa = invert(&cdf_a, rand::Rng::random(&mut rng));
                let xb = invert(&cdf_b, rand::Rng::random(&mut rng));
                let ta = conjugate(&self.prior_a, alloc.n_a, xa, a).sample(&mut rng);
                let tb = conjugate(&self.prior_b, alloc.n_b, xb, a).sample(&mut rng);
                ((ta, tb), (xa, xb))
            })
            .collect())
    }

    /// One draw from the worst-case joint of a training experiment and a
    /// held-out experiment sharing the same rates. Each group's pair of
    /// counts is drawn from its tilted marginal on the `(n1 + 1) x (n2 + 1)`
    /// grid; returns `(rates, train outcome, test outcome)`.
    pub fn sample_worst_case_split(
        &self,
        train: &Allocation,
        test: &Allocation,
        order: Order,
        seed: Seed,
    ) -> Result<((f64, f64), Outcome, Outcome)> {
        if train.total() + test.total() > ENUMERATION_LIMIT {
            return Err(Error::Capacity(format!(
                "combined budget {} exceeds the enumeration limit {ENUMERATION_LIMIT}",
                train.total() + test.total()
            )));
        }
        let a = order.alpha();
        let mut rng = seed.rng();
        let mut group = |prior: &BetaDist, n1: u32, n2: u32| {
            let cells: Vec<(u32, u32)> = (0..=n1).flat_map(|x1| (0..=n2).map(move |x2| (x1, x2))).collect();
            let logw: Vec<f64> = cells
                .iter()
                .map(|&(x1, x2)| {
                    let (s, n) = ((x1 + x2) as f64, (n1 + n2) as f64);
                    (a * (ln_choose(n1, x1) + ln_choose(n2, x2)) + ln_beta(prior.delta() + a * s, prior.gamma() + a * (n - s))
                        - prior.ln_beta())
                        / a
                })
                .collect();
            let norm = log_sum_exp(&logw).expect("non-empty grid");
            let u: f64 = rand::Rng::random(&mut rng);
            let mut acc = 0.0;
            let mut pick = cells[cells.len() - 1];
            for (c, l) in cells.iter().zip(&logw) {
                acc += (l - norm).exp();
                if u < acc {
                    pick = *c;
                    break;
                }
            }
            let theta = conjugate(prior, n1 + n2, pick.0 + pick.1, a).sample(&mut rng);
            (theta, pick)
        };
        let (ta, (xa1, xa2)) = group(&self.prior_a, train.n_a, test.n_a);
        let (tb, (xb1, xb2)) = group(&self.prior_b, train.n_b, test.n_b);
        Ok(((ta, tb), (xa1, xb1), (xa2, xb2)))
    }

    /// Realized gain `D_alpha[p(theta | x) || p(theta)]`, summed over groups.
    pub fn conditional_gain(&self, alloc: &Allocation, x: Outcome, order: Order) -> Result<f64> {
        let (pa, pb) = self.posterior(alloc, x)?;
        Ok(renyi_beta(&pa, &self.prior_a, order)? + renyi_beta(&pb, &self.prior_b, order)?)
    }

    /// Beta-Binomial log pmf of a test outcome under the given per-group
    /// (possibly tilted) posterior shapes.
    pub fn log_predictive_pmf(&self, posterior: &(BetaDist, BetaDist), test_alloc: &Allocation, x: Outcome) -> Result<f64> {
        self.check_outcome(test_alloc, x)?;
        Ok(beta_binomial_log_pmf(&posterior.0, test_alloc.n_a, x.0)
            + beta_binomial_log_pmf(&posterior.1, test_alloc.n_b, x.1))
    }
}

fn xlog(count: f64, p: f64) -> f64 {
    if count == 0.0 {
        0.0
    } else {
        count * p.ln()
    }
}

#[derive(Debug, Clone)]
pub struct AbPrepared {
    alloc: Allocation,
}

impl GenerativeModel for ABModel {
    type Design = Allocation;
    type Prepared = AbPrepared;
    type Param = (f64, f64);
    type Outcome = Outcome;

    fn prepare(&self, alloc: &Allocation) -> Result<AbPrepared> {
        self.check_alloc(alloc)?;
        Ok(AbPrepared { alloc: *alloc })
    }

    fn sample_prior(&self, rng: &mut Rng) -> (f64, f64) {
        (self.prior_a.sample(rng), self.prior_b.sample(rng))
    }

    fn sample_outcome(&self, prepared: &AbPrepared, theta: &(f64, f64), rng: &mut Rng) -> Outcome {
        let draw = |n: u32, p: f64, rng: &mut Rng| {
            Binomial::new(n as u64, p.clamp(0.0, 1.0)).expect("probability in [0, 1]").sample(rng) as u32
        };
        (draw(prepared.alloc.n_a, theta.0, rng), draw(prepared.alloc.n_b, theta.1, rng))
    }

    fn log_likelihood(&self, prepared: &AbPrepared, x: &Outcome, theta: &(f64, f64)) -> f64 {
        let group = |n: u32, x: u32, p: f64| {
            let (xf, rf) = (x as f64, (n - x) as f64);
            ln_choose(n, x) + xlog(xf, p) + xlog(rf, 1.0 - p)
        };
        group(prepared.alloc.n_a, x.0, theta.0) + group(prepared.alloc.n_b, x.1, theta.1)
    }

    fn log_marginal(&self, prepared: &AbPrepared, x: &Outcome) -> Option<f64> {
        self.marginal_log_pmf(&prepared.alloc, *x).ok()
    }
}
