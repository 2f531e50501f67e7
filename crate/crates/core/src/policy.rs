//! PAC-Bayes design policies.
//!
//! A policy is a distribution over designs. For a finite design set the
//! KL-regularized objective `E_pi[I] - KL(pi || pi0) / lambda` is maximized
//! in closed form by the Gibbs policy; for box-constrained continuous
//! designs a diagonal Gaussian policy is trained by stochastic ascent.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::DesignBox;
use crate::error::{Error, Result};
use crate::primitives::{log_sum_exp, RegularityConstants};
use crate::rng::{Rng, Seed};

const NORMALIZATION_TOL: f64 = 1e-12;

/// Categorical distribution over a finite list of designs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePolicy<D> {
    support: Vec<D>,
    log_probs: Vec<f64>,
}

impl<D: Clone + PartialEq> DiscretePolicy<D> {
    pub fn new(support: Vec<D>, log_probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != log_probs.len() {
            return Err(Error::invalid("support must be non-empty and match the probability vector"));
        }
        for (i, d) in support.iter().enumerate() {
            if support[..i].contains(d) {
                return Err(Error::invalid(format!("duplicate design at position {i}")));
            }
        }
        if log_probs.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(Error::invalid("log-probabilities must not be NaN or +inf"));
        }
        let total: f64 = log_probs.iter().map(|l| l.exp()).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(DiscretePolicy { support, log_probs })
    }

    /// Normalizes unnormalized log-weights.
    pub fn from_log_weights(support: Vec<D>, log_weights: &[f64]) -> Result<Self> {
        let norm = log_sum_exp(log_weights)?;
        if !norm.is_finite() {
            return Err(Error::invalid("log-weights have no finite mass"));
        }
        DiscretePolicy::new(support, log_weights.iter().map(|l| l - norm).collect())
    }

    pub fn uniform(support: Vec<D>) -> Result<Self> {
        let k = support.len();
        DiscretePolicy::from_log_weights(support, &vec![0.0; k])
    }

    pub fn support(&self) -> &[D] {
        &self.support
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Expectation of per-design values.
    pub fn expectation(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::invalid("value vector does not match the support"));
        }
        Ok(self
            .log_probs
            .iter()
            .zip(values)
            .filter(|(l, _)| **l > f64::NEG_INFINITY)
            .map(|(l, v)| l.exp() * v)
            .sum())
    }

    /// Index of a design drawn from the policy.
    pub fn sample_index<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, l) in self.log_probs.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                return i;
            }
        }
        self.log_probs.iter().rposition(|l| *l > f64::NEG_INFINITY).unwrap_or(0)
    }
}

/// Gibbs policy `pi ∝ pi0 exp(lambda * estimates)`, the exact maximizer of
/// the KL-regularized objective over policies on the same support.
pub fn gibbs_update<D: Clone + PartialEq>(
    prior: &DiscretePolicy<D>,
    estimates: &[f64],
    lambda: f64,
) -> Result<DiscretePolicy<D>> {
    if estimates.len() != prior.len() {
        return Err(Error::invalid(format!(
            "{} estimates for {} designs",
            estimates.len(),
            prior.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    if estimates.iter().any(|e| !e.is_finite()) {
        return Err(Error::invalid("estimates must be finite"));
    }
    if lambda == 0.0 {
        return Ok(prior.clone());
    }
    // centring keeps lambda * e moderate without changing the result
    let max = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = prior
        .log_probs
        .iter()
        .zip(estimates)
        .map(|(l, e)| l + lambda * (e - max))
        .collect();
    DiscretePolicy::from_log_weights(prior.support.clone(), &weights)
}

/// `KL(a || b)` between categorical policies on the same support.
pub fn kl_discrete<D: Clone + PartialEq>(a: &DiscretePolicy<D>, b: &DiscretePolicy<D>) -> Result<f64> {
    if a.support != b.support {
        return Err(Error::invalid("policies have different supports"));
    }
    let mut kl = 0.0;
    for (i, (la, lb)) in a.log_probs.iter().zip(&b.log_probs).enumerate() {
        if *la == f64::NEG_INFINITY {
            continue;
        }
        if *lb == f64::NEG_INFINITY {
            return Err(Error::InfiniteKl(format!("reference has no mass at design {i}")));
        }
        kl += la.exp() * (la - lb);
    }
    Ok(kl.max(0.0))
}

/// `E_pi[estimates] - KL(pi || prior) / lambda`.
pub fn pac_objective<D: Clone + PartialEq>(
    policy: &DiscretePolicy<D>,
    estimates: &[f64],
    prior: &DiscretePolicy<D>,
    lambda: f64,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    Ok(policy.expectation(estimates)? - kl_discrete(policy, prior)? / lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacConfig {
    pub lambda: f64,
    pub delta: f64,
    #[serde(default)]
    pub constants: RegularityConstants,
}

impl PacConfig {
    pub fn new(lambda: f64, delta: f64) -> Result<Self> {
        let c = PacConfig {
            lambda,
            delta,
            constants: RegularityConstants::default(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        self.constants.validate()
    }
}

/// High-probability lower bound on the policy's expected robust gain:
/// `mean - lambda L_f^2 C_h^2 / (2N) - (kl + log(1/delta)) / lambda`.
pub fn pac_lower_bound(empirical_mean: f64, kl: f64, config: &PacConfig, outer_n: usize) -> Result<f64> {
    config.validate()?;
    if outer_n == 0 {
        return Err(Error::invalid("outer_n must be at least 1"));
    }
    if !(kl >= 0.0) {
        return Err(Error::invalid(format!("kl must be nonnegative, got {kl}")));
    }
    let c = &config.constants;
    let lambda = config.lambda;
    Ok(empirical_mean
        - lambda * c.l_f.powi(2) * c.c_h.powi(2) / (2.0 * outer_n as f64)
        - (kl + (1.0 / config.delta).ln()) / lambda)
}

/// Diagonal Gaussian over designs; samples are clipped into the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxedGaussianPolicy {
    mean: Vec<f64>,
    log_std: Vec<f64>,
    design_box: DesignBox,
}

impl BoxedGaussianPolicy {
    /// Smallest allowed standard deviation, relative to the box width.
    pub const MIN_STD_FRACTION: f64 = 1e-3;

    pub fn new(mean: Vec<f64>, std: Vec<f64>, design_box: DesignBox) -> Result<Self> {
        if mean.len() != design_box.dim() || std.len() != design_box.dim() {
            return Err(Error::invalid("policy dimensions do not match the design box"));
        }
        if !design_box.contains(&mean) {
            return Err(Error::invalid("policy mean lies outside the design box"));
        }
        for (j, s) in std.iter().enumerate() {
            if !(*s > 0.0 && *s <= design_box.width(j)) {
                return Err(Error::invalid(format!(
                    "std[{j}] = {s} must lie in (0, {}]",
                    design_box.width(j)
                )));
            }
        }
        Ok(BoxedGaussianPolicy {
            mean,
            log_std: std.iter().map(|s| s.ln()).collect(),
            design_box,
        })
    }

    /// Centred in the box with a standard deviation of `fraction` times the
    /// width in each coordinate.
    pub fn centred(design_box: DesignBox, fraction: f64) -> Result<Self> {
        let std = (0..design_box.dim()).map(|j| fraction * design_box.width(j)).collect();
        BoxedGaussianPolicy::new(design_box.midpoint(), std, design_box)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    pub fn design_box(&self) -> &DesignBox {
        &self.design_box
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Unclipped Gaussian draw.
    fn sample_raw(&self, rng: &mut Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, l)| m + l.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// A design drawn from the policy and clipped into the box.
    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let mut x = self.sample_raw(rng);
        self.design_box.project(&mut x);
        x
    }

    fn enforce_invariants(&mut self) {
        self.design_box.project(&mut self.mean);
        for (j, l) in self.log_std.iter_mut().enumerate() {
            let w = self.design_box.width(j);
            *l = l.clamp((Self::MIN_STD_FRACTION * w).ln(), w.ln());
        }
    }

    fn satisfies_invariants(&self) -> bool {
        self.design_box.contains(&self.mean)
            && self
                .log_std
                .iter()
                .enumerate()
                .all(|(j, l)| l.is_finite() && l.exp() <= self.design_box.width(j) * (1.0 + 1e-12))
    }
}

/// `KL(a || b)` between diagonal Gaussian policies on the same box.
pub fn kl_gaussian_policies(a: &BoxedGaussianPolicy, b: &BoxedGaussianPolicy) -> Result<f64> {
    if a.design_box != b.design_box {
        return Err(Error::invalid("policies live on different design boxes"));
    }
    let kl: f64 = (0..a.dim())
        .map(|j| {
            let (va, vb) = ((2.0 * a.log_std[j]).exp(), (2.0 * b.log_std[j]).exp());
            b.log_std[j] - a.log_std[j] + (va + (a.mean[j] - b.mean[j]).powi(2)) / (2.0 * vb) - 0.5
        })
        .sum();
    Ok(kl.max(0.0))
}

/// Step sizes and budgets for [`mirror_descent`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr_mean: f64,
    pub lr_log_std: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            steps: 200,
            batch: 32,
            lr_mean: 0.05,
            lr_log_std: 0.01,
        }
    }
}

/// KL-regularized stochastic policy search.
///
/// Each step draws `batch` designs from the current policy, queries
/// `objective(design, seed)` once per design with seed
/// `seed.derive2(step, b)`, forms score-function gradients of
/// `E_pi[objective] - KL(pi || prior) / lambda` with a mean baseline, and
/// takes an ascent step on `(mean, log_std)` followed by projection onto
/// the box. Returns every iterate, starting with `prior`.
pub fn mirror_descent_path<F>(
    objective: F,
    prior: &BoxedGaussianPolicy,
    config: &PacConfig,
    ascent: &AscentConfig,
    seed: Seed,
) -> Result<Vec<BoxedGaussianPolicy>>
where
    F: Fn(&[f64], Seed) -> Result<f64> + Sync,
{
    config.validate()?;
    if ascent.steps == 0 || ascent.batch < 2 {
        return Err(Error::invalid("need at least one step and a batch of at least 2"));
    }
    let d = prior.dim();
    let prior_var: Vec<f64> = prior.log_std.iter().map(|l| (2.0 * l).exp()).collect();
    let mut policy = prior.clone();
    let mut path = Vec::with_capacity(ascent.steps + 1);
    path.push(policy.clone());
    for step in 0..ascent.steps {
        let mut rng = seed.derive2(step as u64, u64::MAX).rng();
        let raw: Vec<Vec<f64>> = (0..ascent.batch).map(|_| policy.sample_raw(&mut rng)).collect();
        let values: Vec<f64> = raw
            .par_iter()
            .enumerate()
            .map(|(b, u)| {
                let mut x = u.clone();
                policy.design_box.project(&mut x);
                objective(&x, seed.derive2(step as u64, b as u64))
                    .map_err(|e| e.context(format!("step {step}, design {b}")))
            })
            .collect::<Result<_>>()?;
        let baseline = values.iter().sum::<f64>() / values.len() as f64;
        let mut g_mean = vec![0.0; d];
        let mut g_log_std = vec![0.0; d];
        for (u, v) in raw.iter().zip(&values) {
            let adv = v - baseline;
            for j in 0..d {
                let s = policy.log_std[j].exp();
                let z = (u[j] - policy.mean[j]) / s;
                g_mean[j] += adv * z / s;
                g_log_std[j] += adv * (z * z - 1.0);
            }
        }
        let scale = 1.0 / ascent.batch as f64;
        for j in 0..d {
            let var = (2.0 * policy.log_std[j]).exp();
            let kl_mean = (policy.mean[j] - prior.mean[j]) / prior_var[j];
            let kl_log_std = var / prior_var[j] - 1.0;
            policy.mean[j] += ascent.lr_mean * (g_mean[j] * scale - kl_mean / config.lambda);
            policy.log_std[j] += ascent.lr_log_std * (g_log_std[j] * scale - kl_log_std / config.lambda);
        }
        policy.enforce_invariants();
        debug_assert!(policy.satisfies_invariants());
        path.push(policy.clone());
    }
    Ok(path)
}

/// Final iterate of [`mirror_descent_path`].
pub fn mirror_descent<F>(
    objective: F,
    prior: &BoxedGaussianPolicy,
    config: &PacConfig,
    ascent: &AscentConfig,
    seed: Seed,
) -> Result<BoxedGaussianPolicy>
where
    F: Fn(&[f64], Seed) -> Result<f64> + Sync,
{
    Ok(mirror_descent_path(objective, prior, config, ascent, seed)?
        .pop()
        .expect("path holds at least the prior"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn arms(k: usize) -> Vec<usize> {
        (0..k).collect()
    }

    #[test]
    fn gibbs_examples() {
        let prior = DiscretePolicy::uniform(arms(3)).unwrap();
        assert_eq!(gibbs_update(&prior, &[0.3, 0.1, 0.9], 0.0).unwrap(), prior);
        let g = gibbs_update(&prior, &[0.0, 0.0, 2f64.ln()], 1.0).unwrap();
        let p = g.probs();
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(p[2], 0.5, epsilon = 1e-14);
        let g = gibbs_update(&prior, &[0.0, 1.0, 0.5], 1e6).unwrap();
        assert!(g.probs()[1] >= 1.0 - 1e-6);
        assert!(gibbs_update(&prior, &[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn kl_examples() {
        let u = DiscretePolicy::uniform(arms(3)).unwrap();
        let q = DiscretePolicy::new(arms(3), vec![0.5f64.ln(), 0.25f64.ln(), 0.25f64.ln()]).unwrap();
        assert_eq!(kl_discrete(&u, &u).unwrap(), 0.0);
        let expected = (2.0 * (4.0f64 / 3.0).ln() + (2.0f64 / 3.0).ln()) / 3.0;
        assert_abs_diff_eq!(kl_discrete(&u, &q).unwrap(), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(expected, 0.0566, epsilon = 1e-4);
        let point = DiscretePolicy::new(arms(3), vec![0.0, f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap();
        assert!(matches!(kl_discrete(&u, &point), Err(Error::InfiniteKl(_))));
        assert!(kl_discrete(&point, &u).unwrap().is_finite());
        let other = DiscretePolicy::uniform(vec![5usize, 6, 7]).unwrap();
        assert!(kl_discrete(&u, &other).is_err());

        let b = DesignBox::unit(2);
        let a = BoxedGaussianPolicy::new(vec![0.1, 0.0], vec![0.2, 0.3], b.clone()).unwrap();
        let c = BoxedGaussianPolicy::new(vec![0.1, 0.0], vec![0.2, 0.6], b).unwrap();
        assert_eq!(kl_gaussian_policies(&a, &a).unwrap(), 0.0);
        assert_abs_diff_eq!(kl_gaussian_policies(&a, &c).unwrap(), 2f64.ln() - 0.375, epsilon = 1e-12);
    }

    #[test]
    fn policy_validation() {
        assert!(DiscretePolicy::new(vec![1, 1], vec![0.5f64.ln(); 2]).is_err());
        assert!(DiscretePolicy::new(vec![1, 2], vec![0.5f64.ln(), 0.6f64.ln()]).is_err());
        assert!(DiscretePolicy::<usize>::new(vec![], vec![]).is_err());
        let b = DesignBox::unit(1);
        assert!(BoxedGaussianPolicy::new(vec![1.5], vec![0.1], b.clone()).is_err());
        assert!(BoxedGaussianPolicy::new(vec![0.0], vec![2.5], b.clone()).is_err());
        assert!(BoxedGaussianPolicy::new(vec![0.0], vec![0.0], b).is_err());
    }

    #[test]
    fn pac_objective_at_prior_and_optimum() {
        let prior = DiscretePolicy::from_log_weights(arms(4), &[0.0, -1.0, 0.5, -0.2]).unwrap();
        let est = [0.2, 0.9, -0.4, 0.1];
        let at_prior = pac_objective(&prior, &est, &prior, 2.0).unwrap();
        assert_abs_diff_eq!(at_prior, prior.expectation(&est).unwrap(), epsilon = 1e-15);
        let g = gibbs_update(&prior, &est, 2.0).unwrap();
        let best = pac_objective(&g, &est, &prior, 2.0).unwrap();
        let mut rng = Seed(1).rng();
        for _ in 0..100 {
            let w: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let p = DiscretePolicy::from_log_weights(arms(4), &w).unwrap();
            assert!(pac_objective(&p, &est, &prior, 2.0).unwrap() <= best + 1e-12);
        }
    }

    #[test]
    fn lower_bound_examples() {
        let c = PacConfig::new(2.0, 0.05).unwrap();
        let v = pac_lower_bound(1.0, 0.5, &c, 100).unwrap();
        assert_abs_diff_eq!(v, 1.0 - 0.01 - (0.5 + 20f64.ln()) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v, -0.7578, epsilon = 1e-4);
        let free = PacConfig {
            constants: RegularityConstants {
                l_f: 0.0,
                ..RegularityConstants::default()
            },
            ..PacConfig::new(1.0, 1.0 - 1e-15).unwrap()
        };
        assert_abs_diff_eq!(pac_lower_bound(0.7, 0.0, &free, 10).unwrap(), 0.7, epsilon = 1e-12);
        assert!(PacConfig::new(0.0, 0.1).is_err());
        assert!(PacConfig::new(1.0, 1.0).is_err());
    }

    #[test]
    fn constant_objective_keeps_prior() {
        let prior = BoxedGaussianPolicy::centred(DesignBox::unit(3), 0.25).unwrap();
        let config = PacConfig::new(10.0, 0.05).unwrap();
        let out = mirror_descent(|_, _| Ok(1.0), &prior, &config, &AscentConfig::default(), Seed(4)).unwrap();
        assert!(kl_gaussian_policies(&out, &prior).unwrap() < 0.05);
    }

    #[test]
    fn quadratic_objective_finds_optimum() {
        let prior = BoxedGaussianPolicy::centred(DesignBox::unit(1), 0.25).unwrap();
        let config = PacConfig::new(1e4, 0.05).unwrap();
        for s in 0..8 {
            let out = mirror_descent(
                |x, _| Ok(-(x[0] - 0.3).powi(2)),
                &prior,
                &config,
                &AscentConfig::default(),
                Seed(s),
            )
            .unwrap();
            assert!((out.mean()[0] - 0.3).abs() < 0.05, "seed {s}: {}", out.mean()[0]);
        }
    }

    #[test]
    fn ascent_is_deterministic_and_errors_carry_context() {
        let prior = BoxedGaussianPolicy::centred(DesignBox::unit(2), 0.3).unwrap();
        let config = PacConfig::new(5.0, 0.05).unwrap();
        let cfg = AscentConfig { steps: 20, ..AscentConfig::default() };
        let f = |x: &[f64], s: Seed| Ok(x[0] - x[1] + (s.0 % 7) as f64 * 0.01);
        let a = mirror_descent(f, &prior, &config, &cfg, Seed(2)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| mirror_descent(f, &prior, &config, &cfg, Seed(2)).unwrap());
        assert_eq!(a, b);
        let err = mirror_descent(|_, _| Err(Error::Numeric("boom".into())), &prior, &config, &cfg, Seed(2)).unwrap_err();
        assert!(err.to_string().contains("step 0"), "{err}");
    }

    proptest! {
        #[test]
        fn gibbs_shift_invariant(est in prop::collection::vec(-5.0f64..5.0, 5), shift in -100.0f64..100.0, lambda in 0.01f64..20.0) {
            let prior = DiscretePolicy::from_log_weights(arms(5), &[0.0, 0.3, -0.7, 1.1, 0.2]).unwrap();
            let a = gibbs_update(&prior, &est, lambda).unwrap();
            let shifted: Vec<f64> = est.iter().map(|e| e + shift).collect();
            let b = gibbs_update(&prior, &shifted, lambda).unwrap();
            prop_assert!((a.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in a.probs().iter().zip(b.probs()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let value = pac_objective(&a, &est, &prior, lambda).unwrap();
            let terms: Vec<f64> = prior.log_probs().iter().zip(&est).map(|(l, e)| l + lambda * e).collect();
            let closed = log_sum_exp(&terms).unwrap() / lambda;
            prop_assert!((value - closed).abs() < 1e-10 * (1.0 + closed.abs()));
        }

        #[test]
        fn bound_below_empirical(mean in -2.0f64..2.0, kl in 0.0f64..5.0, lambda in 0.1f64..50.0, n in 1usize..1000) {
            let c = PacConfig::new(lambda, 0.1).unwrap();
            prop_assert!(pac_lower_bound(mean, kl, &c, n).unwrap() <= mean);
        }
    }
}
