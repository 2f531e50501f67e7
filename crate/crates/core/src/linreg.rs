//! Conjugate Gaussian linear regression `x = H(xi) theta + e`,
//! `e ~ N(0, sigma^2 I)`, `theta ~ N(mu0, Sigma0)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::DesignBox;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, spd_inverse, spd_log_det, symmetrize};
use crate::nmc::GenerativeModel;
use crate::primitives::Order;
use crate::renyi::{renyi_gaussian, GaussianDist};
use crate::rng::{Rng, Seed};

/// Rule mapping one design vector to a row of the design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMap {
    /// `[xi, 1]`: slope(s) plus intercept.
    #[default]
    Affine,
    /// The raw design vector.
    Identity,
}

impl FeatureMap {
    /// Length of a design vector for a parameter of dimension `param_dim`.
    pub fn design_dim(self, param_dim: usize) -> usize {
        match self {
            FeatureMap::Affine => param_dim - 1,
            FeatureMap::Identity => param_dim,
        }
    }
}

/// An ordered batch of design vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignBatch {
    designs: Vec<Vec<f64>>,
}

impl DesignBatch {
    pub fn new(designs: Vec<Vec<f64>>) -> Self {
        DesignBatch { designs }
    }

    pub fn single(design: Vec<f64>) -> Self {
        DesignBatch { designs: vec![design] }
    }

    /// Scalar designs, one measurement each.
    pub fn scalars(values: &[f64]) -> Self {
        DesignBatch {
            designs: values.iter().map(|&v| vec![v]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }

    pub fn designs(&self) -> &[Vec<f64>] {
        &self.designs
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &DesignBatch) -> DesignBatch {
        let mut designs = self.designs.clone();
        designs.extend(other.designs.iter().cloned());
        DesignBatch { designs }
    }
}

#[derive(Debug, Clone)]
pub struct LinRegModel {
    prior: GaussianDist,
    prior_precision: DMatrix<f64>,
    /// `Sigma0^{-1} mu0`.
    prior_shift: DVector<f64>,
    noise_var: f64,
    design_box: DesignBox,
    feature_map: FeatureMap,
}

impl LinRegModel {
    pub fn new(prior: GaussianDist, noise_var: f64, design_box: DesignBox, feature_map: FeatureMap) -> Result<Self> {
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::invalid(format!("noise variance must be positive, got {noise_var}")));
        }
        let d = prior.dim();
        if feature_map == FeatureMap::Affine && d < 2 {
            return Err(Error::invalid("the affine feature map needs a parameter of dimension at least 2"));
        }
        if design_box.dim() != feature_map.design_dim(d) {
            return Err(Error::invalid(format!(
                "design box has dimension {} but the feature map expects {}",
                design_box.dim(),
                feature_map.design_dim(d)
            )));
        }
        let prior_precision = prior.precision();
        let prior_shift = &prior_precision * prior.mean();
        Ok(LinRegModel {
            prior,
            prior_precision,
            prior_shift,
            noise_var,
            design_box,
            feature_map,
        })
    }

    /// Scalar design with slope and intercept, `mu0 = 0`, `Sigma0 = I`,
    /// `sigma^2 = 1`, designs in `[-1, 1]`.
    pub fn scalar_affine() -> Self {
        let prior = GaussianDist::isotropic(DVector::zeros(2), 1.0).expect("valid prior");
        LinRegModel::new(prior, 1.0, DesignBox::unit(1), FeatureMap::Affine).expect("valid model")
    }

    /// Raw linear map in `dim` dimensions with standard priors and unit box.
    pub fn linear(dim: usize) -> Self {
        let prior = GaussianDist::isotropic(DVector::zeros(dim), 1.0).expect("valid prior");
        LinRegModel::new(prior, 1.0, DesignBox::unit(dim), FeatureMap::Identity).expect("valid model")
    }

    pub fn prior(&self) -> &GaussianDist {
        &self.prior
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn design_box(&self) -> &DesignBox {
        &self.design_box
    }

    pub fn feature_map(&self) -> FeatureMap {
        self.feature_map
    }

    pub fn param_dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn design_dim(&self) -> usize {
        self.design_box.dim()
    }

    /// Stacked feature rows, one per design. An empty batch gives a `0 x d`
    /// matrix (no measurements).
    pub fn design_matrix(&self, batch: &DesignBatch) -> Result<DMatrix<f64>> {
        let d = self.param_dim();
        let mut h = DMatrix::zeros(batch.len(), d);
        for (i, xi) in batch.designs().iter().enumerate() {
            if xi.len() != self.design_dim() {
                return Err(Error::invalid(format!(
                    "design {i} has dimension {} but the model expects {}",
                    xi.len(),
                    self.design_dim()
                )));
            }
            if !self.design_box.contains(xi) {
                return Err(Error::invalid(format!("design {i} lies outside the design box")));
            }
            for (j, v) in xi.iter().enumerate() {
                h[(i, j)] = *v;
            }
            if self.feature_map == FeatureMap::Affine {
                h[(i, d - 1)] = 1.0;
            }
        }
        Ok(h)
    }

    fn check_outcomes(&self, batch: &DesignBatch, x: &DVector<f64>) -> Result<()> {
        if x.len() != batch.len() {
            return Err(Error::invalid(format!(
                "{} outcomes for a batch of {} designs",
                x.len(),
                batch.len()
            )));
        }
        Ok(())
    }

    /// Conjugate posterior `p(theta | x, xi)`.
    pub fn posterior(&self, batch: &DesignBatch, x: &DVector<f64>) -> Result<GaussianDist> {
        self.tilted_posterior(batch, x, Order::SHANNON)
    }

    /// Posterior with the likelihood raised to the power `alpha`.
    pub fn tilted_posterior(&self, batch: &DesignBatch, x: &DVector<f64>, order: Order) -> Result<GaussianDist> {
        self.check_outcomes(batch, x)?;
        let h = self.design_matrix(batch)?;
        let scale = order.alpha() / self.noise_var;
        let precision = &self.prior_precision + h.transpose() * &h * scale;
        let cov = symmetrize(&spd_inverse(&precision)?);
        let mean = &cov * (&self.prior_shift + h.transpose() * x * scale);
        GaussianDist::new(mean, cov)
    }

    /// `Sigma_theta* = [Sigma0^{-1} + (alpha / sigma^2) H^T H]^{-1}`; free of `x`.
    pub fn tilted_posterior_cov(&self, h: &DMatrix<f64>, order: Order) -> Result<DMatrix<f64>> {
        let precision = &self.prior_precision + h.transpose() * h * (order.alpha() / self.noise_var);
        Ok(symmetrize(&spd_inverse(&precision)?))
    }

    /// `N(H mu0, alpha H Sigma0 H^T + sigma^2 I)`.
    pub fn tilted_marginal(&self, batch: &DesignBatch, order: Order) -> Result<GaussianDist> {
        let h = self.design_matrix(batch)?;
        self.tilted_marginal_from_matrix(&h, order)
    }

    fn tilted_marginal_from_matrix(&self, h: &DMatrix<f64>, order: Order) -> Result<GaussianDist> {
        if h.nrows() == 0 {
            return Err(Error::invalid("empty design batch has no outcome distribution"));
        }
        let n = h.nrows();
        let cov = symmetrize(&(h * self.prior.cov() * h.transpose() * order.alpha()))
            + DMatrix::identity(n, n) * self.noise_var;
        GaussianDist::new(h * self.prior.mean(), cov)
    }

    /// Prior predictive distribution of the outcomes.
    pub fn marginal(&self, batch: &DesignBatch) -> Result<GaussianDist> {
        self.tilted_marginal(batch, Order::SHANNON)
    }

    /// Sibson's alpha-mutual information `1/2 log|(alpha / sigma^2) H Sigma0 H^T + I|`.
    pub fn sibson_mi(&self, batch: &DesignBatch, order: Order) -> Result<f64> {
        let h = self.design_matrix(batch)?;
        self.sibson_mi_from_matrix(&h, order)
    }

    fn sibson_mi_from_matrix(&self, h: &DMatrix<f64>, order: Order) -> Result<f64> {
        let n = h.nrows();
        if n == 0 {
            return Ok(0.0);
        }
        let m = symmetrize(&(h * self.prior.cov() * h.transpose() * (order.alpha() / self.noise_var)))
            + DMatrix::identity(n, n);
        Ok((0.5 * spd_log_det(&m)?).max(0.0))
    }

    /// Worst-case joint distribution of `(theta, x)` stacked as one vector
    /// (parameter first).
    pub fn worst_case_joint(&self, batch: &DesignBatch, order: Order) -> Result<GaussianDist> {
        let h = self.design_matrix(batch)?;
        let a = order.alpha();
        let d = self.param_dim();
        let n = h.nrows();
        let s0 = self.prior.cov();
        let s_theta = self.tilted_posterior_cov(&h, order)?;
        let marginal = self.tilted_marginal_from_matrix(&h, order)?;
        let mut cov = DMatrix::zeros(d + n, d + n);
        cov.view_mut((0, 0), (d, d)).copy_from(&(s0 * a + s_theta * (1.0 - a)));
        let cross = s0 * h.transpose() * a;
        cov.view_mut((0, d), (d, n)).copy_from(&cross);
        cov.view_mut((d, 0), (n, d)).copy_from(&cross.transpose());
        cov.view_mut((d, d), (n, n)).copy_from(marginal.cov());
        let mut mean = DVector::zeros(d + n);
        mean.rows_mut(0, d).copy_from(self.prior.mean());
        mean.rows_mut(d, n).copy_from(marginal.mean());
        GaussianDist::new(mean, symmetrize(&cov)).map_err(|e| Error::Numeric(format!("worst-case joint covariance: {e}")))
    }

    /// `count` i.i.d. draws `(theta, x)` from the worst-case joint.
    pub fn sample_worst_case(
        &self,
        batch: &DesignBatch,
        order: Order,
        count: usize,
        seed: Seed,
    ) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
        if count == 0 {
            return Err(Error::invalid("count must be at least 1"));
        }
        let joint = self.worst_case_joint(batch, order)?;
        let d = self.param_dim();
        let n = batch.len();
        let mut rng = seed.rng();
        Ok((0..count)
            .map(|_| {
                let z = joint.sample(&mut rng);
                (z.rows(0, d).into_owned(), z.rows(d, n).into_owned())
            })
            .collect())
    }

    /// Realized gain `D_alpha[p(theta | x, xi) || p(theta)]`; KL at `alpha = 1`.
    pub fn conditional_gain(&self, batch: &DesignBatch, x: &DVector<f64>, order: Order) -> Result<f64> {
        let post = self.posterior(batch, x)?;
        renyi_gaussian(&post, &self.prior, order)
    }

    /// `E[conditional_gain(x, order)]` for `x` drawn from the tilted marginal
    /// at order `sampling`.
    ///
    /// The posterior mean moves affinely with `x` and the divergence is a
    /// quadratic in that shift plus a constant, so the expectation is the
    /// gain at `x = H mu0` plus a trace term.
    pub fn expected_conditional_gain(&self, batch: &DesignBatch, order: Order, sampling: Order) -> Result<f64> {
        let h = self.design_matrix(batch)?;
        if h.nrows() == 0 {
            return Ok(0.0);
        }
        let center = &h * self.prior.mean();
        let base = self.conditional_gain(batch, &center, order)?;
        let post_cov = self.tilted_posterior_cov(&h, Order::SHANNON)?;
        let a = order.alpha();
        let gain_map = &post_cov * h.transpose() / self.noise_var;
        let mix = self.prior.cov() * a + &post_cov * (1.0 - a);
        let x_cov = self.tilted_marginal_from_matrix(&h, sampling)?.cov().clone();
        let inner = &gain_map * x_cov * gain_map.transpose();
        let trace = (spd_inverse(&symmetrize(&mix))? * inner).trace();
        Ok(base + 0.5 * a * trace)
    }

    /// Sum over test points of the posterior-predictive log density.
    pub fn log_predictive_density(
        &self,
        posterior: &GaussianDist,
        test_batch: &DesignBatch,
        test_outcomes: &DVector<f64>,
    ) -> Result<f64> {
        if posterior.dim() != self.param_dim() {
            return Err(Error::invalid("posterior dimension does not match the model"));
        }
        self.check_outcomes(test_batch, test_outcomes)?;
        let h = self.design_matrix(test_batch)?;
        let mut total = 0.0;
        for i in 0..h.nrows() {
            let row = h.row(i).transpose();
            let mean = row.dot(posterior.mean());
            let var = (posterior.cov() * &row).dot(&row) + self.noise_var;
            total += -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (test_outcomes[i] - mean).powi(2) / var);
        }
        Ok(total)
    }

    /// Batch of `batch_size` designs maximizing `sibson_mi`.
    ///
    /// Along any single design coordinate the objective is a monotone
    /// transform of a convex quadratic, so a maximizer sits at a vertex of
    /// the box. Up to 16 free coordinates the vertices are enumerated;
    /// beyond that, coordinate flips from the upper vertex until no flip
    /// improves.
    pub fn optimal_batch(&self, batch_size: usize, order: Order) -> Result<(DesignBatch, f64)> {
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        let p = self.design_dim();
        let k = batch_size * p;
        let lower = self.design_box.lower();
        let upper = self.design_box.upper();
        let vertex = |mask: &[bool]| {
            DesignBatch::new(
                (0..batch_size)
                    .map(|i| (0..p).map(|j| if mask[i * p + j] { upper[j] } else { lower[j] }).collect())
                    .collect(),
            )
        };
        if k <= 16 {
            let mut best: Option<(DesignBatch, f64)> = None;
            for bits in 0..(1u32 << k) {
                let mask: Vec<bool> = (0..k).map(|b| bits >> b & 1 == 1).collect();
                let batch = vertex(&mask);
                let v = self.sibson_mi(&batch, order)?;
                if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                    best = Some((batch, v));
                }
            }
            return Ok(best.expect("at least one vertex"));
        }
        let mut mask = vec![true; k];
        let mut value = self.sibson_mi(&vertex(&mask), order)?;
        loop {
            let mut improved = false;
            for b in 0..k {
                mask[b] = !mask[b];
                let v = self.sibson_mi(&vertex(&mask), order)?;
                if v > value + 1e-14 {
                    value = v;
                    improved = true;
                } else {
                    mask[b] = !mask[b];
                }
            }
            if !improved {
                return Ok((vertex(&mask), value));
            }
        }
    }
}

/// Per-design cache for simulation.
#[derive(Debug, Clone)]
pub struct LinRegPrepared {
    h: DMatrix<f64>,
    marginal: GaussianDist,
    log_norm: f64,
    /// Mean and Cholesky factor of `H theta` under the prior, when it has
    /// fewer coordinates than `theta` and a nonsingular covariance.
    projected_prior: Option<(DVector<f64>, DMatrix<f64>)>,
}

impl GenerativeModel for LinRegModel {
    type Design = DesignBatch;
    type Prepared = LinRegPrepared;
    type Param = DVector<f64>;
    type Outcome = DVector<f64>;

    fn prepare(&self, batch: &DesignBatch) -> Result<LinRegPrepared> {
        let h = self.design_matrix(batch)?;
        let marginal = self.tilted_marginal_from_matrix(&h, Order::SHANNON)?;
        let projected_prior = if h.nrows() < h.ncols() {
            let cov = symmetrize(&(&h * self.prior.cov() * h.transpose()));
            cholesky_lower(&cov).ok().map(|l| (&h * self.prior.mean(), l))
        } else {
            None
        };
        Ok(LinRegPrepared {
            h,
            marginal,
            log_norm: (2.0 * std::f64::consts::PI * self.noise_var).ln(),
            projected_prior,
        })
    }

    fn sample_prior(&self, rng: &mut Rng) -> DVector<f64> {
        self.prior.sample(rng)
    }

    fn sample_outcome(&self, prepared: &LinRegPrepared, theta: &DVector<f64>, rng: &mut Rng) -> DVector<f64> {
        let sd = self.noise_var.sqrt();
        let mean = &prepared.h * theta;
        DVector::from_fn(mean.len(), |i, _| mean[i] + sd * rand::Rng::sample::<f64, _>(rng, rand_distr::StandardNormal))
    }

    fn log_likelihood(&self, prepared: &LinRegPrepared, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        let h = &prepared.h;
        let mut rss = 0.0;
        for i in 0..x.len() {
            let mut fit = 0.0;
            for j in 0..h.ncols() {
                fit += h[(i, j)] * theta[j];
            }
            rss += (x[i] - fit).powi(2);
        }
        -0.5 * (x.len() as f64 * prepared.log_norm + rss / self.noise_var)
    }

    fn log_marginal(&self, prepared: &LinRegPrepared, x: &DVector<f64>) -> Option<f64> {
        Some(prepared.marginal.log_density(x))
    }

    fn log_likelihood_at_prior_draw(&self, prepared: &LinRegPrepared, x: &DVector<f64>, rng: &mut Rng) -> f64 {
        let Some((mean, chol)) = &prepared.projected_prior else {
            let theta = self.prior.sample(rng);
            return self.log_likelihood(prepared, x, &theta);
        };
        // H theta ~ N(H mu0, H Sigma0 H^T): n normals instead of d
        let n = x.len();
        let z: Vec<f64> = (0..n).map(|_| rand::Rng::sample(rng, rand_distr::StandardNormal)).collect();
        let mut rss = 0.0;
        for i in 0..n {
            let mut fit = mean[i];
            for (k, zk) in z.iter().enumerate().take(i + 1) {
                fit += chol[(i, k)] * zk;
            }
            rss += (x[i] - fit).powi(2);
        }
        -0.5 * (n as f64 * prepared.log_norm + rss / self.noise_var)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::renyi::kl_gaussian;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn order(a: f64) -> Order {
        Order::new(a).unwrap()
    }

    fn one_dim() -> LinRegModel {
        let prior = GaussianDist::univariate(0.0, 1.0).unwrap();
        LinRegModel::new(prior, 1.0, DesignBox::unit(1), FeatureMap::Identity).unwrap()
    }

    fn random_model(seed: u64, d: usize) -> LinRegModel {
        use rand::Rng as _;
        let mut rng = Seed(seed).rng();
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.2;
        let mean = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let prior = GaussianDist::new(mean, symmetrize(&cov)).unwrap();
        LinRegModel::new(prior, rng.random_range(0.2..2.0), DesignBox::unit(d), FeatureMap::Identity).unwrap()
    }

    #[test]
    fn design_matrix_rows() {
        let m = LinRegModel::scalar_affine();
        let h = m.design_matrix(&DesignBatch::scalars(&[0.5])).unwrap();
        assert_eq!(h.as_slice(), &[0.5, 1.0]);
        let h = m.design_matrix(&DesignBatch::scalars(&[0.1, -0.2, 0.3])).unwrap();
        assert_eq!(h.column(0).as_slice(), &[0.1, -0.2, 0.3]);
        assert!(m.design_matrix(&DesignBatch::scalars(&[1.5])).is_err());
        let h = one_dim().design_matrix(&DesignBatch::scalars(&[0.7])).unwrap();
        assert_eq!(h.as_slice(), &[0.7]);
    }

    #[test]
    fn conjugate_update_examples() {
        let m = one_dim();
        let batch = DesignBatch::scalars(&[1.0]);
        let x = DVector::from_element(1, 2.0);
        let post = m.posterior(&batch, &x).unwrap();
        assert_abs_diff_eq!(post.mean()[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(post.cov()[(0, 0)], 0.5, epsilon = 1e-12);
        let tilted = m.tilted_posterior(&batch, &x, order(0.5)).unwrap();
        assert_abs_diff_eq!(tilted.mean()[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tilted.cov()[(0, 0)], 2.0 / 3.0, epsilon = 1e-12);
        let near_prior = m.tilted_posterior(&batch, &x, order(1e-9)).unwrap();
        assert!((near_prior.mean()[0]).abs() < 1e-6);
        assert!((near_prior.cov()[(0, 0)] - 1.0).abs() < 1e-6);
        assert!(m.posterior(&batch, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn zero_information_and_huge_noise() {
        let m = one_dim();
        let batch = DesignBatch::scalars(&[0.0]);
        let post = m.posterior(&batch, &DVector::from_element(1, 3.0)).unwrap();
        assert_eq!(post.mean()[0], 0.0);
        assert_eq!(post.cov()[(0, 0)], 1.0);
        assert_eq!(m.sibson_mi(&batch, Order::SHANNON).unwrap(), 0.0);

        let noisy = LinRegModel::new(m.prior().clone(), 1e8, DesignBox::unit(1), FeatureMap::Identity).unwrap();
        let post = noisy
            .posterior(&DesignBatch::scalars(&[1.0]), &DVector::from_element(1, 5.0))
            .unwrap();
        assert!(post.mean()[0].abs() < 1e-6);
        assert!((post.cov()[(0, 0)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn tilted_posterior_at_shannon_is_posterior() {
        let m = LinRegModel::scalar_affine();
        let batch = DesignBatch::scalars(&[0.3, -0.9]);
        let x = DVector::from_vec(vec![0.4, -1.2]);
        assert_eq!(m.posterior(&batch, &x).unwrap(), m.tilted_posterior(&batch, &x, Order::SHANNON).unwrap());
    }

    #[test]
    fn tilted_precision_interpolates() {
        let m = random_model(4, 3);
        let batch = DesignBatch::new(vec![vec![0.2, -0.5, 0.9], vec![1.0, 0.0, -0.3]]);
        let h = m.design_matrix(&batch).unwrap();
        let x = DVector::from_vec(vec![0.1, 0.2]);
        for a in [0.1, 0.5, 0.9] {
            let t = m.tilted_posterior(&batch, &x, order(a)).unwrap();
            let expected = m.prior().precision() + h.transpose() * &h * (a / m.noise_var());
            assert!((t.precision() - expected).amax() < 1e-9);
        }
    }

    #[test]
    fn tilted_marginal_examples() {
        let m = LinRegModel::scalar_affine();
        let batch = DesignBatch::scalars(&[1.0]);
        let t = m.tilted_marginal(&batch, order(0.5)).unwrap();
        assert_abs_diff_eq!(t.cov()[(0, 0)], 2.0, epsilon = 1e-12);
        let full = m.marginal(&batch).unwrap();
        assert_abs_diff_eq!(full.cov()[(0, 0)], 3.0, epsilon = 1e-12);
        let shifted = random_model(2, 2);
        let b = DesignBatch::new(vec![vec![0.5, 0.5]]);
        let h = shifted.design_matrix(&b).unwrap();
        for a in [0.2, 0.7, 1.0] {
            let t = shifted.tilted_marginal(&b, order(a)).unwrap();
            assert!((t.mean() - &h * shifted.prior().mean()).amax() < 1e-12);
        }
    }

    #[test]
    fn sibson_examples() {
        let m = LinRegModel::scalar_affine();
        let v = m.sibson_mi(&DesignBatch::scalars(&[1.0]), Order::SHANNON).unwrap();
        assert_abs_diff_eq!(v, 0.5 * 3f64.ln(), epsilon = 1e-12);
        let v = m.sibson_mi(&DesignBatch::scalars(&[1.0]), order(0.3)).unwrap();
        assert_abs_diff_eq!(v, 0.5 * (0.3 * 2.0 + 1.0f64).ln(), epsilon = 1e-12);
        assert!(m.sibson_mi(&DesignBatch::scalars(&[1.0, -0.4]), order(1e-6)).unwrap() < 1e-5);
    }

    #[test]
    fn worst_case_joint_is_geometric_mixture_factorization() {
        // The joint must factor as p_alpha(x) q*(theta | x): x-marginal is the
        // tilted marginal and the conditional of theta is the tilted posterior.
        let m = random_model(7, 2);
        let batch = DesignBatch::new(vec![vec![0.4, -0.8], vec![-1.0, 0.3], vec![0.0, 0.9]]);
        let a = order(0.4);
        let joint = m.worst_case_joint(&batch, a).unwrap();
        let d = 2;
        let n = 3;
        let marginal = m.tilted_marginal(&batch, a).unwrap();
        let sxx = joint.cov().view((d, d), (n, n)).into_owned();
        assert!((&sxx - marginal.cov()).amax() < 1e-12);
        let stx = joint.cov().view((0, d), (d, n)).into_owned();
        let stt = joint.cov().view((0, 0), (d, d)).into_owned();
        let sxx_inv = spd_inverse(&sxx).unwrap();
        let cond_cov = &stt - &stx * &sxx_inv * stx.transpose();
        let x = DVector::from_vec(vec![0.3, -1.1, 2.0]);
        let cond_mean = joint.mean().rows(0, d) + &stx * &sxx_inv * (&x - joint.mean().rows(d, n));
        let tilted = m.tilted_posterior(&batch, &x, a).unwrap();
        assert!((cond_cov - tilted.cov()).amax() < 1e-10);
        assert!((cond_mean - tilted.mean()).amax() < 1e-10);
    }

    #[test]
    fn worst_case_joint_at_shannon_is_nominal() {
        let m = LinRegModel::scalar_affine();
        let batch = DesignBatch::scalars(&[0.5, -0.5]);
        let h = m.design_matrix(&batch).unwrap();
        let joint = m.worst_case_joint(&batch, Order::SHANNON).unwrap();
        let mut nominal = DMatrix::zeros(4, 4);
        nominal.view_mut((0, 0), (2, 2)).copy_from(m.prior().cov());
        nominal.view_mut((0, 2), (2, 2)).copy_from(&(m.prior().cov() * h.transpose()));
        nominal.view_mut((2, 0), (2, 2)).copy_from(&(&h * m.prior().cov()));
        nominal
            .view_mut((2, 2), (2, 2))
            .copy_from(&(&h * m.prior().cov() * h.transpose() + DMatrix::identity(2, 2)));
        assert!((joint.cov() - nominal).amax() < 1e-12);
    }

    #[test]
    fn worst_case_sample_moments() {
        let m = LinRegModel::scalar_affine();
        let batch = DesignBatch::scalars(&[0.8]);
        let a = order(0.5);
        let draws = m.sample_worst_case(&batch, a, 100_000, Seed(11)).unwrap();
        let n = draws.len() as f64;
        let h = m.design_matrix(&batch).unwrap();
        let s_theta = m.tilted_posterior_cov(&h, a).unwrap();
        let top_left = m.prior().cov() * 0.5 + s_theta * 0.5;
        let mean_t0 = draws.iter().map(|(t, _)| t[0]).sum::<f64>() / n;
        let mean_x = draws.iter().map(|(_, x)| x[0]).sum::<f64>() / n;
        let var_t0 = draws.iter().map(|(t, _)| (t[0] - mean_t0).powi(2)).sum::<f64>() / (n - 1.0);
        let var_x = draws.iter().map(|(_, x)| (x[0] - mean_x).powi(2)).sum::<f64>() / (n - 1.0);
        let marginal = m.tilted_marginal(&batch, a).unwrap();
        assert!(mean_t0.abs() < 3.0 * (top_left[(0, 0)] / n).sqrt());
        assert!(mean_x.abs() < 3.0 * (marginal.cov()[(0, 0)] / n).sqrt());
        // variance of a sample variance is about 2 sigma^4 / n
        let se = |v: f64| v * (2.0 / n).sqrt();
        assert!((var_t0 - top_left[(0, 0)]).abs() < 4.0 * se(top_left[(0, 0)]));
        assert!((var_x - marginal.cov()[(0, 0)]).abs() < 4.0 * se(marginal.cov()[(0, 0)]));
        assert_eq!(draws[..10], m.sample_worst_case(&batch, a, 10, Seed(11)).unwrap()[..]);
    }

    #[test]
    fn conditional_gain_basics() {
        let m = one_dim();
        let batch = DesignBatch::scalars(&[0.0]);
        assert_eq!(m.conditional_gain(&batch, &DVector::zeros(1), order(0.5)).unwrap(), 0.0);
        let b = DesignBatch::scalars(&[1.0]);
        let x = DVector::from_element(1, 1.3);
        let kl = kl_gaussian(&m.posterior(&b, &x).unwrap(), m.prior()).unwrap();
        assert_abs_diff_eq!(m.conditional_gain(&b, &x, Order::SHANNON).unwrap(), kl, epsilon = 1e-14);
    }

    #[test]
    fn predictive_density_examples() {
        let m = one_dim();
        let post = GaussianDist::univariate(0.5, 0.25).unwrap();
        let test = DesignBatch::scalars(&[1.0]);
        let lp = m.log_predictive_density(&post, &test, &DVector::from_element(1, 0.5)).unwrap();
        assert_abs_diff_eq!(lp, -0.5 * (2.0 * std::f64::consts::PI * 1.25).ln(), epsilon = 1e-12);
        let tight = GaussianDist::univariate(0.5, 1e-12).unwrap();
        let lp = m.log_predictive_density(&tight, &test, &DVector::from_element(1, 0.5)).unwrap();
        assert_abs_diff_eq!(lp, -0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-9);
        let wide = GaussianDist::univariate(0.5, 10.0).unwrap();
        let near = DVector::from_element(1, 0.6);
        assert!(
            m.log_predictive_density(&wide, &test, &near).unwrap()
                < m.log_predictive_density(&post, &test, &near).unwrap()
        );
        assert!(m.log_predictive_density(&post, &test, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn optimal_batch_enumeration_and_greedy_agree() {
        let m = LinRegModel::linear(10);
        let (batch, v) = m.optimal_batch(1, order(0.5)).unwrap();
        assert_abs_diff_eq!(v, 0.5 * (1.0f64 + 0.5 * 10.0).ln(), epsilon = 1e-12);
        assert!(batch.designs()[0].iter().all(|c| c.abs() == 1.0));
        let m = LinRegModel::scalar_affine();
        let (_, v) = m.optimal_batch(2, Order::SHANNON).unwrap();
        // two measurements at +-1: det(I + H H^T) with rows (1,1), (-1,1)
        assert_abs_diff_eq!(v, 0.5 * 9f64.ln(), epsilon = 1e-12);
        let m = LinRegModel::linear(17);
        let (_, v) = m.optimal_batch(1, order(0.5)).unwrap();
        assert_abs_diff_eq!(v, 0.5 * (1.0f64 + 0.5 * 17.0).ln(), epsilon = 1e-12);
    }

    #[test]
    fn generative_model_matches_closed_forms() {
        let m = LinRegModel::scalar_affine();
        let batch = DesignBatch::scalars(&[0.6, -0.2]);
        let prep = m.prepare(&batch).unwrap();
        let theta = DVector::from_vec(vec![0.3, -0.4]);
        let x = DVector::from_vec(vec![0.1, 0.9]);
        // Bayes: log p(x|theta) + log p(theta) - log p(x) = log p(theta|x)
        let lhs = m.log_likelihood(&prep, &x, &theta) + m.prior().log_density(&theta) - m.log_marginal(&prep, &x).unwrap();
        let rhs = m.posterior(&batch, &x).unwrap().log_density(&theta);
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
    }

    #[test]
    fn projected_prior_draw_has_the_generic_law() {
        let m = LinRegModel::linear(10);
        let batch = DesignBatch::new(vec![
            vec![0.3, -1.0, 0.5, 1.0, 0.0, 0.2, -0.7, 1.0, -1.0, 0.4],
            vec![1.0; 10],
        ]);
        let prep = m.prepare(&batch).unwrap();
        assert!(prep.projected_prior.is_some());
        let x = DVector::from_vec(vec![0.8, -0.5]);
        let n = 200_000;
        let moments = |values: Vec<f64>| {
            let mean = values.iter().sum::<f64>() / n as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            (mean, var)
        };
        let mut rng = Seed(5).rng();
        let fused = moments((0..n).map(|_| m.log_likelihood_at_prior_draw(&prep, &x, &mut rng)).collect());
        let generic = moments(
            (0..n)
                .map(|_| {
                    let theta = m.sample_prior(&mut rng);
                    m.log_likelihood(&prep, &x, &theta)
                })
                .collect(),
        );
        let se = (generic.1 / n as f64).sqrt();
        assert!((fused.0 - generic.0).abs() < 5.0 * se, "{fused:?} vs {generic:?}");
        assert!((fused.1 / generic.1 - 1.0).abs() < 0.05, "{fused:?} vs {generic:?}");
        // no projection when the design carries no information
        let zero = m.prepare(&DesignBatch::single(vec![0.0; 10])).unwrap();
        assert!(zero.projected_prior.is_none());
    }

    #[test]
    fn expected_gain_closed_form() {
        let m = LinRegModel::scalar_affine();
        let batch = DesignBatch::scalars(&[0.7, -0.4]);
        // Shannon identity: the average KL gain under the nominal marginal is the MI
        let e = m.expected_conditional_gain(&batch, Order::SHANNON, Order::SHANNON).unwrap();
        assert_abs_diff_eq!(e, m.sibson_mi(&batch, Order::SHANNON).unwrap(), epsilon = 1e-12);
        // Monte Carlo oracle under the tilted marginal
        let a = order(0.3);
        let exact = m.expected_conditional_gain(&batch, a, a).unwrap();
        let marginal = m.tilted_marginal(&batch, a).unwrap();
        let mut rng = Seed(5).rng();
        let n = 200_000;
        let gains: Vec<f64> = (0..n)
            .map(|_| m.conditional_gain(&batch, &marginal.sample(&mut rng), a).unwrap())
            .collect();
        let mean = gains.iter().sum::<f64>() / n as f64;
        let sd = (gains.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - exact).abs() < 4.0 * sd / (n as f64).sqrt(), "{mean} vs {exact}");
    }

    proptest! {
        #[test]
        fn sibson_monotone_in_order(seed in 0u64..500, xi in prop::collection::vec(-1.0f64..1.0, 2)) {
            let m = random_model(seed, 2);
            let batch = DesignBatch::single(xi);
            let grid = [0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0];
            let vals: Vec<f64> = grid.iter().map(|&a| m.sibson_mi(&batch, order(a)).unwrap()).collect();
            prop_assert!(vals.iter().all(|v| *v >= 0.0));
            prop_assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-14));
        }
    }
}
