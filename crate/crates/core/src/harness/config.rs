//! Experiment configuration: a flat JSON object whose fields all have
//! per-experiment defaults.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::abtest::ABModel;
use crate::design::DesignBox;
use crate::error::{Error, Result};
use crate::linreg::{FeatureMap, LinRegModel};
use crate::nmc::NmcConfig;
use crate::policy::{AscentConfig, PacConfig};
use crate::primitives::Order;
use crate::renyi::{BetaDist, GaussianDist};
use crate::rng::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Infogain,
    Coverage,
    Elpd,
    Regret,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Infogain => "infogain",
            Experiment::Coverage => "coverage",
            Experiment::Elpd => "elpd",
            Experiment::Regret => "regret",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linreg,
    Abtest,
}

/// Source of design values seen by the optimizers in the regret study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    /// Fresh nested Monte Carlo estimate per query.
    Nmc,
    /// Closed-form value (noise-free control).
    Exact,
}

/// Partial configuration as read from JSON or command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub model: Option<ModelKind>,
    pub alpha: Option<f64>,
    pub alphas: Option<Vec<f64>>,
    pub levels: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub outer_n: Option<usize>,
    pub inner_m: Option<usize>,
    pub lambda: Option<f64>,
    pub delta: Option<f64>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub dim: Option<usize>,
    pub feature_map: Option<FeatureMap>,
    pub noise_var: Option<f64>,
    pub prior_var: Option<f64>,
    pub batch_size: Option<usize>,
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
    pub total: Option<u32>,
    pub priors: Option<[f64; 4]>,
    pub oracle: Option<OracleKind>,
    pub naive_iters: Option<usize>,
    pub naive_step: Option<f64>,
    pub fd_step: Option<f64>,
    pub policy_steps: Option<usize>,
    pub policy_batch: Option<usize>,
    pub lr_mean: Option<f64>,
    pub lr_log_std: Option<f64>,
    pub policy_std: Option<f64>,
    pub policy_samples: Option<usize>,
    pub gibbs_rounds: Option<usize>,
    pub pac: Option<bool>,
}

impl ConfigOverrides {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text).map_err(|e| e.context(path.display().to_string()))
    }

    /// Fields set in `other` win.
    pub fn merge(self, other: ConfigOverrides) -> ConfigOverrides {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigOverrides { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            model, alpha, alphas, levels, trials, outer_n, inner_m, lambda, delta, seed, output, dim, feature_map,
            noise_var, prior_var, batch_size, train_size, test_size, total, priors, oracle, naive_iters, naive_step,
            fd_step, policy_steps, policy_batch, lr_mean, lr_log_std, policy_std, policy_samples, gibbs_rounds, pac
        )
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ModelKind,
    /// Order of the robust criterion.
    pub alpha: f64,
    /// Orders swept by the ELPD study.
    pub alphas: Vec<f64>,
    /// Credible levels for the coverage study.
    pub levels: Vec<f64>,
    pub trials: usize,
    pub outer_n: usize,
    pub inner_m: usize,
    /// PAC-Bayes precision; `None` picks it by maximizing the lower bound.
    pub lambda: Option<f64>,
    pub delta: f64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Parameter dimension of the regression model.
    pub dim: usize,
    pub feature_map: FeatureMap,
    pub noise_var: f64,
    pub prior_var: f64,
    /// Measurements per design batch (infogain, coverage).
    pub batch_size: usize,
    /// Training measurements (ELPD, regression).
    pub train_size: usize,
    /// Held-out measurements (ELPD).
    pub test_size: usize,
    /// Subjects in the A/B test.
    pub total: u32,
    /// `[delta_a, gamma_a, delta_b, gamma_b]`.
    pub priors: [f64; 4],
    pub oracle: OracleKind,
    pub naive_iters: usize,
    pub naive_step: f64,
    pub fd_step: f64,
    pub policy_steps: usize,
    pub policy_batch: usize,
    pub lr_mean: f64,
    pub lr_log_std: f64,
    /// Prior policy standard deviation as a fraction of the box width.
    pub policy_std: f64,
    /// Policy draws used to score a continuous policy.
    pub policy_samples: usize,
    /// Rounds of fresh estimates averaged by the discrete Gibbs policy.
    pub gibbs_rounds: usize,
    /// Whether the regret study runs the PAC-Bayes path besides the naive one.
    pub pac: bool,
}

impl ExperimentConfig {
    /// Defaults for `experiment`.
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = ExperimentConfig {
            experiment,
            model: ModelKind::Linreg,
            alpha: 0.5,
            alphas: vec![0.05, 0.1, 0.5],
            levels: (1..10).map(|k| k as f64 / 10.0).collect(),
            trials: 1000,
            outer_n: 16,
            inner_m: 16,
            lambda: None,
            delta: 0.05,
            seed: 0,
            output: None,
            dim: 2,
            feature_map: FeatureMap::Affine,
            noise_var: 1.0,
            prior_var: 1.0,
            batch_size: 1,
            train_size: 10,
            test_size: 10,
            total: 25,
            priors: [1.0; 4],
            oracle: OracleKind::Nmc,
            naive_iters: 100,
            naive_step: 0.1,
            fd_step: 0.1,
            policy_steps: 200,
            policy_batch: 32,
            lr_mean: 0.05,
            lr_log_std: 0.01,
            policy_std: 1.0,
            policy_samples: 1000,
            gibbs_rounds: 1,
            pac: true,
        };
        match experiment {
            Experiment::Infogain => c.trials = 10_000,
            Experiment::Coverage => {
                c.alpha = 0.3;
                c.trials = 2000;
                c.batch_size = 4;
            }
            Experiment::Elpd => c.trials = 2000,
            Experiment::Regret => {
                c.trials = 256;
                c.dim = 10;
                c.feature_map = FeatureMap::Identity;
                c.total = 100;
            }
        }
        c
    }

    /// Defaults overlaid with `overrides`, then validated.
    pub fn resolve(experiment: Experiment, overrides: &ConfigOverrides) -> Result<Self> {
        let o = overrides.clone();
        let d = ExperimentConfig::defaults(experiment);
        let c = ExperimentConfig {
            experiment,
            model: o.model.unwrap_or(d.model),
            alpha: o.alpha.unwrap_or(d.alpha),
            alphas: o.alphas.unwrap_or(d.alphas),
            levels: o.levels.unwrap_or(d.levels),
            trials: o.trials.unwrap_or(d.trials),
            outer_n: o.outer_n.unwrap_or(d.outer_n),
            inner_m: o.inner_m.unwrap_or(d.inner_m),
            lambda: o.lambda.or(d.lambda),
            delta: o.delta.unwrap_or(d.delta),
            seed: o.seed.unwrap_or(d.seed),
            output: o.output.or(d.output),
            dim: o.dim.unwrap_or(d.dim),
            feature_map: o.feature_map.unwrap_or(d.feature_map),
            noise_var: o.noise_var.unwrap_or(d.noise_var),
            prior_var: o.prior_var.unwrap_or(d.prior_var),
            batch_size: o.batch_size.unwrap_or(d.batch_size),
            train_size: o.train_size.unwrap_or(d.train_size),
            test_size: o.test_size.unwrap_or(d.test_size),
            total: o.total.unwrap_or(d.total),
            priors: o.priors.unwrap_or(d.priors),
            oracle: o.oracle.unwrap_or(d.oracle),
            naive_iters: o.naive_iters.unwrap_or(d.naive_iters),
            naive_step: o.naive_step.unwrap_or(d.naive_step),
            fd_step: o.fd_step.unwrap_or(d.fd_step),
            policy_steps: o.policy_steps.unwrap_or(d.policy_steps),
            policy_batch: o.policy_batch.unwrap_or(d.policy_batch),
            lr_mean: o.lr_mean.unwrap_or(d.lr_mean),
            lr_log_std: o.lr_log_std.unwrap_or(d.lr_log_std),
            policy_std: o.policy_std.unwrap_or(d.policy_std),
            policy_samples: o.policy_samples.unwrap_or(d.policy_samples),
            gibbs_rounds: o.gibbs_rounds.unwrap_or(d.gibbs_rounds),
            pac: o.pac.unwrap_or(d.pac),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        Order::new(self.alpha)?;
        for a in &self.alphas {
            Order::new(*a)?;
        }
        if self.levels.iter().any(|c| !(*c > 0.0 && *c < 1.0)) {
            return bad("credible levels must lie in (0, 1)".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("lambda must be positive, got {l}"));
            }
        }
        if self.outer_n == 0 || self.inner_m == 0 {
            return bad("outer_n and inner_m must be at least 1".into());
        }
        if self.test_size == 0 {
            return bad("test_size must be at least 1".into());
        }
        if !(self.fd_step > 0.0) || !(self.naive_step > 0.0) || !(self.policy_std > 0.0 && self.policy_std <= 1.0) {
            return bad("fd_step and naive_step must be positive and policy_std in (0, 1]".into());
        }
        if self.policy_samples == 0 || self.gibbs_rounds == 0 {
            return bad("policy_samples and gibbs_rounds must be at least 1".into());
        }
        match self.model {
            ModelKind::Linreg => {
                self.linreg_model()?;
            }
            ModelKind::Abtest => {
                self.ab_model()?;
            }
        }
        Ok(())
    }

    pub fn order(&self) -> Order {
        Order::new(self.alpha).expect("validated")
    }

    pub fn root_seed(&self) -> Seed {
        Seed::new(self.seed)
    }

    /// Zero-mean isotropic prior, unit box, configured feature map.
    pub fn linreg_model(&self) -> Result<LinRegModel> {
        let prior = GaussianDist::isotropic(DVector::zeros(self.dim), self.prior_var)?;
        let design_dim = match self.feature_map {
            FeatureMap::Affine if self.dim < 2 => {
                return Err(Error::Config("the affine feature map needs dim >= 2".into()));
            }
            map => map.design_dim(self.dim),
        };
        LinRegModel::new(prior, self.noise_var, DesignBox::unit(design_dim), self.feature_map)
    }

    pub fn ab_model(&self) -> Result<ABModel> {
        let [da, ga, db, gb] = self.priors;
        ABModel::new(BetaDist::new(da, ga)?, BetaDist::new(db, gb)?, self.total)
    }

    pub fn nmc_config(&self) -> NmcConfig {
        NmcConfig::new(self.outer_n, self.inner_m, self.order())
    }

    pub fn ascent_config(&self) -> AscentConfig {
        AscentConfig {
            steps: self.policy_steps,
            batch: self.policy_batch,
            lr_mean: self.lr_mean,
            lr_log_std: self.lr_log_std,
        }
    }

    /// Configured precision, or by default the one maximizing the PAC-Bayes
    /// bound for a policy at zero KL: `sqrt(2 N log(1/delta)) / (L_f C_h)`.
    pub fn resolved_lambda(&self) -> f64 {
        self.lambda.unwrap_or_else(|| {
            let c = crate::primitives::RegularityConstants::default();
            (2.0 * self.outer_n as f64 * (1.0 / self.delta).ln()).sqrt() / (c.l_f * c.c_h)
        })
    }

    /// PAC configuration with the given precision.
    pub fn pac_config(&self, lambda: f64) -> Result<PacConfig> {
        PacConfig::new(lambda, self.delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_unknown_fields() {
        let o = ConfigOverrides::from_json_str(r#"{"model": "abtest", "alpha": 0.2, "trials": 5}"#).unwrap();
        let c = ExperimentConfig::resolve(Experiment::Regret, &o).unwrap();
        assert_eq!(c.model, ModelKind::Abtest);
        assert_eq!(c.trials, 5);
        assert_eq!(c.total, 100);
        assert!(ConfigOverrides::from_json_str(r#"{"bogus": 1}"#).is_err());
        let flags = ConfigOverrides {
            trials: Some(9),
            ..Default::default()
        };
        assert_eq!(o.merge(flags).trials, Some(9));
    }

    #[test]
    fn validation() {
        let bad = ConfigOverrides {
            trials: Some(0),
            ..Default::default()
        };
        assert!(ExperimentConfig::resolve(Experiment::Infogain, &bad).is_err());
        let bad = ConfigOverrides {
            alpha: Some(1.5),
            ..Default::default()
        };
        assert!(ExperimentConfig::resolve(Experiment::Infogain, &bad).is_err());
        let bad = ConfigOverrides {
            priors: Some([1.0, -1.0, 1.0, 1.0]),
            model: Some(ModelKind::Abtest),
            ..Default::default()
        };
        assert!(ExperimentConfig::resolve(Experiment::Infogain, &bad).is_err());
    }
}
