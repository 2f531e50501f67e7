//! Held-out predictive quality of tilted posteriors fitted at random versus
//! robust-optimal training designs.

use nalgebra::DVector;
use rand::Rng as _;
use serde::Serialize;
use serde_json::json;

use super::{base_metadata, format_design, insert, mean, par_trials, std_error};
use super::{ExperimentConfig, ExperimentOutput, ModelKind, Table};
use crate::abtest::Allocation;
use crate::error::Result;
use crate::linreg::DesignBatch;
use crate::primitives::Order;

/// How the training design is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignRule {
    /// Uniform over the box (linreg) or over allocations (abtest).
    Random,
    /// Maximizer of the order-alpha Sibson information.
    Optimal,
}

impl DesignRule {
    pub fn name(self) -> &'static str {
        match self {
            DesignRule::Random => "random",
            DesignRule::Optimal => "optimal",
        }
    }
}

/// For every order in `config.alphas`, rule and trial: draw training and
/// held-out data jointly from the worst-case process, fit the tilted
/// posterior on the training part and record the held-out log predictive
/// density. Trial `t` at order index `a` uses seed `root.derive2(a, t)` for
/// every rule (common random numbers): `derive(0)` for a random design and
/// `derive(1)` for the data.
///
/// The held-out set is `test_size` measurements at the box midpoint
/// (linreg) or a balanced allocation of `test_size` subjects (abtest). The
/// training budget is `train_size` measurements (linreg) or `total`
/// subjects (abtest).
pub fn run_elpd(config: &ExperimentConfig, rules: &[DesignRule]) -> Result<ExperimentOutput> {
    let root = config.root_seed();
    let mut meta = base_metadata(config);
    let mut table = Table::new(["alpha", "design_rule", "trial", "design", "elpd"]);
    let mut summary = Vec::new();
    let mut optimal_designs = Vec::new();
    for (ai, &alpha) in config.alphas.iter().enumerate() {
        let order = Order::new(alpha)?;
        for &rule in rules {
            let rows: Vec<(String, f64)> = match config.model {
                ModelKind::Linreg => {
                    let model = config.linreg_model()?;
                    let test = DesignBatch::new(vec![model.design_box().midpoint(); config.test_size]);
                    let optimal = if config.train_size == 0 {
                        DesignBatch::new(Vec::new())
                    } else {
                        model.optimal_batch(config.train_size, order)?.0
                    };
                    if rule == DesignRule::Optimal {
                        optimal_designs.push(json!({
                            "alpha": alpha,
                            "design": optimal.designs().iter().map(|d| format_design(d)).collect::<Vec<_>>(),
                        }));
                    }
                    par_trials(config.trials, |t| {
                        let s = root.derive2(ai as u64, t as u64);
                        let train = match rule {
                            DesignRule::Optimal => optimal.clone(),
                            DesignRule::Random => {
                                let mut rng = s.derive(0).rng();
                                DesignBatch::new(
                                    (0..config.train_size).map(|_| model.design_box().sample_uniform(&mut rng)).collect(),
                                )
                            }
                        };
                        let joint = train.concat(&test);
                        let (_, x) = model.sample_worst_case(&joint, order, 1, s.derive(1))?.remove(0);
                        let n = train.len();
                        let x_train = DVector::from_iterator(n, x.iter().take(n).copied());
                        let x_test = DVector::from_iterator(test.len(), x.iter().skip(n).copied());
                        let post = model.tilted_posterior(&train, &x_train, order)?;
                        let elpd = model.log_predictive_density(&post, &test, &x_test)?;
                        let design = train.designs().iter().map(|d| format_design(d)).collect::<Vec<_>>().join("|");
                        Ok((design, elpd))
                    })?
                }
                ModelKind::Abtest => {
                    let model = config.ab_model()?;
                    let half = (config.test_size / 2) as u32;
                    let test = Allocation::new(half, config.test_size as u32 - half);
                    let optimal = model.optimal_allocation(order).0;
                    if rule == DesignRule::Optimal {
                        optimal_designs.push(json!({"alpha": alpha, "design": [optimal.n_a, optimal.n_b]}));
                    }
                    par_trials(config.trials, |t| {
                        let s = root.derive2(ai as u64, t as u64);
                        let train = match rule {
                            DesignRule::Optimal => optimal,
                            DesignRule::Random => {
                                let n_a = s.derive(0).rng().random_range(0..=model.total());
                                Allocation::split(model.total(), n_a)?
                            }
                        };
                        let (_, x_train, x_test) = model.sample_worst_case_split(&train, &test, order, s.derive(1))?;
                        let post = model.tilted_posterior(&train, x_train, order)?;
                        let elpd = model.log_predictive_pmf(&post, &test, x_test)?;
                        Ok((format!("{};{}", train.n_a, train.n_b), elpd))
                    })?
                }
            };
            let values: Vec<f64> = rows.iter().map(|r| r.1).collect();
            summary.push(json!({
                "alpha": alpha,
                "design_rule": rule.name(),
                "mean_elpd": mean(&values),
                "se_elpd": std_error(&values),
            }));
            for (t, (design, elpd)) in rows.into_iter().enumerate() {
                table.push(vec![alpha.into(), rule.name().into(), t.into(), design.into(), elpd.into()]);
            }
        }
    }
    insert(&mut meta, "optimal_designs", json!(optimal_designs));
    insert(&mut meta, "summary", json!(summary));
    Ok(ExperimentOutput { table, metadata: meta })
}
