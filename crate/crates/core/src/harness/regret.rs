//! Naive point optimization versus PAC-Bayes policies on noisy nested Monte
//! Carlo objectives, scored by the closed-form robust information.

use serde_json::json;

use super::{base_metadata, format_design, insert, mean, par_trials, std_error};
use super::{Cell, ExperimentConfig, ExperimentOutput, ModelKind, OracleKind, Table};
use crate::abtest::{ABModel, Allocation};
use crate::error::Result;
use crate::linreg::{DesignBatch, LinRegModel};
use crate::nmc::{estimate, estimate_per_design};
use crate::policy::{gibbs_update, kl_discrete, kl_gaussian_policies, mirror_descent, pac_lower_bound};
use crate::policy::{BoxedGaussianPolicy, DiscretePolicy};
use crate::rng::Seed;

struct Outcome {
    naive_design: String,
    naive_value: f64,
    pac_value: f64,
    pac_kl: f64,
    pac_bound: f64,
}

/// One row per repetition. Repetition `t` uses `s = root.derive(t)`:
/// `s.derive(0)` for the naive start, `s.derive(1)` for the naive oracle
/// calls, `s.derive(2)` for the policy search and `s.derive(3)` for scoring
/// a continuous policy.
///
/// Regret is `sibson_mi(optimum) - value` and the ratio `value / optimum`,
/// where the value of a policy is its expected `sibson_mi` (exact over a
/// finite grid, `policy_samples` draws otherwise). Without `pac` the PAC
/// columns are NaN.
pub fn run_regret(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let order = config.order();
    let lambda = config.resolved_lambda();
    let pac = config.pac_config(lambda)?;
    let root = config.root_seed();
    let mut meta = base_metadata(config);
    insert(&mut meta, "lambda", json!(lambda));

    let (optimum, rows) = match config.model {
        ModelKind::Linreg => {
            let model = config.linreg_model()?;
            let (best, optimum) = model.optimal_batch(1, order)?;
            insert(&mut meta, "optimal_design", json!(format_design(&best.designs()[0])));
            let rows = par_trials(config.trials, |t| linreg_trial(config, &model, root.derive(t as u64), lambda))?;
            (optimum, rows)
        }
        ModelKind::Abtest => {
            let model = config.ab_model()?;
            let (best, optimum) = model.optimal_allocation(order);
            insert(&mut meta, "optimal_design", json!([best.n_a, best.n_b]));
            let rows = par_trials(config.trials, |t| abtest_trial(config, &model, root.derive(t as u64), &pac))?;
            (optimum, rows)
        }
    };
    insert(&mut meta, "optimum", json!(optimum));
    insert(
        &mut meta,
        "naive_settings",
        json!(match config.model {
            ModelKind::Linreg => format!(
                "projected gradient ascent from a uniform start, central differences of width {} with fresh samples per evaluation, {} iterations, step {}",
                config.fd_step, config.naive_iters, config.naive_step
            ),
            ModelKind::Abtest => "argmax of one noisy estimate per allocation".to_string(),
        }),
    );

    let mut table = Table::new([
        "trial",
        "naive_design",
        "naive_value",
        "naive_regret",
        "naive_ratio",
        "pac_value",
        "pac_regret",
        "pac_ratio",
        "pac_kl",
        "pac_bound",
    ]);
    for (t, r) in rows.iter().enumerate() {
        let row: Vec<Cell> = vec![
            t.into(),
            r.naive_design.clone().into(),
            r.naive_value.into(),
            (optimum - r.naive_value).into(),
            (r.naive_value / optimum).into(),
            r.pac_value.into(),
            (optimum - r.pac_value).into(),
            (r.pac_value / optimum).into(),
            r.pac_kl.into(),
            r.pac_bound.into(),
        ];
        table.push(row);
    }
    let naive: Vec<f64> = rows.iter().map(|r| optimum - r.naive_value).collect();
    let pac_regret: Vec<f64> = rows.iter().map(|r| optimum - r.pac_value).collect();
    insert(
        &mut meta,
        "summary",
        json!({
            "mean_naive_regret": mean(&naive),
            "se_naive_regret": std_error(&naive),
            "mean_pac_regret": mean(&pac_regret),
            "se_pac_regret": std_error(&pac_regret),
        }),
    );
    Ok(ExperimentOutput { table, metadata: meta })
}

fn linreg_trial(config: &ExperimentConfig, model: &LinRegModel, s: Seed, lambda: f64) -> Result<Outcome> {
    let order = config.order();
    let nmc = config.nmc_config();
    let value = |xi: &[f64]| model.sibson_mi(&DesignBatch::single(xi.to_vec()), order);
    let oracle = |xi: &[f64], seed: Seed| match config.oracle {
        OracleKind::Nmc => estimate(model, &DesignBatch::single(xi.to_vec()), &nmc, seed),
        OracleKind::Exact => value(xi),
    };
    let dbox = model.design_box();

    let mut xi = dbox.sample_uniform(&mut s.derive(0).rng());
    let calls = s.derive(1);
    for k in 0..config.naive_iters {
        let mut grad = vec![0.0; xi.len()];
        for (j, g) in grad.iter_mut().enumerate() {
            let (mut up, mut down) = (xi.clone(), xi.clone());
            up[j] += config.fd_step;
            down[j] -= config.fd_step;
            dbox.project(&mut up);
            dbox.project(&mut down);
            let span = up[j] - down[j];
            if span > 0.0 {
                let f_up = oracle(&up, calls.derive2(k as u64, 2 * j as u64))?;
                let f_down = oracle(&down, calls.derive2(k as u64, 2 * j as u64 + 1))?;
                *g = (f_up - f_down) / span;
            }
        }
        for (x, g) in xi.iter_mut().zip(&grad) {
            *x += config.naive_step * g;
        }
        dbox.project(&mut xi);
    }
    let naive_value = value(&xi)?;

    let (pac_value, pac_kl) = if config.pac {
        let prior = BoxedGaussianPolicy::centred(dbox.clone(), config.policy_std)?;
        let policy = mirror_descent(oracle, &prior, &config.pac_config(lambda)?, &config.ascent_config(), s.derive(2))?;
        let mut rng = s.derive(3).rng();
        let values = (0..config.policy_samples)
            .map(|_| value(&policy.sample(&mut rng)))
            .collect::<Result<Vec<f64>>>()?;
        (mean(&values), kl_gaussian_policies(&policy, &prior)?)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(Outcome {
        naive_design: format_design(&xi),
        naive_value,
        pac_value,
        pac_kl,
        pac_bound: f64::NAN,
    })
}

fn abtest_trial(config: &ExperimentConfig, model: &ABModel, s: Seed, pac: &crate::policy::PacConfig) -> Result<Outcome> {
    let order = config.order();
    let nmc = config.nmc_config();
    let allocations = model.allocations();
    let exact = model.sibson_mi_all(order);
    let noisy = |seed: Seed| -> Result<Vec<f64>> {
        match config.oracle {
            OracleKind::Nmc => {
                let refs: Vec<&Allocation> = allocations.iter().collect();
                estimate_per_design(model, &refs, &nmc, seed)
            }
            OracleKind::Exact => Ok(exact.clone()),
        }
    };
    let first = noisy(s.derive(1))?;
    // first index attaining the maximum
    let pick = first
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > first[best] { i } else { best });
    let chosen = allocations[pick];

    let (pac_value, pac_kl, pac_bound) = if config.pac {
        let mut averaged = first.clone();
        for r in 1..config.gibbs_rounds {
            for (a, v) in averaged.iter_mut().zip(noisy(s.derive(2).derive(r as u64))?) {
                *a += v;
            }
        }
        averaged.iter_mut().for_each(|a| *a /= config.gibbs_rounds as f64);
        let prior = DiscretePolicy::uniform(allocations.clone())?;
        let policy = gibbs_update(&prior, &averaged, pac.lambda)?;
        let kl = kl_discrete(&policy, &prior)?;
        let n_eff = config.outer_n * config.gibbs_rounds;
        let bound = pac_lower_bound(policy.expectation(&averaged)?, kl, pac, n_eff)?;
        (policy.expectation(&exact)?, kl, bound)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    Ok(Outcome {
        naive_design: format!("{};{}", chosen.n_a, chosen.n_b),
        naive_value: exact[pick],
        pac_value,
        pac_kl,
        pac_bound,
    })
}
