//! Realized information gains under the worst-case generative process at
//! the nominal-optimal and robust-optimal designs.

use serde_json::json;

use super::{base_metadata, format_design, insert, mean, par_trials, require_linreg_design_dim, std_error};
use super::{ExperimentConfig, ExperimentOutput, ModelKind, Table};
use crate::error::Result;
use crate::primitives::Order;
use crate::shannon::{shannon_eig_abtest, shannon_eig_linreg};

/// One row per trial with the KL gain at the nominal-optimal design and the
/// Renyi gain at the robust-optimal design. Both draws in a trial use the
/// same seed, so at `alpha = 1` the two columns coincide.
pub fn run_infogain(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let order = config.order();
    let root = config.root_seed();
    let mut table = Table::new(["trial", "nominal_gain", "robust_gain"]);
    let mut meta = base_metadata(config);
    match config.model {
        ModelKind::Linreg => {
            require_linreg_design_dim(config)?;
            let model = config.linreg_model()?;
            let (nominal, _) = model.optimal_batch(config.batch_size, Order::SHANNON)?;
            let (robust, sibson) = model.optimal_batch(config.batch_size, order)?;
            let rows = par_trials(config.trials, |t| {
                let s = root.derive(t as u64);
                let (_, xn) = model.sample_worst_case(&nominal, order, 1, s)?.remove(0);
                let (_, xr) = model.sample_worst_case(&robust, order, 1, s)?.remove(0);
                Ok((
                    model.conditional_gain(&nominal, &xn, Order::SHANNON)?,
                    model.conditional_gain(&robust, &xr, order)?,
                ))
            })?;
            let designs = |b: &crate::linreg::DesignBatch| b.designs().iter().map(|d| format_design(d)).collect::<Vec<_>>();
            insert(&mut meta, "nominal_design", json!(designs(&nominal)));
            insert(&mut meta, "robust_design", json!(designs(&robust)));
            insert(&mut meta, "sibson_mi", json!(sibson));
            insert(&mut meta, "shannon_eig_nominal", json!(shannon_eig_linreg(&model, &nominal)?.value));
            insert(
                &mut meta,
                "expected_robust_gain",
                json!(model.expected_conditional_gain(&robust, order, order)?),
            );
            insert(
                &mut meta,
                "expected_nominal_gain",
                json!(model.expected_conditional_gain(&nominal, Order::SHANNON, order)?),
            );
            finish(&mut table, &mut meta, rows);
        }
        ModelKind::Abtest => {
            let model = config.ab_model()?;
            let (nominal, _) = model.optimal_allocation(Order::SHANNON);
            let (robust, sibson) = model.optimal_allocation(order);
            let rows = par_trials(config.trials, |t| {
                let s = root.derive(t as u64);
                let (_, xn) = model.sample_worst_case(&nominal, order, 1, s)?[0];
                let (_, xr) = model.sample_worst_case(&robust, order, 1, s)?[0];
                Ok((
                    model.conditional_gain(&nominal, xn, Order::SHANNON)?,
                    model.conditional_gain(&robust, xr, order)?,
                ))
            })?;
            // exact expectations of the realized gains under the worst-case marginal
            let expect = |alloc, gain_order| -> Result<f64> {
                let pmf = model.tilted_marginal_pmf(&alloc, order)?;
                pmf.outcomes()
                    .zip(&pmf.probs)
                    .map(|(x, p)| Ok(p * model.conditional_gain(&alloc, x, gain_order)?))
                    .sum()
            };
            insert(&mut meta, "nominal_design", json!([nominal.n_a, nominal.n_b]));
            insert(&mut meta, "robust_design", json!([robust.n_a, robust.n_b]));
            insert(&mut meta, "sibson_mi", json!(sibson));
            insert(&mut meta, "shannon_eig_nominal", json!(shannon_eig_abtest(&model, &nominal)?.value));
            insert(&mut meta, "expected_robust_gain", json!(expect(robust, order)?));
            insert(&mut meta, "expected_nominal_gain", json!(expect(nominal, Order::SHANNON)?));
            finish(&mut table, &mut meta, rows);
        }
    }
    Ok(ExperimentOutput { table, metadata: meta })
}

fn finish(table: &mut Table, meta: &mut serde_json::Value, rows: Vec<(f64, f64)>) {
    for (t, (n, r)) in rows.iter().enumerate() {
        table.push(vec![t.into(), (*n).into(), (*r).into()]);
    }
    let nominal: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let robust: Vec<f64> = rows.iter().map(|r| r.1).collect();
    insert(
        meta,
        "summary",
        json!({
            "mean_nominal_gain": mean(&nominal),
            "se_nominal_gain": std_error(&nominal),
            "mean_robust_gain": mean(&robust),
            "se_robust_gain": std_error(&robust),
        }),
    );
}
