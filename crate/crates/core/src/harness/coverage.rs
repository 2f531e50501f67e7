//! Frequentist coverage of nominal and tilted credible sets when data come
//! from the worst-case process.

use serde_json::json;

use super::{base_metadata, format_design, insert, par_trials, require_linreg_design_dim};
use super::{Cell, ExperimentConfig, ExperimentOutput, ModelKind, Table};
use crate::error::{Error, Result};
use crate::primitives::Order;
use crate::renyi::{BetaDist, GaussianDist};
use crate::special::chi_square_cdf;

/// Gaussian highest-density ellipsoid at level `c`.
fn gaussian_covers(post: &GaussianDist, theta: &nalgebra::DVector<f64>, c: f64) -> bool {
    chi_square_cdf(post.mahalanobis_sq(theta), post.dim()) <= c
}

/// Product of equal-tailed intervals at level `sqrt(c)` per coordinate.
fn beta_pair_covers(post: &(BetaDist, BetaDist), theta: (f64, f64), c: f64) -> bool {
    let level = c.sqrt();
    let inside = |d: &BetaDist, t: f64| {
        let u = d.cdf(t);
        u >= 0.5 * (1.0 - level) && u <= 0.5 * (1.0 + level)
    };
    inside(&post.0, theta.0) && inside(&post.1, theta.1)
}

/// Per trial `t` with seed `s = root.derive(t)`: a worst-case draw at order
/// alpha from `s.derive(0)` scored under the nominal and the tilted
/// posterior, and a well-specified control draw from `s.derive(1)` scored
/// under the nominal posterior. The design is the robust-optimal one.
///
/// Columns: `trial`, then `nominal_c`, `tilted_c`, `control_c` indicators
/// for every level `c`.
pub fn run_coverage(config: &ExperimentConfig, levels: &[f64]) -> Result<ExperimentOutput> {
    if levels.is_empty() || levels.iter().any(|c| !(*c > 0.0 && *c < 1.0)) {
        return Err(Error::Config("credible levels must be non-empty and lie in (0, 1)".into()));
    }
    let order = config.order();
    let root = config.root_seed();
    let mut meta = base_metadata(config);
    let indicators: Vec<[Vec<bool>; 3]> = match config.model {
        ModelKind::Linreg => {
            require_linreg_design_dim(config)?;
            let model = config.linreg_model()?;
            let (batch, _) = model.optimal_batch(config.batch_size, order)?;
            let designs: Vec<String> = batch.designs().iter().map(|d| format_design(d)).collect();
            insert(&mut meta, "design", json!(designs));
            par_trials(config.trials, |t| {
                let s = root.derive(t as u64);
                let (theta, x) = model.sample_worst_case(&batch, order, 1, s.derive(0))?.remove(0);
                let nominal = model.posterior(&batch, &x)?;
                let tilted = model.tilted_posterior(&batch, &x, order)?;
                let (theta_c, x_c) = model.sample_worst_case(&batch, Order::SHANNON, 1, s.derive(1))?.remove(0);
                let control = model.posterior(&batch, &x_c)?;
                Ok([
                    levels.iter().map(|&c| gaussian_covers(&nominal, &theta, c)).collect(),
                    levels.iter().map(|&c| gaussian_covers(&tilted, &theta, c)).collect(),
                    levels.iter().map(|&c| gaussian_covers(&control, &theta_c, c)).collect(),
                ])
            })?
        }
        ModelKind::Abtest => {
            let model = config.ab_model()?;
            let (alloc, _) = model.optimal_allocation(order);
            insert(&mut meta, "design", json!([alloc.n_a, alloc.n_b]));
            par_trials(config.trials, |t| {
                let s = root.derive(t as u64);
                let (theta, x) = model.sample_worst_case(&alloc, order, 1, s.derive(0))?[0];
                let nominal = model.posterior(&alloc, x)?;
                let tilted = model.tilted_posterior(&alloc, x, order)?;
                let (theta_c, x_c) = model.sample_worst_case(&alloc, Order::SHANNON, 1, s.derive(1))?[0];
                let control = model.posterior(&alloc, x_c)?;
                Ok([
                    levels.iter().map(|&c| beta_pair_covers(&nominal, theta, c)).collect(),
                    levels.iter().map(|&c| beta_pair_covers(&tilted, theta, c)).collect(),
                    levels.iter().map(|&c| beta_pair_covers(&control, theta_c, c)).collect(),
                ])
            })?
        }
    };

    let kinds = ["nominal", "tilted", "control"];
    let mut headers = vec!["trial".to_string()];
    for kind in kinds {
        headers.extend(levels.iter().map(|c| format!("{kind}_{c}")));
    }
    let mut table = Table::new(headers);
    for (t, row) in indicators.iter().enumerate() {
        let mut cells: Vec<Cell> = vec![t.into()];
        for kind in row {
            cells.extend(kind.iter().map(|&b| Cell::from(b)));
        }
        table.push(cells);
    }
    let mut summary = serde_json::Map::new();
    for (k, kind) in kinds.iter().enumerate() {
        let coverage: Vec<f64> = (0..levels.len())
            .map(|j| indicators.iter().filter(|r| r[k][j]).count() as f64 / indicators.len() as f64)
            .collect();
        summary.insert(kind.to_string(), json!(coverage));
    }
    summary.insert("levels".into(), json!(levels));
    insert(&mut meta, "coverage", serde_json::Value::Object(summary));
    Ok(ExperimentOutput { table, metadata: meta })
}
