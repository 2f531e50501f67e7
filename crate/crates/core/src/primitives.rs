//! Shared numeric primitives: the misspecification order, log-sum-exp and
//! the order/multiplier duality used to calibrate an ambiguity radius.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Misspecification order `alpha` in `(0, 1]`.
///
/// `alpha = 1` is the Shannon limit: every closed form in this crate extends
/// continuously to it, and the dual multiplier is reported as infinite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Order(f64);

impl Order {
    pub const SHANNON: Order = Order(1.0);

    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_nan() || alpha <= 0.0 || alpha > 1.0 {
            return Err(Error::invalid(format!(
                "order alpha must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(Order(alpha))
    }

    #[inline]
    pub fn alpha(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_shannon(self) -> bool {
        self.0 == 1.0
    }

    /// Dual multiplier `alpha / (1 - alpha)`; `+inf` at the Shannon limit.
    pub fn beta(self) -> f64 {
        if self.is_shannon() {
            f64::INFINITY
        } else {
            self.0 / (1.0 - self.0)
        }
    }

    /// Errors unless `alpha` is strictly inside `(0, 1)`.
    pub fn require_proper(self) -> Result<Self> {
        if self.is_shannon() {
            Err(Error::invalid("this operation needs alpha in (0, 1); got alpha = 1"))
        } else {
            Ok(self)
        }
    }
}

impl TryFrom<f64> for Order {
    type Error = Error;

    fn try_from(alpha: f64) -> Result<Self> {
        Order::new(alpha)
    }
}

impl From<Order> for f64 {
    fn from(order: Order) -> f64 {
        order.0
    }
}

/// `log sum_k exp(v_k)`, shifted by the maximum so finite inputs never
/// overflow. Entries may be `-inf`; NaN is rejected.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("log_sum_exp of an empty list"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("log_sum_exp input contains NaN"));
    }
    Ok(lse_unchecked(values))
}

/// Log-sum-exp without argument validation, for hot loops whose inputs are
/// already known to be non-empty and NaN-free.
#[inline]
pub(crate) fn lse_unchecked(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Dual multiplier for `order`; fails at the Shannon limit.
pub fn beta_from_alpha(order: Order) -> Result<f64> {
    if order.is_shannon() {
        return Err(Error::LimitUndefined(
            "beta = alpha / (1 - alpha) is infinite at alpha = 1".into(),
        ));
    }
    Ok(order.beta())
}

/// Inverse of [`beta_from_alpha`]: `alpha = beta / (1 + beta)`.
pub fn alpha_from_beta(beta: f64) -> Result<Order> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    if beta.is_infinite() {
        return Ok(Order::SHANNON);
    }
    Order::new(beta / (1.0 + beta))
}

/// Result of [`calibrate_beta`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub beta: f64,
    pub order: Order,
    /// `model_mi(beta) - beta * rho` at the selected grid point.
    pub value: f64,
}

/// Selects the multiplier maximizing `model_mi(beta) - beta * rho` over a
/// grid, breaking ties towards the smallest `beta`.
///
/// `model_mi` receives `beta` and is expected to evaluate the robust gain at
/// the order `beta / (1 + beta)`.
pub fn calibrate_beta<F>(model_mi: F, rho: f64, grid: &[f64]) -> Result<Calibration>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::invalid(format!("rho must be positive and finite, got {rho}")));
    }
    if grid.is_empty() {
        return Err(Error::invalid("calibration grid is empty"));
    }
    if let Some(bad) = grid.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
        return Err(Error::invalid(format!("grid entries must be positive, got {bad}")));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("calibration grid must be sorted ascending"));
    }
    let mut best: Option<(f64, f64)> = None;
    for &beta in grid {
        let value = model_mi(beta)? - beta * rho;
        if value.is_nan() {
            return Err(Error::Numeric(format!("objective is NaN at beta = {beta}")));
        }
        match best {
            Some((_, v)) if value <= v => {}
            _ => best = Some((beta, value)),
        }
    }
    let (beta, value) = best.expect("grid is non-empty");
    Ok(Calibration {
        beta,
        order: alpha_from_beta(beta)?,
        value,
    })
}

/// Regularity constants of the nested estimator (bias and concentration
/// analysis). They are never estimated; callers supply them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityConstants {
    pub l_f: f64,
    pub l_h: f64,
    pub c_h: f64,
    pub sigma_h: f64,
    pub sigma_w: f64,
    pub l_w: f64,
    pub c_w: f64,
    pub tau: f64,
}

impl Default for RegularityConstants {
    /// Unit constants; the harness reports these as assumptions.
    fn default() -> Self {
        RegularityConstants {
            l_f: 1.0,
            l_h: 1.0,
            c_h: 1.0,
            sigma_h: 1.0,
            sigma_w: 1.0,
            l_w: 1.0,
            c_w: 1.0,
            tau: 1.0,
        }
    }
}

impl RegularityConstants {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("L_f", self.l_f),
            ("L_h", self.l_h),
            ("C_h", self.c_h),
            ("sigma_h", self.sigma_h),
            ("sigma_w", self.sigma_w),
            ("L_w", self.l_w),
            ("C_w", self.c_w),
            ("tau", self.tau),
        ];
        for (name, v) in fields {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be a finite nonnegative number, got {v}")));
            }
        }
        if self.tau <= 0.0 {
            return Err(Error::invalid("tau must be positive"));
        }
        Ok(())
    }
}
