//! Thin wrappers around log-Gamma based special functions.

use statrs::function::{beta, gamma};

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

#[inline]
pub fn digamma(x: f64) -> f64 {
    gamma::digamma(x)
}

/// `log B(a, b)` for positive shapes.
#[inline]
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `log C(n, k)` for `0 <= k <= n`.
#[inline]
pub fn ln_choose(n: u32, k: u32) -> f64 {
    debug_assert!(k <= n);
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Regularized incomplete Beta function `I_x(a, b)`.
#[inline]
pub fn beta_cdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta::beta_reg(a, b, x)
    }
}

/// CDF of the chi-square distribution with `dof` degrees of freedom.
#[inline]
pub fn chi_square_cdf(q: f64, dof: usize) -> f64 {
    if q <= 0.0 {
        0.0
    } else {
        gamma::gamma_lr(dof as f64 / 2.0, q / 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_function_values() {
        assert!((ln_beta(1.0, 1.0)).abs() < 1e-14);
        // B(1.5, 1.5) = pi / 8
        assert!((ln_beta(1.5, 1.5) - (std::f64::consts::PI / 8.0).ln()).abs() < 1e-13);
        assert!((ln_choose(10, 3) - 120f64.ln()).abs() < 1e-12);
        assert_eq!(ln_choose(7, 0), 0.0);
    }

    #[test]
    fn chi_square_two_dof_is_exponential() {
        for q in [0.1, 1.0, 3.0] {
            assert!((chi_square_cdf(q, 2) - (1.0 - (-q / 2.0f64).exp())).abs() < 1e-12);
        }
    }
}
