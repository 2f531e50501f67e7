//! Shannon expected information gain for the conjugate models, used as the
//! `alpha -> 1` reference.

use serde::Serialize;

use crate::abtest::{group_shannon_mi, ABModel, Allocation, ENUMERATION_LIMIT};
use crate::error::{Error, Result};
use crate::linalg::{spd_log_det, symmetrize};
use crate::linreg::{DesignBatch, LinRegModel};

/// Which representation of the mutual information produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    /// Expected KL from posterior to prior.
    ParamDiv,
    /// Prior entropy minus expected posterior entropy.
    EntropyDiff,
    /// Expected KL from likelihood to marginal.
    LklhdDiv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigValue {
    pub value: f64,
    pub representation: Representation,
}

/// Gaussian entropy difference `1/2 log|Sigma0| - 1/2 log|Sigma_N|`, which
/// does not depend on the outcomes.
pub fn shannon_eig_linreg(model: &LinRegModel, batch: &DesignBatch) -> Result<EigValue> {
    let h = model.design_matrix(batch)?;
    let value = if h.nrows() == 0 {
        0.0
    } else {
        let precision = symmetrize(&(model.prior().precision() + h.transpose() * &h / model.noise_var()));
        0.5 * (model.prior().log_det_cov() + spd_log_det(&precision)?)
    };
    Ok(EigValue {
        value: value.max(0.0),
        representation: Representation::EntropyDiff,
    })
}

/// Exact `sum_x p(x) KL(p(theta | x) || p(theta))`, additive over groups.
pub fn shannon_eig_abtest(model: &ABModel, alloc: &Allocation) -> Result<EigValue> {
    if alloc.total() > ENUMERATION_LIMIT {
        return Err(Error::Capacity(format!(
            "budget {} exceeds the enumeration limit {ENUMERATION_LIMIT}",
            alloc.total()
        )));
    }
    let value = group_shannon_mi(model.prior_a(), alloc.n_a) + group_shannon_mi(model.prior_b(), alloc.n_b);
    Ok(EigValue {
        value,
        representation: Representation::ParamDiv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::Order;
    use crate::renyi::BetaDist;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linreg_matches_sibson_at_shannon() {
        let m = LinRegModel::scalar_affine();
        let v = shannon_eig_linreg(&m, &DesignBatch::scalars(&[1.0])).unwrap();
        assert_abs_diff_eq!(v.value, 0.5 * 3f64.ln(), epsilon = 1e-12);
        assert_eq!(v.representation, Representation::EntropyDiff);
        for xs in [vec![0.3], vec![-1.0, 0.2, 0.9]] {
            let b = DesignBatch::scalars(&xs);
            assert_abs_diff_eq!(
                shannon_eig_linreg(&m, &b).unwrap().value,
                m.sibson_mi(&b, Order::SHANNON).unwrap(),
                epsilon = 1e-12
            );
        }
        let flat = LinRegModel::linear(2);
        assert_abs_diff_eq!(shannon_eig_linreg(&flat, &DesignBatch::single(vec![0.0, 0.0])).unwrap().value, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn abtest_examples() {
        let m = ABModel::uniform(2).unwrap();
        assert_eq!(shannon_eig_abtest(&m, &Allocation::new(0, 0)).unwrap().value, 0.0);
        let v = shannon_eig_abtest(&m, &Allocation::new(1, 1)).unwrap();
        assert_abs_diff_eq!(v.value, 2.0 * (2f64.ln() - 0.5), epsilon = 1e-12);
        let m = ABModel::new(BetaDist::new(2.0, 0.5).unwrap(), BetaDist::uniform(), 30).unwrap();
        let al = Allocation::new(13, 17);
        assert_abs_diff_eq!(
            shannon_eig_abtest(&m, &al).unwrap().value,
            m.sibson_mi(&al, Order::SHANNON),
            epsilon = 1e-12
        );
        let big = ABModel::uniform(300).unwrap();
        assert!(matches!(shannon_eig_abtest(&big, &Allocation::new(150, 150)), Err(Error::Capacity(_))));
    }
}
