//! One-dimensional biased-coin instance: f(x; z) = z L x with z = +/-1.
//!
//! The coin parameter is drawn once at construction, uniformly from
//! {(1 + eps)/2, (1 - eps)/2} with eps = 1 / (2 sqrt(N)), N the oracle
//! budget. Estimating the drift direction to accuracy eps is exactly what a
//! budget of N samples affords.

use ndarray::{Array1, ArrayView1};
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::instances::{Instance, LipschitzSmoothClass, RefOptimum, Reference};
use crate::prox::ProxResult;
use crate::rng;

#[derive(Debug, Clone)]
pub struct CoinParams {
    /// Bias magnitude eps = 1 / (2 sqrt(N)).
    pub epsilon: f64,
    /// Realized probability of z = +1.
    pub p: f64,
}

pub struct CoinFlipInstance {
    class: LipschitzSmoothClass,
    params: CoinParams,
    reference: Reference,
}

pub fn coinflip_instance(l: f64, b: f64, budget: usize, seed: u64) -> Result<CoinFlipInstance> {
    if budget == 0 {
        return Err(Error::InvalidParameter(
            "oracle budget N must be >= 1".to_string(),
        ));
    }
    let class = LipschitzSmoothClass::new(l, f64::INFINITY, b)?;
    let epsilon = 1.0 / (2.0 * (budget as f64).sqrt());
    let mut gen = rng::derive(seed, rng::StreamKind::Shared, 0xC01F);
    let sign = if gen.random_range(0..2u32) == 0 {
        1.0
    } else {
        -1.0
    };
    let p = (1.0 + sign * epsilon) / 2.0;
    let drift = 2.0 * p - 1.0; // = sign * epsilon
    let reference = Reference {
        x_star: Some(Array1::from(vec![-b * drift.signum()])),
        optimum: RefOptimum::Exact(-l * b * epsilon),
    };
    Ok(CoinFlipInstance {
        class,
        params: CoinParams { epsilon, p },
        reference,
    })
}

impl CoinFlipInstance {
    pub fn params(&self) -> &CoinParams {
        &self.params
    }

    fn sign_of(z: u32) -> f64 {
        if z == 1 {
            1.0
        } else {
            -1.0
        }
    }
}

impl Instance for CoinFlipInstance {
    fn name(&self) -> &'static str {
        "coinflip"
    }

    fn dimension(&self) -> usize {
        1
    }

    fn class(&self) -> &LipschitzSmoothClass {
        &self.class
    }

    fn sample_z(&self, rng: &mut dyn RngCore) -> u32 {
        let u: f64 = rng.random_range(0.0..1.0);
        if u < self.params.p {
            1
        } else {
            0
        }
    }

    fn value(&self, x: &ArrayView1<f64>, z: u32) -> f64 {
        Self::sign_of(z) * self.class.lipschitz * x[0]
    }

    fn gradient(&self, _x: &ArrayView1<f64>, z: u32) -> Array1<f64> {
        Array1::from(vec![Self::sign_of(z) * self.class.lipschitz])
    }

    fn prox(&self, x: &ArrayView1<f64>, beta: f64, z: u32) -> Result<ProxResult> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "prox requires beta > 0, got {beta}"
            )));
        }
        // Affine objective: the prox shifts by the gradient over beta.
        let slope = Self::sign_of(z) * self.class.lipschitz;
        let y = x[0] - slope / beta;
        let objective = slope * y + 0.5 * beta * (y - x[0]) * (y - x[0]);
        Ok(ProxResult {
            point: Array1::from(vec![y]),
            objective,
            residual: 0.0,
            active_set: None,
        })
    }

    fn mean_value(&self, x: &ArrayView1<f64>) -> Option<f64> {
        Some((2.0 * self.params.p - 1.0) * self.class.lipschitz * x[0])
    }

    fn reference(&self) -> Option<&Reference> {
        Some(&self.reference)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::true_suboptimality;
    use approx::assert_abs_diff_eq;

    #[test]
    fn epsilon_and_p_from_budget() {
        let inst = coinflip_instance(1.0, 1.0, 25, 0).unwrap();
        assert_abs_diff_eq!(inst.params().epsilon, 0.1, epsilon = 1e-15);
        let p = inst.params().p;
        assert!((p - 0.55).abs() < 1e-12 || (p - 0.45).abs() < 1e-12);
    }

    #[test]
    fn optimum_value_and_origin_suboptimality() {
        for seed in 0..8 {
            let (l, b) = (2.0, 3.0);
            let inst = coinflip_instance(l, b, 16, seed).unwrap();
            let eps = inst.params().epsilon;
            let x_star = inst.reference().unwrap().x_star.clone().unwrap();
            assert_abs_diff_eq!(
                inst.mean_value(&x_star.view()).unwrap(),
                -l * b * eps,
                epsilon = 1e-12
            );
            let origin = Array1::zeros(1);
            let sub = true_suboptimality(&inst, &origin.view(), 1, 0).unwrap();
            assert_abs_diff_eq!(sub.value, l * b * eps, epsilon = 1e-12);
            assert_eq!(sub.stderr, 0.0);
        }
    }

    #[test]
    fn both_coin_draws_occur() {
        let mut seen_high = false;
        let mut seen_low = false;
        for seed in 0..32 {
            let inst = coinflip_instance(1.0, 1.0, 4, seed).unwrap();
            if inst.params().p > 0.5 {
                seen_high = true;
            } else {
                seen_low = true;
            }
        }
        assert!(seen_high && seen_low);
    }

    #[test]
    fn rejects_zero_budget() {
        assert!(coinflip_instance(1.0, 1.0, 0, 0).is_err());
    }
}
