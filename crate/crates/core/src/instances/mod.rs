//! Stochastic objectives with gradient and prox oracles.
//!
//! Every instance is immutable after construction and pure given (x, z), so
//! instances can be shared freely across threads. Sampling z uses a
//! caller-provided RNG stream.

use ndarray::{Array1, ArrayView1};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::prox::ProxResult;

mod chain;
mod coinflip;
mod moreau;
mod quadratic;

pub use chain::{chain_instance, phi, phi_prime, ChainInstance, ChainParams};
pub use coinflip::{coinflip_instance, CoinFlipInstance, CoinParams};
pub use moreau::{moreau_instance, MoreauInstance, MoreauParams};
pub use quadratic::{quadratic_chain_instance, QuadraticChainInstance};

/// Function-class constants: L-Lipschitz, H-smooth (H may be infinite) on the
/// ball of radius B.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzSmoothClass {
    pub lipschitz: f64,
    pub smoothness: f64,
    pub radius: f64,
}

impl LipschitzSmoothClass {
    pub fn new(lipschitz: f64, smoothness: f64, radius: f64) -> Result<Self> {
        if !(lipschitz > 0.0) || !lipschitz.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "L must be positive and finite, got {lipschitz}"
            )));
        }
        if !(smoothness > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "H must be positive (possibly infinite), got {smoothness}"
            )));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "B must be positive and finite, got {radius}"
            )));
        }
        Ok(LipschitzSmoothClass {
            lipschitz,
            smoothness,
            radius,
        })
    }
}

/// Known optimum information attached to an instance.
#[derive(Debug, Clone)]
pub enum RefOptimum {
    /// F attains exactly this value at `x_star`.
    Exact(f64),
    /// Only an upper bound on min F is known.
    UpperBound(f64),
}

#[derive(Debug, Clone)]
pub struct Reference {
    pub x_star: Option<Array1<f64>>,
    pub optimum: RefOptimum,
}

/// A stochastic objective f(x; z) with oracle evaluators.
///
/// `z` is a small index whose meaning is instance-specific (mixture component,
/// coin outcome, noise key). Deterministic instances ignore it.
pub trait Instance: Send + Sync {
    fn name(&self) -> &'static str;
    fn dimension(&self) -> usize;
    fn class(&self) -> &LipschitzSmoothClass;

    /// Draws z from the instance's data distribution.
    fn sample_z(&self, rng: &mut dyn RngCore) -> u32;

    fn value(&self, x: &ArrayView1<f64>, z: u32) -> f64;
    fn gradient(&self, x: &ArrayView1<f64>, z: u32) -> Array1<f64>;

    /// argmin_y f(y; z) + (beta/2)|y - x|^2; beta must be positive.
    fn prox(&self, x: &ArrayView1<f64>, beta: f64, z: u32) -> Result<ProxResult>;

    fn supports_prox(&self) -> bool {
        true
    }

    /// Closed-form F(x) = E_z f(x; z) when available.
    fn mean_value(&self, x: &ArrayView1<f64>) -> Option<f64>;

    fn reference(&self) -> Option<&Reference>;

    /// Frame underlying the construction, for progress diagnostics.
    fn frame(&self) -> Option<&Frame> {
        None
    }

    /// Inner-product threshold under which a query reveals nothing new.
    fn progress_threshold(&self) -> Option<f64> {
        None
    }
}

/// Expected suboptimality of a point together with its Monte Carlo error.
#[derive(Debug, Clone, Copy)]
pub struct Suboptimality {
    pub value: f64,
    pub stderr: f64,
    /// True when measured against an upper bound on the optimum rather than
    /// the optimum itself (the value may then be negative).
    pub against_bound: bool,
}

/// E[f(x; z)] - min F, using closed forms when the instance has them (reps is
/// then ignored) and Monte Carlo with `reps` samples otherwise.
pub fn true_suboptimality(
    instance: &dyn Instance,
    x: &ArrayView1<f64>,
    reps: usize,
    seed: u64,
) -> Result<Suboptimality> {
    let reference = instance.reference().ok_or_else(|| {
        Error::UnsupportedInstance(format!("{} has no reference optimum", instance.name()))
    })?;
    let (floor, against_bound) = match reference.optimum {
        RefOptimum::Exact(f) => (f, false),
        RefOptimum::UpperBound(b) => (b, true),
    };
    if let Some(mean) = instance.mean_value(x) {
        return Ok(Suboptimality {
            value: mean - floor,
            stderr: 0.0,
            against_bound,
        });
    }
    if reps == 0 {
        return Err(Error::InvalidParameter(
            "Monte Carlo suboptimality needs reps >= 1".to_string(),
        ));
    }
    let mut rng = crate::rng::derive(seed, crate::rng::StreamKind::Output, 0x5B0);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..reps {
        let z = instance.sample_z(&mut rng);
        let v = instance.value(x, z);
        sum += v;
        sumsq += v * v;
    }
    let mean = sum / reps as f64;
    let var = (sumsq / reps as f64 - mean * mean).max(0.0);
    let stderr = if reps > 1 {
        (var / (reps - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(Suboptimality {
        value: mean - floor,
        stderr,
        against_bound,
    })
}

/// Projection onto the ball of radius B (algorithms own projection; instances
/// evaluate anywhere).
pub fn project_ball(x: &mut Array1<f64>, radius: f64) {
    let norm = x.dot(x).sqrt();
    if norm > radius {
        let scale = radius / norm;
        x.mapv_inplace(|v| v * scale);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_validation() {
        assert!(LipschitzSmoothClass::new(1.0, f64::INFINITY, 1.0).is_ok());
        assert!(LipschitzSmoothClass::new(0.0, 1.0, 1.0).is_err());
        assert!(LipschitzSmoothClass::new(1.0, 0.0, 1.0).is_err());
        assert!(LipschitzSmoothClass::new(1.0, 1.0, 0.0).is_err());
        assert!(LipschitzSmoothClass::new(f64::INFINITY, 1.0, 1.0).is_err());
    }

    #[test]
    fn suboptimality_requires_a_reference() {
        struct Bare;
        impl Instance for Bare {
            fn name(&self) -> &'static str {
                "bare"
            }
            fn dimension(&self) -> usize {
                1
            }
            fn class(&self) -> &LipschitzSmoothClass {
                unimplemented!()
            }
            fn sample_z(&self, _rng: &mut dyn RngCore) -> u32 {
                0
            }
            fn value(&self, _x: &ArrayView1<f64>, _z: u32) -> f64 {
                0.0
            }
            fn gradient(&self, x: &ArrayView1<f64>, _z: u32) -> Array1<f64> {
                Array1::zeros(x.len())
            }
            fn prox(&self, _x: &ArrayView1<f64>, _beta: f64, _z: u32) -> Result<ProxResult> {
                Err(Error::UnsupportedOracle("no prox".to_string()))
            }
            fn mean_value(&self, _x: &ArrayView1<f64>) -> Option<f64> {
                None
            }
            fn reference(&self) -> Option<&Reference> {
                None
            }
        }
        let x = Array1::zeros(1);
        assert!(matches!(
            true_suboptimality(&Bare, &x.view(), 4, 0),
            Err(Error::UnsupportedInstance(_))
        ));
    }
}
