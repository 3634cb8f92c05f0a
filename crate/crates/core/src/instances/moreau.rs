//! Max-affine hard instance smoothed by its Moreau envelope.
//!
//! The underlying non-smooth function is
//!   g(y) = max_r ( ell * v_r . y - 5 ell^2 (r - 1) / eta ),  r = 1..D+1,
//! over an orthonormal frame v_1..v_{D+1}, and the instance evaluates its
//! eta-Moreau envelope f(x) = min_y g(y) + (eta/2)|y - x|^2, which is convex,
//! ell-Lipschitz and eta-smooth. Deterministic: the z distribution is a point
//! mass and the evaluators ignore z.

use ndarray::{Array1, ArrayView1};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::instances::{Instance, LipschitzSmoothClass, RefOptimum, Reference};
use crate::prox::{prox_max_affine, prox_smooth_numeric, ProxResult, SmoothConvex};

#[derive(Debug, Clone)]
pub struct MoreauParams {
    /// Clipped Lipschitz scale: ell = min(L, H / (10 (D+1)^1.5)).
    pub ell: f64,
    /// Envelope smoothing constant: eta = 10 (D+1)^1.5 ell.
    pub eta: f64,
    pub chain_length: usize,
}

pub struct MoreauInstance {
    class: LipschitzSmoothClass,
    params: MoreauParams,
    frame: Frame,
    offsets: Vec<f64>,
    reference: Reference,
}

/// Builds the envelope instance for class (L, H, B), chain parameter D, in
/// dimension m >= D + 1.
pub fn moreau_instance(
    class: LipschitzSmoothClass,
    d: usize,
    m: usize,
    seed: u64,
) -> Result<MoreauInstance> {
    if d == 0 {
        return Err(Error::InvalidParameter("D must be >= 1".to_string()));
    }
    if m < d + 1 {
        return Err(Error::InvalidParameter(format!(
            "dimension {m} is below the frame size {}",
            d + 1
        )));
    }
    let pieces = d + 1;
    let scale_pow = 10.0 * (pieces as f64).powf(1.5);
    let ell = if class.smoothness.is_finite() {
        class.lipschitz.min(class.smoothness / scale_pow)
    } else {
        class.lipschitz
    };
    let eta = scale_pow * ell;
    let frame = Frame::sample(m, pieces, seed)?;
    let offsets: Vec<f64> = (0..pieces)
        .map(|r| 5.0 * ell * ell * r as f64 / eta)
        .collect();

    // The point -sum_r v_r / sqrt(D+1) certifies min F <= -ell / sqrt(D+1).
    let mut anchor = Array1::zeros(m);
    let w = -1.0 / (pieces as f64).sqrt();
    for r in 0..pieces {
        anchor.scaled_add(w, &frame.row(r));
    }
    if anchor.dot(&anchor).sqrt() > class.radius + 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "domain radius B = {} does not contain the unit-norm reference point",
            class.radius
        )));
    }
    let reference = Reference {
        x_star: Some(anchor),
        optimum: RefOptimum::UpperBound(-ell / (pieces as f64).sqrt()),
    };

    Ok(MoreauInstance {
        class,
        params: MoreauParams {
            ell,
            eta,
            chain_length: d,
        },
        frame,
        offsets,
        reference,
    })
}

impl MoreauInstance {
    pub fn params(&self) -> &MoreauParams {
        &self.params
    }

    /// Envelope value and gradient at x via the exact max-affine prox.
    pub fn envelope_at(&self, x: &ArrayView1<f64>) -> (f64, Array1<f64>) {
        let res = prox_max_affine(
            &self.frame.rows(),
            &self.offsets,
            self.params.ell,
            x,
            self.params.eta,
        )
        .expect("frame is orthonormal by construction");
        let mut grad = x.to_owned();
        grad.scaled_add(-1.0, &res.point);
        grad.mapv_inplace(|v| v * self.params.eta);
        (res.objective, grad)
    }

    /// The underlying non-smooth max-affine function.
    pub fn pointwise_max(&self, x: &ArrayView1<f64>) -> f64 {
        let u = self.frame.project(x);
        (0..self.frame.count())
            .map(|r| self.params.ell * u[r] - self.offsets[r])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Prox point of the underlying max-affine function at (x, beta).
    pub fn inner_prox(&self, x: &ArrayView1<f64>, beta: f64) -> Result<ProxResult> {
        prox_max_affine(&self.frame.rows(), &self.offsets, self.params.ell, x, beta)
    }
}

struct Envelope<'a>(&'a MoreauInstance);

impl SmoothConvex for Envelope<'_> {
    fn value(&self, y: &ArrayView1<f64>) -> f64 {
        self.0.envelope_at(y).0
    }
    fn gradient(&self, y: &ArrayView1<f64>) -> Array1<f64> {
        self.0.envelope_at(y).1
    }
    fn smoothness(&self) -> f64 {
        self.0.params.eta
    }
}

impl Instance for MoreauInstance {
    fn name(&self) -> &'static str {
        "moreau"
    }

    fn dimension(&self) -> usize {
        self.frame.dimension()
    }

    fn class(&self) -> &LipschitzSmoothClass {
        &self.class
    }

    fn sample_z(&self, _rng: &mut dyn RngCore) -> u32 {
        0
    }

    fn value(&self, x: &ArrayView1<f64>, _z: u32) -> f64 {
        self.envelope_at(x).0
    }

    fn gradient(&self, x: &ArrayView1<f64>, _z: u32) -> Array1<f64> {
        self.envelope_at(x).1
    }

    fn prox(&self, x: &ArrayView1<f64>, beta: f64, _z: u32) -> Result<ProxResult> {
        prox_smooth_numeric(&Envelope(self), x, beta, None)
    }

    fn mean_value(&self, x: &ArrayView1<f64>) -> Option<f64> {
        Some(self.envelope_at(x).0)
    }

    fn reference(&self) -> Option<&Reference> {
        Some(&self.reference)
    }

    fn frame(&self) -> Option<&Frame> {
        Some(&self.frame)
    }

    fn progress_threshold(&self) -> Option<f64> {
        Some(self.params.ell / self.params.eta)
    }
}
