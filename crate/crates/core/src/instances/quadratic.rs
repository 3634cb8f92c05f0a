//! Benign smooth quadratic benchmark with an exactly known minimizer.
//!
//! In frame coordinates u = V x,
//!   F(x) = (H/8) * ( u_1^2 + sum_{r=1}^{D-1} (u_r - u_{r+1})^2 + u_D^2 - 2 a0 u_1 ),
//! the chain quadratic with both ends pinned (for D = 1 the energy is the
//! single term u_1^2, the scalar quadratic). It is H-smooth and convex, its
//! minimizer solves a tridiagonal system (u*_r decays linearly along the
//! chain), and resolving it requires walking the chain one coordinate per
//! sequential gradient step, which is what makes it a meaningful rate
//! benchmark. Optional mean-zero gradient noise of scale sigma enters
//! linearly: f(x; z) = F(x) + sigma * g_z . x, keeping every sample convex
//! with the same curvature.

use ndarray::{Array1, ArrayView1};
use rand::RngCore;
use rand_distr::Distribution;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::instances::{Instance, LipschitzSmoothClass, RefOptimum, Reference};
use crate::prox::ProxResult;
use crate::rng;

pub struct QuadraticChainInstance {
    class: LipschitzSmoothClass,
    smoothness: f64,
    sigma: f64,
    a0: f64,
    frame: Frame,
    seed: u64,
    reference: Reference,
}

/// Solves a symmetric tridiagonal system (Thomas algorithm). `diag` and `off`
/// describe the matrix; `rhs` is consumed.
fn solve_tridiagonal(diag: &[f64], off: &[f64], mut rhs: Vec<f64>) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = diag.to_vec();
    for i in 1..n {
        let w = off[i - 1] / d[i - 1];
        d[i] -= w * off[i - 1];
        rhs[i] -= w * rhs[i - 1];
        c[i] = w;
    }
    let _ = c;
    let mut x = vec![0.0; n];
    x[n - 1] = rhs[n - 1] / d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (rhs[i] - off[i] * x[i + 1]) / d[i];
    }
    x
}

pub fn quadratic_chain_instance(
    smoothness: f64,
    b: f64,
    d: usize,
    m: usize,
    seed: u64,
    sigma: f64,
) -> Result<QuadraticChainInstance> {
    if d == 0 {
        return Err(Error::InvalidParameter("D must be >= 1".to_string()));
    }
    if m < d {
        return Err(Error::InvalidParameter(format!(
            "dimension {m} is below the frame size {d}"
        )));
    }
    if !(smoothness > 0.0) || !smoothness.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "H must be positive and finite, got {smoothness}"
        )));
    }
    if sigma < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    let frame = Frame::sample(m, d, seed)?;
    // Minimizer: ((H/4) A) u = (H/4) a0 e_1, i.e. A u = a0 e_1. Solve once
    // with a unit right-hand side and scale a0 so |x*| = B/2.
    let (diag, off) = chain_matrix(d);
    let mut rhs = vec![0.0; d];
    rhs[0] = 1.0;
    let unit_profile = Array1::from(solve_tridiagonal(&diag, &off, rhs));
    let a0 = b / (2.0 * unit_profile.dot(&unit_profile).sqrt());
    let u_star = unit_profile.mapv(|v| a0 * v);
    let x_star = frame.lift(&u_star.view());

    // Nominal Lipschitz bound over the ball; the noise tail is folded in at
    // three sigmas.
    let l = smoothness / 4.0 * (4.0 * b + a0) + 3.0 * sigma;
    let class = LipschitzSmoothClass::new(l, smoothness, b)?;

    let mut inst = QuadraticChainInstance {
        class,
        smoothness,
        sigma,
        a0,
        frame,
        seed,
        reference: Reference {
            x_star: None,
            optimum: RefOptimum::Exact(0.0),
        },
    };
    let f_star = inst.mean_closed_form(&x_star.view());
    inst.reference = Reference {
        x_star: Some(x_star),
        optimum: RefOptimum::Exact(f_star),
    };
    Ok(inst)
}

/// Tridiagonal quadratic form of the pinned chain: diag = 2, off = -1; the
/// single-link case D = 1 degenerates to the scalar u^2.
fn chain_matrix(d: usize) -> (Vec<f64>, Vec<f64>) {
    if d == 1 {
        return (vec![1.0], Vec::new());
    }
    (vec![2.0; d], vec![-1.0; d - 1])
}

impl QuadraticChainInstance {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The frame used by the construction (for tests and diagnostics).
    pub fn chain_frame(&self) -> &Frame {
        &self.frame
    }

    fn noise_vector(&self, z: u32) -> Array1<f64> {
        let m = self.frame.dimension();
        let mut gen = rng::derive(self.seed ^ 0x004e_015e, rng::StreamKind::Shared, z as u64);
        let scale = 1.0 / (m as f64).sqrt();
        Array1::from_shape_fn(m, |_| {
            let g: f64 = StandardNormal.sample(&mut gen);
            g * scale
        })
    }

    /// A u in the chain quadratic form.
    fn apply_chain(&self, u: &Array1<f64>) -> Array1<f64> {
        let d = u.len();
        if d == 1 {
            return u.clone();
        }
        let mut out = Array1::zeros(d);
        for i in 0..d {
            let mut v = 2.0 * u[i];
            if i > 0 {
                v -= u[i - 1];
            }
            if i + 1 < d {
                v -= u[i + 1];
            }
            out[i] = v;
        }
        out
    }

    fn mean_closed_form(&self, x: &ArrayView1<f64>) -> f64 {
        let u = self.frame.project(x);
        let au = self.apply_chain(&u);
        self.smoothness / 8.0 * (u.dot(&au) - 2.0 * self.a0 * u[0])
    }

    /// Gradient of F = E_z f(.; z) in closed form.
    pub fn mean_gradient(&self, x: &ArrayView1<f64>) -> Array1<f64> {
        let u = self.frame.project(x);
        let mut au = self.apply_chain(&u);
        au[0] -= self.a0;
        au.mapv_inplace(|v| v * self.smoothness / 4.0);
        self.frame.lift(&au.view())
    }
}

impl Instance for QuadraticChainInstance {
    fn name(&self) -> &'static str {
        "quadratic_chain"
    }

    fn dimension(&self) -> usize {
        self.frame.dimension()
    }

    fn class(&self) -> &LipschitzSmoothClass {
        &self.class
    }

    fn sample_z(&self, rng: &mut dyn RngCore) -> u32 {
        if self.sigma == 0.0 {
            0
        } else {
            rng.next_u32()
        }
    }

    fn value(&self, x: &ArrayView1<f64>, z: u32) -> f64 {
        let mut v = self.mean_closed_form(x);
        if self.sigma > 0.0 {
            v += self.sigma * self.noise_vector(z).dot(x);
        }
        v
    }

    fn gradient(&self, x: &ArrayView1<f64>, z: u32) -> Array1<f64> {
        let mut g = self.mean_gradient(x);
        if self.sigma > 0.0 {
            g.scaled_add(self.sigma, &self.noise_vector(z));
        }
        g
    }

    fn prox(&self, x: &ArrayView1<f64>, beta: f64, z: u32) -> Result<ProxResult> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "prox requires beta > 0, got {beta}"
            )));
        }
        // Split into frame span and complement; both parts solve exactly.
        let d = self.frame.count();
        let u_x = self.frame.project(x);
        let noise = if self.sigma > 0.0 {
            Some(self.noise_vector(z))
        } else {
            None
        };
        let scale = self.smoothness / 4.0;
        let (mut diag, mut off) = chain_matrix(d);
        for v in diag.iter_mut() {
            *v = *v * scale + beta;
        }
        for v in off.iter_mut() {
            *v *= scale;
        }
        let mut rhs: Vec<f64> = (0..d).map(|i| beta * u_x[i]).collect();
        rhs[0] += scale * self.a0;
        if let Some(g) = &noise {
            let w = self.frame.project(&g.view());
            for i in 0..d {
                rhs[i] -= self.sigma * w[i];
            }
        }
        let u_y = Array1::from(solve_tridiagonal(&diag, &off, rhs));

        let mut point = x.to_owned();
        point.scaled_add(-1.0, &self.frame.lift(&u_x.view()));
        if let Some(g) = &noise {
            let w = self.frame.project(&g.view());
            let mut g_perp = g.clone();
            g_perp.scaled_add(-1.0, &self.frame.lift(&w.view()));
            point.scaled_add(-self.sigma / beta, &g_perp);
        }
        point += &self.frame.lift(&u_y.view());

        let diff = &point - x;
        let objective = self.value(&point.view(), z) + 0.5 * beta * diff.dot(&diff);
        let mut stat = self.gradient(&point.view(), z);
        stat.scaled_add(beta, &diff);
        let residual = stat.dot(&stat).sqrt();
        Ok(ProxResult {
            point,
            objective,
            residual,
            active_set: None,
        })
    }

    fn mean_value(&self, x: &ArrayView1<f64>) -> Option<f64> {
        Some(self.mean_closed_form(x))
    }

    fn reference(&self) -> Option<&Reference> {
        Some(&self.reference)
    }

    fn frame(&self) -> Option<&Frame> {
        Some(&self.frame)
    }
}
