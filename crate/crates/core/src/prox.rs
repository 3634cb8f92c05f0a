//! Proximal-operator solvers.
//!
//! Two shapes cover everything the instances and algorithms need: an exact
//! solver for max-affine functions over an orthonormal frame, and an
//! accelerated-gradient solver for smooth strongly convex prox subproblems.

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Result of a prox evaluation: argmin_y f(y) + (beta/2)|y - x|^2.
#[derive(Debug, Clone)]
pub struct ProxResult {
    /// The proximal point y*.
    pub point: Array1<f64>,
    /// f(y*) + (beta/2)|y* - x|^2, i.e. the envelope value at x.
    pub objective: f64,
    /// Stationarity measure; solver-specific but always ~0 at an exact solution.
    pub residual: f64,
    /// Pieces with positive multipliers (max-affine solver only).
    pub active_set: Option<Vec<usize>>,
}

/// Smooth convex objective with a known smoothness bound, as required by the
/// numeric prox solver.
pub trait SmoothConvex: Sync {
    fn value(&self, y: &ArrayView1<f64>) -> f64;
    fn gradient(&self, y: &ArrayView1<f64>) -> Array1<f64>;
    /// Upper bound on the gradient's Lipschitz constant.
    fn smoothness(&self) -> f64;
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "prox requires beta > 0, got {beta}"
        )));
    }
    Ok(())
}

/// Exact prox of y -> max_r (scale * v_r . y - offsets[r]) with orthonormal
/// rows v_r.
///
/// The minimizer has the form y* = x - (scale/beta) * sum_r lambda_r v_r with
/// lambda in the simplex supported on the argmax pieces at y*. In frame
/// coordinates the dual is a Euclidean projection onto the simplex, which the
/// sort-based pivot rule solves exactly for any number of pieces; ties at the
/// support boundary resolve toward smaller piece indices via the stable sort.
/// The component of x orthogonal to the frame span is untouched.
pub fn prox_max_affine(
    frame: &ArrayView2<f64>,
    offsets: &[f64],
    scale: f64,
    x: &ArrayView1<f64>,
    beta: f64,
) -> Result<ProxResult> {
    check_beta(beta)?;
    let k = frame.nrows();
    let m = frame.ncols();
    if offsets.len() != k {
        return Err(Error::InvalidParameter(format!(
            "{} offsets for {k} frame rows",
            offsets.len()
        )));
    }
    if x.len() != m {
        return Err(Error::InvalidParameter(format!(
            "point dimension {} does not match frame columns {m}",
            x.len()
        )));
    }
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter(
            "scale must be positive".to_string(),
        ));
    }
    for i in 0..k {
        for j in i..k {
            let dot = frame.row(i).dot(&frame.row(j));
            let target = if i == j { 1.0 } else { 0.0 };
            if (dot - target).abs() > 1e-8 {
                return Err(Error::InvalidParameter(format!(
                    "frame rows {i},{j} are not orthonormal (gram = {dot})"
                )));
            }
        }
    }

    // Piece values at x.
    let g: Vec<f64> = (0..k)
        .map(|r| scale * frame.row(r).dot(x) - offsets[r])
        .collect();

    // Project (beta/scale^2) * g onto the simplex.
    let w: Vec<f64> = g.iter().map(|gi| beta / (scale * scale) * gi).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).unwrap().then(a.cmp(&b)));
    let mut cumsum = 0.0;
    let mut pivot = 0.0;
    let mut support = 0;
    for (j, &r) in order.iter().enumerate() {
        cumsum += w[r];
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if w[r] - candidate > 0.0 {
            pivot = candidate;
            support = j + 1;
        } else {
            break;
        }
    }
    let mut lambda = vec![0.0; k];
    for &r in &order[..support] {
        lambda[r] = (w[r] - pivot).max(0.0);
    }
    // Renormalize away rounding drift in the pivot arithmetic.
    let total: f64 = lambda.iter().sum();
    for l in lambda.iter_mut() {
        *l /= total;
    }
    let active: Vec<usize> = (0..k).filter(|&r| lambda[r] > 0.0).collect();

    let mut point = x.to_owned();
    for &r in &active {
        let coeff = scale / beta * lambda[r];
        point.scaled_add(-coeff, &frame.row(r));
    }

    let piece_values: Vec<f64> = (0..k)
        .map(|r| scale * frame.row(r).dot(&point.view()) - offsets[r])
        .collect();
    let max_value = piece_values
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let certified: f64 = (0..k).map(|r| lambda[r] * piece_values[r]).sum();
    let diff = &point - x;
    let objective = max_value + 0.5 * beta * diff.dot(&diff);
    // Complementary-slackness gap; zero up to rounding when the support is right.
    let residual = (max_value - certified).max(0.0);

    Ok(ProxResult {
        point,
        objective,
        residual,
        active_set: Some(active),
    })
}

/// Iteration cap for the numeric solver.
pub const PROX_NUMERIC_MAX_ITERS: usize = 1_000_000;

/// Numeric prox for a smooth convex f: minimizes the beta-strongly-convex,
/// (H_f + beta)-smooth objective by accelerated gradient descent from y0 = x,
/// stopping when the full gradient norm falls below `tol`
/// (default 1e-10 * max(1, beta * |x|)). Deterministic.
pub fn prox_smooth_numeric(
    f: &dyn SmoothConvex,
    x: &ArrayView1<f64>,
    beta: f64,
    tol: Option<f64>,
) -> Result<ProxResult> {
    check_beta(beta)?;
    let x_norm = x.dot(x).sqrt();
    let tol = tol.unwrap_or(1e-10 * (beta * x_norm).max(1.0));
    let smooth = f.smoothness() + beta;
    let step = 1.0 / smooth;
    let kappa_sqrt = (smooth / beta).sqrt();
    let momentum = (kappa_sqrt - 1.0) / (kappa_sqrt + 1.0);

    let mut y_prev = x.to_owned();
    let mut probe = x.to_owned();
    for _ in 0..PROX_NUMERIC_MAX_ITERS {
        let mut grad = f.gradient(&probe.view());
        grad.scaled_add(beta, &probe);
        grad.scaled_add(-beta, x);
        let gnorm = grad.dot(&grad).sqrt();
        if gnorm <= tol {
            let diff = &probe - x;
            let objective = f.value(&probe.view()) + 0.5 * beta * diff.dot(&diff);
            return Ok(ProxResult {
                point: probe,
                objective,
                residual: gnorm,
                active_set: None,
            });
        }
        let mut y_new = probe.clone();
        y_new.scaled_add(-step, &grad);
        let mut next = y_new.clone();
        next.scaled_add(momentum, &(&y_new - &y_prev));
        y_prev = y_new;
        probe = next;
    }
    let mut grad = f.gradient(&probe.view());
    grad.scaled_add(beta, &probe);
    grad.scaled_add(-beta, x);
    Err(Error::ConvergenceFailure {
        iterations: PROX_NUMERIC_MAX_ITERS,
        residual: grad.dot(&grad).sqrt(),
    })
}

/// Moreau-envelope value and gradient from a prox evaluator:
/// value = f(y*) + (beta/2)|y* - x|^2 and gradient = beta (x - y*).
pub fn moreau_grad<P>(prox: P, x: &ArrayView1<f64>, beta: f64) -> Result<(f64, Array1<f64>)>
where
    P: Fn(&ArrayView1<f64>, f64) -> Result<ProxResult>,
{
    check_beta(beta)?;
    let result = prox(x, beta)?;
    let mut grad = x.to_owned();
    grad.scaled_add(-1.0, &result.point);
    grad.mapv_inplace(|v| beta * v);
    Ok((result.objective, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Frame;
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;
    use rand::Rng;

    struct Zero;
    impl SmoothConvex for Zero {
        fn value(&self, _y: &ArrayView1<f64>) -> f64 {
            0.0
        }
        fn gradient(&self, y: &ArrayView1<f64>) -> Array1<f64> {
            Array1::zeros(y.len())
        }
        fn smoothness(&self) -> f64 {
            0.0
        }
    }

    struct Ridge {
        h: f64,
    }
    impl SmoothConvex for Ridge {
        fn value(&self, y: &ArrayView1<f64>) -> f64 {
            0.5 * self.h * y.dot(y)
        }
        fn gradient(&self, y: &ArrayView1<f64>) -> Array1<f64> {
            y.mapv(|v| self.h * v)
        }
        fn smoothness(&self) -> f64 {
            self.h
        }
    }

    fn unit_frame(k: usize, m: usize) -> Frame {
        Frame::sample(m, k, 99).unwrap()
    }

    #[test]
    fn single_piece_shifts_by_gradient_over_beta() {
        let frame = unit_frame(1, 6);
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = Array1::from_shape_fn(6, |_| rng.random_range(-1.0..1.0));
        let beta = 2.5;
        let scale = 0.7;
        let res = prox_max_affine(&frame.rows(), &[0.0], scale, &x.view(), beta).unwrap();
        let mut expected = x.clone();
        expected.scaled_add(-scale / beta, &frame.rows().row(0));
        for i in 0..6 {
            assert_abs_diff_eq!(res.point[i], expected[i], epsilon = 1e-12);
        }
        assert_eq!(res.active_set.as_deref(), Some(&[0usize][..]));
    }

    #[test]
    fn origin_with_decreasing_offsets_activates_first_piece() {
        // Offsets grow with r, so at the origin only piece 0 is active and
        // y* = -(scale/beta) v_0.
        let k = 4;
        let frame = unit_frame(k, 12);
        let scale = 1.0;
        let eta = 10.0 * (k as f64).powf(1.5) * scale;
        let offsets: Vec<f64> = (0..k)
            .map(|r| 5.0 * scale * scale * r as f64 / eta)
            .collect();
        let x = Array1::zeros(12);
        let res = prox_max_affine(&frame.rows(), &offsets, scale, &x.view(), eta).unwrap();
        assert_eq!(res.active_set.as_deref(), Some(&[0usize][..]));
        let mut expected = Array1::zeros(12);
        expected.scaled_add(-scale / eta, &frame.rows().row(0));
        for i in 0..12 {
            assert_abs_diff_eq!(res.point[i], expected[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let frame = unit_frame(2, 4);
        let x = Array1::zeros(4);
        assert!(prox_max_affine(&frame.rows(), &[0.0, 0.0], 1.0, &x.view(), 0.0).is_err());
        assert!(prox_max_affine(&frame.rows(), &[0.0], 1.0, &x.view(), 1.0).is_err());
        // Non-orthonormal rows.
        let bad = ndarray::Array2::from_shape_fn((2, 4), |(i, j)| (i + j) as f64 * 0.3 + 0.1);
        assert!(prox_max_affine(&bad.view(), &[0.0, 0.0], 1.0, &x.view(), 1.0).is_err());
    }

    #[test]
    fn numeric_prox_of_zero_is_identity() {
        let x = Array1::from(vec![0.4, -1.2, 3.0]);
        let res = prox_smooth_numeric(&Zero, &x.view(), 2.0, None).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(res.point[i], x[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn numeric_prox_matches_ridge_closed_form() {
        let h = 3.0;
        let beta = 1.5;
        let x = Array1::from(vec![1.0, -2.0, 0.5, 4.0]);
        let res = prox_smooth_numeric(&Ridge { h }, &x.view(), beta, None).unwrap();
        let factor = beta / (h + beta);
        for i in 0..4 {
            assert_abs_diff_eq!(res.point[i], factor * x[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn moreau_grad_zero_at_minimizer() {
        let h = 2.0;
        let x = Array1::zeros(3);
        let (value, grad) = moreau_grad(
            |p: &ArrayView1<f64>, beta| prox_smooth_numeric(&Ridge { h }, p, beta, None),
            &x.view(),
            1.0,
        )
        .unwrap();
        assert_abs_diff_eq!(value, 0.0, epsilon = 1e-12);
        assert!(grad.dot(&grad).sqrt() < 1e-10);
    }

    #[test]
    fn moreau_grad_matches_finite_differences() {
        let h = 2.0;
        let beta = 0.8;
        let x = Array1::from(vec![0.7, -0.3, 1.1]);
        let envelope = |p: &ArrayView1<f64>| -> f64 {
            prox_smooth_numeric(&Ridge { h }, p, beta, Some(1e-13))
                .unwrap()
                .objective
        };
        let (_, grad) = moreau_grad(
            |p: &ArrayView1<f64>, b| prox_smooth_numeric(&Ridge { h }, p, b, Some(1e-13)),
            &x.view(),
            beta,
        )
        .unwrap();
        let eps = 1e-6;
        for i in 0..3 {
            let mut lo = x.clone();
            let mut hi = x.clone();
            lo[i] -= eps;
            hi[i] += eps;
            let fd = (envelope(&hi.view()) - envelope(&lo.view())) / (2.0 * eps);
            assert!((fd - grad[i]).abs() <= 1e-5 * grad[i].abs().max(1.0));
        }
    }

    proptest::proptest! {
        #[test]
        fn max_affine_prox_is_nonexpansive(seed in 0u64..200) {
            use rand_chacha::rand_core::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let k = 5;
            let m = 16;
            let frame = Frame::sample(m, k, 7).unwrap();
            let offsets: Vec<f64> = (0..k).map(|r| 0.05 * r as f64).collect();
            let x = Array1::from_shape_fn(m, |_| rng.random_range(-1.0..1.0));
            let y = Array1::from_shape_fn(m, |_| rng.random_range(-1.0..1.0));
            let beta = rng.random_range(0.2..5.0);
            let px = prox_max_affine(&frame.rows(), &offsets, 1.0, &x.view(), beta).unwrap().point;
            let py = prox_max_affine(&frame.rows(), &offsets, 1.0, &y.view(), beta).unwrap().point;
            let d_in = (&x - &y).mapv(|v| v * v).sum().sqrt();
            let d_out = (&px - &py).mapv(|v| v * v).sum().sqrt();
            proptest::prop_assert!(d_out <= d_in + 1e-10);
        }
    }
}
