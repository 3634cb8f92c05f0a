//! Seeded orthonormal frames.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

/// k orthonormal rows in R^m, rotation-invariantly distributed: a seeded
/// Gaussian matrix orthonormalized by modified Gram-Schmidt with one
/// re-orthogonalization pass (off-diagonal Gram entries land near 1e-16).
#[derive(Debug, Clone)]
pub struct Frame {
    rows: Array2<f64>,
}

impl Frame {
    pub fn sample(m: usize, k: usize, seed: u64) -> Result<Frame> {
        if k == 0 {
            return Err(Error::InvalidParameter(
                "frame needs k >= 1 rows".to_string(),
            ));
        }
        if k > m {
            return Err(Error::InvalidParameter(format!(
                "cannot draw {k} orthonormal vectors in dimension {m}"
            )));
        }
        let mut gen = rng::derive(seed, rng::StreamKind::Shared, 0xF4A3);
        let mut rows = Array2::from_shape_fn((k, m), |_| gen.sample::<f64, _>(StandardNormal));
        for _pass in 0..2 {
            for i in 0..k {
                for j in 0..i {
                    let proj = rows.row(i).dot(&rows.row(j));
                    let prev = rows.row(j).to_owned();
                    rows.row_mut(i).scaled_add(-proj, &prev);
                }
                let norm = rows.row(i).dot(&rows.row(i)).sqrt();
                if norm < 1e-10 {
                    return Err(Error::InvalidParameter(
                        "degenerate Gaussian draw while orthonormalizing".to_string(),
                    ));
                }
                rows.row_mut(i).mapv_inplace(|v| v / norm);
            }
        }
        Ok(Frame { rows })
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn row(&self, r: usize) -> ArrayView1<'_, f64> {
        self.rows.row(r)
    }

    /// Number of frame vectors.
    pub fn count(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.rows.ncols()
    }

    /// Frame coordinates of x: u_r = v_r . x.
    pub fn project(&self, x: &ArrayView1<f64>) -> Array1<f64> {
        self.rows.dot(x)
    }

    /// Sum of u_r * v_r.
    pub fn lift(&self, u: &ArrayView1<f64>) -> Array1<f64> {
        self.rows.t().dot(u)
    }
}
