//! Shared fixtures for the simulator benchmarks.

use ndarray::Array1;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pograph_core::frame::Frame;
use pograph_core::instances::LipschitzSmoothClass;

pub fn unit_class() -> LipschitzSmoothClass {
    LipschitzSmoothClass::new(1.0, 4.0, 1.0).unwrap()
}

pub fn random_point(dim: usize, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Array1<f64> = Array1::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0));
    let norm = x.dot(&x).sqrt();
    if norm > 1.0 {
        x.mapv_inplace(|v| v / norm);
    }
    x
}

pub fn bench_frame(dim: usize, k: usize) -> Frame {
    Frame::sample(dim, k, 42).unwrap()
}
