//! Rate series and log-log slope fitting.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy)]
pub struct RatePoint {
    pub scale: f64,
    pub suboptimality: f64,
    pub stderr: f64,
    /// Set when a non-positive measurement was clamped to machine epsilon
    /// before the log transform.
    pub clamped: bool,
}

/// (scale, suboptimality) measurements with a fitted log-log slope and a
/// bootstrap confidence interval over seeds.
#[derive(Debug, Clone)]
pub struct RateSeries {
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub slope_ci: (f64, f64),
}

const BOOTSTRAP_RESAMPLES: usize = 200;

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

fn log_clamped(v: f64) -> (f64, bool) {
    if v > 0.0 {
        (v.ln(), false)
    } else {
        (f64::EPSILON.ln(), true)
    }
}

impl RateSeries {
    /// Fits from per-scale, per-seed measurements. Every scale must carry the
    /// same number of seeds; the bootstrap resamples the seed dimension.
    pub fn fit(scales: &[f64], per_seed: &[Vec<f64>]) -> Result<RateSeries> {
        if scales.len() < 3 {
            return Err(Error::InvalidParameter(format!(
                "rate series needs >= 3 points, got {}",
                scales.len()
            )));
        }
        if scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "rate series scales must be strictly increasing".to_string(),
            ));
        }
        if per_seed.len() != scales.len() {
            return Err(Error::InvalidArgument(
                "one measurement vector per scale required".to_string(),
            ));
        }
        let seeds = per_seed[0].len();
        if seeds == 0 || per_seed.iter().any(|v| v.len() != seeds) {
            return Err(Error::InvalidArgument(
                "every scale needs the same nonzero seed count".to_string(),
            ));
        }

        let mut points = Vec::with_capacity(scales.len());
        let log_x: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
        let mut log_y = Vec::with_capacity(scales.len());
        for (scale, values) in scales.iter().zip(per_seed) {
            let mean = values.iter().sum::<f64>() / seeds as f64;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / seeds as f64;
            let stderr = if seeds > 1 {
                (var / (seeds - 1) as f64).sqrt()
            } else {
                0.0
            };
            let (ly, clamped) = log_clamped(mean);
            log_y.push(ly);
            points.push(RatePoint {
                scale: *scale,
                suboptimality: mean,
                stderr,
                clamped,
            });
        }
        let slope = least_squares_slope(&log_x, &log_y);

        let mut gen = rng::derive(0xB007, rng::StreamKind::Shared, seeds as u64);
        let mut resampled = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
        for _ in 0..BOOTSTRAP_RESAMPLES {
            let picks: Vec<usize> = (0..seeds).map(|_| gen.random_range(0..seeds)).collect();
            let ys: Vec<f64> = per_seed
                .iter()
                .map(|values| {
                    let mean = picks.iter().map(|&i| values[i]).sum::<f64>() / seeds as f64;
                    log_clamped(mean).0
                })
                .collect();
            resampled.push(least_squares_slope(&log_x, &ys));
        }
        resampled.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = resampled[(BOOTSTRAP_RESAMPLES as f64 * 0.025) as usize];
        let hi = resampled[(BOOTSTRAP_RESAMPLES as f64 * 0.975).ceil() as usize - 1];

        Ok(RateSeries {
            points,
            slope,
            slope_ci: (lo, hi),
        })
    }
}
