//! Seeded synthetic terrain for desk-scale runs, tests and benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dem::DemGrid;

/// Sum of a tilted plane, a few Gaussian hills and pits, and one elongated
/// ridge. Elevations are in meters around 1000 m.
pub fn synthetic_terrain(size: usize, seed: u64) -> DemGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size as f64;
    let tilt = (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
    let mut bumps = Vec::new();
    for i in 0..5 {
        let sign = if i < 3 { 1.0 } else { -1.0 };
        bumps.push((
            rng.random_range(0.1..0.9) * n,
            rng.random_range(0.1..0.9) * n,
            rng.random_range(0.08..0.22) * n,
            sign * rng.random_range(20.0..80.0),
        ));
    }
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (ry, rx) = (rng.random_range(0.3..0.7) * n, rng.random_range(0.3..0.7) * n);
    let ridge_h = rng.random_range(30.0..70.0);
    let ridge_w = rng.random_range(0.02..0.05) * n;
    let heights = Array2::from_shape_fn((size, size), |(r, c)| {
        let (y, x) = (r as f64, c as f64);
        let mut h = 1000.0 + tilt.0 * y + tilt.1 * x;
        for &(by, bx, s, a) in &bumps {
            let d2 = (y - by).powi(2) + (x - bx).powi(2);
            h += a * (-d2 / (2.0 * s * s)).exp();
        }
        // distance to a line through (ry, rx)
        let d = (-(y - ry) * angle.cos() + (x - rx) * angle.sin()).abs();
        h += ridge_h * (1.0 - d / (4.0 * ridge_w)).max(0.0);
        h
    });
    DemGrid::new(heights, crate::dem::DEFAULT_PIXEL_SIZE_M)
        .expect("synthetic terrain is finite")
        .with_origin(format!("synth{seed}"))
}
