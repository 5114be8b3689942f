//! Ridge and valley lines from the blurred-residual of a patch.
//!
//! `r = p - G_sigma * p`. Ridge candidates are the pixels with `r` above its
//! `tau` quantile, valley candidates those below its `1 - tau` quantile;
//! both must also clear `min_residual` in magnitude. Candidates are thinned
//! along their crest (largest `|r|` kept) and short fragments are dropped.
//!
//! The blur is arranged so that the masks commute exactly with 90° rotations
//! and with `p -> 1 - p` (up to ties): each 1-D pass sums mirrored taps in
//! pairs, borders use point reflection (`x[-k] = 2 x[0] - x[k]`, exact on
//! linear surfaces), and the 2-D result averages the row-first and
//! column-first orders.

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis};

use super::mask::{remove_small_components, Mask};
use super::thin::thin_ordered;
use crate::dem::NormalizedPatch;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RidgeValleyParams {
    pub blur_sigma_px: f64,
    pub tau_quantile: f64,
    /// Skeleton fragments with fewer pixels are removed.
    pub min_component_px: usize,
    /// Residuals smaller than this (normalized units) are never lines.
    pub min_residual: f64,
}

impl Default for RidgeValleyParams {
    fn default() -> Self {
        Self {
            blur_sigma_px: 8.0,
            tau_quantile: 0.92,
            min_component_px: 8,
            min_residual: 1e-6,
        }
    }
}

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let w: Vec<f64> = (0..=radius)
        .map(|k| (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total = w[0] + 2.0 * w[1..].iter().sum::<f64>();
    w.into_iter().map(|x| x / total).collect()
}

/// Point reflection at the ends; indices past a full reflection clamp.
fn sample(x: &ArrayView1<f64>, i: i64) -> f64 {
    let n = x.len() as i64;
    if i < 0 {
        2.0 * x[0] - x[(-i).min(n - 1) as usize]
    } else if i >= n {
        2.0 * x[(n - 1) as usize] - x[(2 * (n - 1) - i).max(0) as usize]
    } else {
        x[i as usize]
    }
}

fn blur_line(src: ArrayView1<f64>, mut dst: ArrayViewMut1<f64>, taps: &[f64]) {
    for i in 0..src.len() {
        let ii = i as i64;
        let mut acc = taps[0] * src[i];
        for (k, w) in taps.iter().enumerate().skip(1) {
            let k = k as i64;
            acc += w * (sample(&src, ii - k) + sample(&src, ii + k));
        }
        dst[i] = acc;
    }
}

fn blur_axis(src: &Array2<f64>, axis: Axis, taps: &[f64]) -> Array2<f64> {
    let mut out = Array2::zeros(src.dim());
    for (s, d) in src.lanes(axis).into_iter().zip(out.lanes_mut(axis)) {
        blur_line(s, d, taps);
    }
    out
}

pub fn gaussian_blur(src: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return src.clone();
    }
    let taps = gaussian_taps(sigma);
    let rows_first = blur_axis(&blur_axis(src, Axis(1), &taps), Axis(0), &taps);
    let cols_first = blur_axis(&blur_axis(src, Axis(0), &taps), Axis(1), &taps);
    (rows_first + cols_first) * 0.5
}

/// `p - blur(p)`: positive on convex-up crests, negative in troughs.
pub fn residual(values: &Array2<f64>, sigma: f64) -> Array2<f64> {
    values - &gaussian_blur(values, sigma)
}

/// Linear-interpolation quantile (`q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Returns `(ridge, valley)` masks.
pub fn extract_ridge_valley(patch: &NormalizedPatch, params: &RidgeValleyParams) -> (Mask, Mask) {
    let dim = patch.dim();
    if patch.is_flat() {
        let empty = Array2::from_elem(dim, false);
        return (empty.clone(), empty);
    }
    let r = residual(patch.values(), params.blur_sigma_px);
    let flat: Vec<f64> = r.iter().copied().collect();
    let hi = quantile(&flat, params.tau_quantile);
    let lo = quantile(&flat, 1.0 - params.tau_quantile);
    let eps = params.min_residual;

    let ridge_cand = r.mapv(|v| v > hi && v > eps);
    let valley_cand = r.mapv(|v| v < lo && v < -eps);
    let depth = r.mapv(|v| -v);
    let ridge = thin_ordered(&ridge_cand, &r);
    let valley = thin_ordered(&valley_cand, &depth);
    (
        remove_small_components(&ridge, params.min_component_px),
        remove_small_components(&valley, params.min_component_px),
    )
}
