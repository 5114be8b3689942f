use ndarray::Array2;

use super::mask::{dilate_square, Mask};
use crate::dem::NormalizedPatch;

/// Band index of a normalized value: `floor(v * n)`, with 1.0 kept in the
/// top band.
pub fn band_index(v: f64, n_levels: usize) -> usize {
    ((v.clamp(0.0, 1.0) * n_levels as f64).floor() as usize).min(n_levels - 1)
}

/// Contour lines at levels `k / n_levels`, `k = 1..n_levels`.
///
/// A pixel is on a contour when one of its 4-neighbors sits in a higher
/// band, which puts a single 1-px line on the lower side of each crossing.
/// Lines are then dilated by a `line_px` square.
pub fn extract_level_sets(patch: &NormalizedPatch, n_levels: usize, line_px: usize) -> Mask {
    let values = patch.values();
    let (rows, cols) = values.dim();
    if patch.is_flat() || n_levels < 2 {
        return Array2::from_elem((rows, cols), false);
    }
    let bands = values.mapv(|v| band_index(v, n_levels));
    let lines = Array2::from_shape_fn((rows, cols), |(r, c)| {
        let b = bands[[r, c]];
        (r > 0 && bands[[r - 1, c]] > b)
            || (r + 1 < rows && bands[[r + 1, c]] > b)
            || (c > 0 && bands[[r, c - 1]] > b)
            || (c + 1 < cols && bands[[r, c + 1]] > b)
    });
    dilate_square(&lines, line_px)
}
