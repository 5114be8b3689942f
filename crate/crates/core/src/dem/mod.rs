//! Elevation rasters: grid type, tiling, normalization and metrics.

mod hillshade;
mod io;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::{CoreError, Execution, Result};

pub use hillshade::{hillshade, hillshade_image, relief_hillshade, HillshadeParams, PREVIEW_RELIEF_M};
pub use io::{
    encode_patch_png16, load_dem, load_patch_png16, read_sidecar, sidecar_path, write_dem_png16, write_patch_png16,
    LoadedDem, Sidecar,
};

/// Ground sampling distance of the source corpus.
pub const DEFAULT_PIXEL_SIZE_M: f64 = 2.0;

/// Elevation range a grid was quantized with when it was read from a 16-bit
/// image. Writing the grid back with the same range reproduces the file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub h_min: f64,
    pub h_max: f64,
}

/// Elevation raster in meters, indexed `[row, col]` with row 0 at the north
/// edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DemGrid {
    heights: Array2<f64>,
    pixel_size_m: f64,
    origin_id: Option<String>,
    quantization: Option<ValueRange>,
}

impl DemGrid {
    pub fn new(heights: Array2<f64>, pixel_size_m: f64) -> Result<Self> {
        let (rows, cols) = heights.dim();
        if rows < 2 || cols < 2 {
            return Err(CoreError::InvalidGrid(format!(
                "grid must be at least 2x2, got {rows}x{cols}"
            )));
        }
        if !(pixel_size_m > 0.0 && pixel_size_m.is_finite()) {
            return Err(CoreError::InvalidGrid(format!(
                "pixel size must be positive, got {pixel_size_m}"
            )));
        }
        if let Some(bad) = heights.iter().find(|h| !h.is_finite()) {
            return Err(CoreError::InvalidGrid(format!(
                "non-finite elevation {bad}"
            )));
        }
        Ok(Self {
            heights,
            pixel_size_m,
            origin_id: None,
            quantization: None,
        })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        pixel_size_m: f64,
        f: impl FnMut((usize, usize)) -> f64,
    ) -> Result<Self> {
        Self::new(Array2::from_shape_fn((rows, cols), f), pixel_size_m)
    }

    pub fn with_origin(mut self, id: impl Into<String>) -> Self {
        self.origin_id = Some(id.into());
        self
    }

    pub(crate) fn with_quantization(mut self, range: ValueRange) -> Self {
        self.quantization = Some(range);
        self
    }

    pub fn heights(&self) -> &Array2<f64> {
        &self.heights
    }

    pub fn into_heights(self) -> Array2<f64> {
        self.heights
    }

    pub fn pixel_size_m(&self) -> f64 {
        self.pixel_size_m
    }

    pub fn origin_id(&self) -> Option<&str> {
        self.origin_id.as_deref()
    }

    pub fn quantization(&self) -> Option<ValueRange> {
        self.quantization
    }

    pub fn rows(&self) -> usize {
        self.heights.nrows()
    }

    pub fn cols(&self) -> usize {
        self.heights.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.heights.dim()
    }

    /// `(min, max)` elevation.
    pub fn range(&self) -> (f64, f64) {
        min_max(&self.heights)
    }

    /// Same grid shifted by `dz` meters.
    pub fn offset(&self, dz: f64) -> Self {
        Self {
            heights: &self.heights + dz,
            pixel_size_m: self.pixel_size_m,
            origin_id: self.origin_id.clone(),
            quantization: None,
        }
    }
}

fn min_max(a: &Array2<f64>) -> (f64, f64) {
    a.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Elevation patch rescaled to `[0, 1]` by its own min/max.
///
/// A flat patch has `h_min == h_max` and every value at 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPatch {
    values: Array2<f64>,
    h_min: f64,
    h_max: f64,
    pixel_size_m: f64,
}

impl NormalizedPatch {
    pub fn new(values: Array2<f64>, h_min: f64, h_max: f64, pixel_size_m: f64) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CoreError::InvalidGrid(format!(
                "normalized value {v} outside [0, 1]"
            )));
        }
        if !(h_min.is_finite() && h_max.is_finite()) || h_max < h_min {
            return Err(CoreError::InvalidGrid(format!(
                "invalid elevation range [{h_min}, {h_max}]"
            )));
        }
        let values = if h_max == h_min {
            Array2::from_elem(values.dim(), 0.5)
        } else {
            values
        };
        Ok(Self {
            values,
            h_min,
            h_max,
            pixel_size_m,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn pixel_size_m(&self) -> f64 {
        self.pixel_size_m
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn is_flat(&self) -> bool {
        self.h_max == self.h_min
    }

    /// Same elevation range, different values (e.g. a generator output that
    /// should be read back in the ground truth's meters).
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        let values = values.mapv(|v| v.clamp(0.0, 1.0));
        if self.is_flat() {
            // keep the generated shape; it is flattened only on denormalize
            return Ok(Self { values, ..self.clone() });
        }
        Self::new(values, self.h_min, self.h_max, self.pixel_size_m)
    }

    /// `1 - v` for every value; the elevation range is mirrored as well.
    pub fn negated(&self) -> Self {
        Self {
            values: self.values.mapv(|v| 1.0 - v),
            ..self.clone()
        }
    }
}

/// Cut `grid` into square patches of `patch_px`, stepping by `stride_px`,
/// row-major. Trailing strips narrower than a patch are dropped.
pub fn split_tiles(grid: &DemGrid, patch_px: usize, stride_px: usize) -> Result<Vec<DemGrid>> {
    if patch_px == 0 || stride_px == 0 {
        return Err(CoreError::InvalidGrid(
            "patch and stride must be positive".into(),
        ));
    }
    let (rows, cols) = grid.dim();
    if patch_px > rows || patch_px > cols {
        return Err(CoreError::PatchTooLarge {
            patch_px,
            rows,
            cols,
        });
    }
    let base = grid.origin_id().unwrap_or("tile");
    let mut out = Vec::with_capacity(tile_count(rows, cols, patch_px, stride_px));
    for y in tile_offsets(rows, patch_px, stride_px) {
        for x in tile_offsets(cols, patch_px, stride_px) {
            let heights = grid
                .heights
                .slice(s![y..y + patch_px, x..x + patch_px])
                .to_owned();
            out.push(
                DemGrid::new(heights, grid.pixel_size_m)?.with_origin(tile_id(base, y, x)),
            );
        }
    }
    Ok(out)
}

/// Top-left offsets along one axis.
pub fn tile_offsets(len: usize, patch_px: usize, stride_px: usize) -> impl Iterator<Item = usize> {
    let n = if patch_px > len {
        0
    } else {
        (len - patch_px) / stride_px + 1
    };
    (0..n).map(move |i| i * stride_px)
}

pub fn tile_count(rows: usize, cols: usize, patch_px: usize, stride_px: usize) -> usize {
    tile_offsets(rows, patch_px, stride_px).count() * tile_offsets(cols, patch_px, stride_px).count()
}

pub fn tile_id(base: &str, y: usize, x: usize) -> String {
    format!("{base}_y{y:05}_x{x:05}")
}

/// Bilinear resample with corner-aligned sampling: output corners land on
/// input corners, so linear surfaces are reproduced exactly.
pub fn resample_bilinear(src: &Array2<f64>, out_rows: usize, out_cols: usize) -> Array2<f64> {
    let (rows, cols) = src.dim();
    if (rows, cols) == (out_rows, out_cols) {
        return src.clone();
    }
    let scale = |n_in: usize, n_out: usize| {
        if n_out > 1 {
            (n_in - 1) as f64 / (n_out - 1) as f64
        } else {
            0.0
        }
    };
    let (sy, sx) = (scale(rows, out_rows), scale(cols, out_cols));
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + (b - a) * t };
    Array2::from_shape_fn((out_rows, out_cols), |(r, c)| {
        let fy = r as f64 * sy;
        let fx = c as f64 * sx;
        let y0 = (fy.floor() as usize).min(rows - 1);
        let x0 = (fx.floor() as usize).min(cols - 1);
        let y1 = (y0 + 1).min(rows - 1);
        let x1 = (x0 + 1).min(cols - 1);
        let ty = fy - y0 as f64;
        let tx = fx - x0 as f64;
        let top = lerp(src[[y0, x0]], src[[y0, x1]], tx);
        let bottom = lerp(src[[y1, x0]], src[[y1, x1]], tx);
        lerp(top, bottom, ty)
    })
}

/// Resample to `out_px` square and min-max scale into `[0, 1]`.
pub fn normalize_patch(patch: &DemGrid, out_px: usize) -> Result<NormalizedPatch> {
    let (rows, cols) = patch.dim();
    let resampled = resample_bilinear(&patch.heights, out_px, out_px);
    let (h_min, h_max) = min_max(&resampled);
    let range = h_max - h_min;
    let values = if range > 0.0 {
        resampled.mapv(|h| ((h - h_min) / range).clamp(0.0, 1.0))
    } else {
        Array2::from_elem((out_px, out_px), 0.5)
    };
    // pixel footprint grows when upsampling (200 px -> 256 px)
    let pixel_size_m = if out_px > 1 {
        patch.pixel_size_m * (rows.max(cols) - 1) as f64 / (out_px - 1) as f64
    } else {
        patch.pixel_size_m
    };
    NormalizedPatch::new(values, h_min, h_max, pixel_size_m)
}

/// Inverse of the affine map applied by [`normalize_patch`].
pub fn denormalize(patch: &NormalizedPatch) -> DemGrid {
    let range = patch.h_max - patch.h_min;
    let heights = if range == 0.0 {
        Array2::from_elem(patch.values.dim(), patch.h_min)
    } else {
        patch.values.mapv(|v| patch.h_min + v * range)
    };
    DemGrid {
        heights,
        pixel_size_m: patch.pixel_size_m,
        origin_id: None,
        quantization: None,
    }
}

/// Mean squared elevation difference in m².
pub fn mse(generated: &DemGrid, truth: &DemGrid) -> Result<f64> {
    if generated.dim() != truth.dim() {
        return Err(CoreError::ShapeMismatch {
            left: generated.dim(),
            right: truth.dim(),
        });
    }
    let n = generated.heights.len() as f64;
    let sum: f64 = generated
        .heights
        .iter()
        .zip(truth.heights.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n)
}

/// Per-patch MSE over `(generated, truth)` pairs.
pub fn mse_many(pairs: &[(DemGrid, DemGrid)], exec: Execution) -> Result<Vec<f64>> {
    exec.try_map(pairs, |(g, t)| mse(g, t))
}

/// Per-patch and mean MSE over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pair_ids: Vec<String>,
    pub per_patch_mse: Vec<f64>,
    pub mean_mse: f64,
    pub n_patches: usize,
}

impl EvalReport {
    pub fn new(pair_ids: Vec<String>, per_patch_mse: Vec<f64>) -> Result<Self> {
        if per_patch_mse.is_empty() {
            return Err(CoreError::InvalidGrid("empty evaluation set".into()));
        }
        if pair_ids.len() != per_patch_mse.len() {
            return Err(CoreError::InvalidGrid(format!(
                "{} ids for {} scores",
                pair_ids.len(),
                per_patch_mse.len()
            )));
        }
        let n_patches = per_patch_mse.len();
        let mean_mse = per_patch_mse.iter().sum::<f64>() / n_patches as f64;
        Ok(Self {
            pair_ids,
            per_patch_mse,
            mean_mse,
            n_patches,
        })
    }

    /// `pair_id,mse` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_id,mse\n");
        for (id, m) in self.pair_ids.iter().zip(&self.per_patch_mse) {
            out.push_str(&format!("{id},{m}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} != {b} (tol {tol})");
    }

    fn grid(rows: usize, cols: usize, f: impl FnMut((usize, usize)) -> f64) -> DemGrid {
        DemGrid::from_fn(rows, cols, 2.0, f).unwrap()
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(DemGrid::new(Array2::zeros((1, 5)), 2.0).is_err());
        assert!(DemGrid::new(Array2::zeros((3, 3)), 0.0).is_err());
        let mut h = Array2::zeros((3, 3));
        h[[1, 1]] = f64::NAN;
        assert!(DemGrid::new(h, 2.0).is_err());
    }

    #[test]
    fn tiling_counts() {
        let g = grid(400, 400, |_| 0.0);
        assert_eq!(split_tiles(&g, 200, 200).unwrap().len(), 4);

        let g = grid(200, 200, |(r, c)| (r * 7 + c) as f64);
        let tiles = split_tiles(&g, 200, 200).unwrap();
        assert_eq!(tiles.len(), 1);
        assert_eq!(tiles[0].heights(), g.heights());

        // 500 wide, 300 tall: floor(100/200)+1 = 1 row, floor(300/200)+1 = 2 cols
        let g = grid(300, 500, |_| 0.0);
        assert_eq!(split_tiles(&g, 200, 200).unwrap().len(), 2);
    }

    #[test]
    fn tiles_are_row_major_and_named() {
        let g = grid(4, 6, |(r, c)| (r * 10 + c) as f64).with_origin("a");
        let tiles = split_tiles(&g, 2, 2).unwrap();
        assert_eq!(tiles.len(), 6);
        assert_eq!(tiles[1].origin_id(), Some("a_y00000_x00002"));
        assert_eq!(tiles[3].heights()[[0, 0]], 20.0);
    }

    #[test]
    fn patch_larger_than_grid_fails() {
        let g = grid(100, 300, |_| 0.0);
        assert!(matches!(
            split_tiles(&g, 200, 200),
            Err(CoreError::PatchTooLarge { .. })
        ));
    }

    #[test]
    fn flat_patch_normalizes_to_half() {
        let g = grid(200, 200, |_| 300.0);
        let p = normalize_patch(&g, 256).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.5));
        assert_eq!((p.h_min(), p.h_max()), (300.0, 300.0));
        let back = denormalize(&p);
        assert!(back.heights().iter().all(|&h| h == 300.0));
    }

    #[test]
    fn midpoint_maps_to_half() {
        let g = grid(3, 3, |(r, c)| match (r, c) {
            (0, 0) => 100.0,
            (2, 2) => 200.0,
            _ => 150.0,
        });
        let p = normalize_patch(&g, 3).unwrap();
        assert_eq!(p.values()[[1, 1]], 0.5);
        assert_eq!(p.values()[[0, 0]], 0.0);
    }

    #[test]
    fn denormalize_endpoint() {
        let p = NormalizedPatch::new(Array2::zeros((2, 2)), 100.0, 200.0, 2.0).unwrap();
        assert_eq!(denormalize(&p).heights()[[0, 0]], 100.0);
    }

    #[test]
    fn ramp_survives_resampling() {
        let g = grid(200, 200, |(_, c)| 50.0 + 3.0 * c as f64);
        let p = normalize_patch(&g, 256).unwrap();
        let v = p.values();
        assert_eq!(v[[0, 0]], 0.0);
        assert_eq!(v[[255, 255]], 1.0);
        assert_eq!(v[[0, 255]], 1.0);
        for r in [0, 100, 255] {
            for c in 1..256 {
                assert!(v[[r, c]] > v[[r, c - 1]]);
                assert_close(v[[r, c]], c as f64 / 255.0, 1e-12);
            }
        }
        // constant along the other axis
        for c in 0..256 {
            assert_close(v[[0, c]], v[[200, c]], 1e-15);
        }
    }

    #[test]
    fn affine_round_trip_without_resampling() {
        let g = grid(256, 256, |(r, c)| {
            2400.0 + 300.0 * ((r as f64) * 0.05).sin() * ((c as f64) * 0.03).cos()
        });
        let back = denormalize(&normalize_patch(&g, 256).unwrap());
        let err = (back.heights() - g.heights())
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()));
        assert!(err < 1e-4, "max error {err}");
    }

    #[test]
    fn mse_examples() {
        let a = grid(2, 2, |(r, c)| (r * 2 + c) as f64);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a.offset(3.0), &a).unwrap(), 9.0);
        let diffs = [1.0, -1.0, 2.0, 0.0];
        let b = grid(2, 2, |(r, c)| (r * 2 + c) as f64 + diffs[r * 2 + c]);
        assert_eq!(mse(&b, &a).unwrap(), 1.5);
        let c = grid(3, 2, |_| 0.0);
        assert!(matches!(mse(&a, &c), Err(CoreError::ShapeMismatch { .. })));
    }

    #[test]
    fn report_mean() {
        let r = EvalReport::new(vec!["a".into(), "b".into()], vec![1.0, 3.0]).unwrap();
        assert_eq!(r.mean_mse, 2.0);
        assert_eq!(r.n_patches, 2);
        assert_eq!(r.to_csv(), "pair_id,mse\na,1\nb,3\n");
        assert!(EvalReport::new(vec![], vec![]).is_err());
    }
}
