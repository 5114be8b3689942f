use image::GrayImage;
use ndarray::Array2;

use super::{DemGrid, NormalizedPatch};
use crate::Result;

/// Elevation span assumed when shading a patch that only carries
/// normalized heights.
pub const PREVIEW_RELIEF_M: f64 = 150.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillshadeParams {
    /// Light direction, degrees clockwise from north.
    pub azimuth_deg: f64,
    /// Light elevation above the horizon in degrees.
    pub altitude_deg: f64,
    /// Vertical exaggeration.
    pub z_factor: f64,
}

impl Default for HillshadeParams {
    fn default() -> Self {
        Self {
            azimuth_deg: 315.0,
            altitude_deg: 45.0,
            z_factor: 1.0,
        }
    }
}

/// Lambertian shading in `[0, 1]` from central-difference normals
/// (one-sided at the borders).
pub fn hillshade(grid: &DemGrid, params: HillshadeParams) -> Array2<f64> {
    let z = grid.heights();
    let (rows, cols) = z.dim();
    let cell = grid.pixel_size_m();
    let az = params.azimuth_deg.to_radians();
    let alt = params.altitude_deg.to_radians();
    // (east, north, up)
    let light = [az.sin() * alt.cos(), az.cos() * alt.cos(), alt.sin()];

    let diff = |lo: f64, hi: f64, steps: usize| (hi - lo) / (steps as f64 * cell);
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let (c0, c1) = (c.saturating_sub(1), (c + 1).min(cols - 1));
        let (r0, r1) = (r.saturating_sub(1), (r + 1).min(rows - 1));
        let dz_east = diff(z[[r, c0]], z[[r, c1]], c1 - c0) * params.z_factor;
        // rows grow southwards
        let dz_north = -diff(z[[r0, c]], z[[r1, c]], r1 - r0) * params.z_factor;
        let norm = (dz_east * dz_east + dz_north * dz_north + 1.0).sqrt();
        let shade = (-dz_east * light[0] - dz_north * light[1] + light[2]) / norm;
        shade.clamp(0.0, 1.0)
    })
}

/// 8-bit rendering of [`hillshade`].
pub fn hillshade_image(grid: &DemGrid, params: HillshadeParams) -> GrayImage {
    let shade = hillshade(grid, params);
    let (rows, cols) = shade.dim();
    let data = shade.iter().map(|&s| (s * 255.0).round() as u8).collect();
    GrayImage::from_raw(cols as u32, rows as u32, data).expect("buffer size matches dims")
}

/// [`hillshade_image`] of a patch whose `[0, 1]` values span `relief_m`
/// meters, at the patch's pixel size.
pub fn relief_hillshade(patch: &NormalizedPatch, relief_m: f64, params: HillshadeParams) -> Result<GrayImage> {
    let grid = DemGrid::new(patch.values() * relief_m, patch.pixel_size_m())?;
    Ok(hillshade_image(&grid, params))
}
