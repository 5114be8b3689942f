//! Image outputs: DEM files with their hillshade, and preview panels.

use std::path::{Path, PathBuf};

use image::{DynamicImage, GenericImage, RgbImage};
use topogen_core::dem::{
    denormalize, hillshade_image, relief_hillshade, sidecar_path, write_patch_png16, HillshadeParams,
    NormalizedPatch, PREVIEW_RELIEF_M,
};

use crate::error::{CliError, Result};

const GAP: u32 = 2;

/// Files written for one generated DEM.
#[derive(Debug, Clone)]
pub struct DemFiles {
    pub dem: PathBuf,
    pub sidecar: PathBuf,
    pub hillshade: PathBuf,
}

impl DemFiles {
    pub fn all(&self) -> [&Path; 3] {
        [&self.dem, &self.sidecar, &self.hillshade]
    }
}

/// `x_hillshade.png` next to `x.png`.
pub fn hillshade_path(dem: &Path) -> PathBuf {
    let stem = dem.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    dem.with_file_name(format!("{stem}_hillshade.png"))
}

/// Shaded relief of a patch in meters.
pub fn shade_meters(patch: &NormalizedPatch) -> RgbImage {
    DynamicImage::ImageLuma8(hillshade_image(&denormalize(patch), HillshadeParams::default())).to_rgb8()
}

/// Shaded relief of a patch that only has normalized heights.
pub fn shade_preview(patch: &NormalizedPatch) -> Result<RgbImage> {
    let gray = relief_hillshade(patch, PREVIEW_RELIEF_M, HillshadeParams::default())?;
    Ok(DynamicImage::ImageLuma8(gray).to_rgb8())
}

pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    img.save(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

/// Write a generated (normalized) DEM, its sidecar and its hillshade.
pub fn write_dem(patch: &NormalizedPatch, path: &Path) -> Result<DemFiles> {
    write_patch_png16(patch, path)?;
    let files = DemFiles {
        dem: path.to_path_buf(),
        sidecar: sidecar_path(path),
        hillshade: hillshade_path(path),
    };
    save_rgb(&shade_preview(patch)?, &files.hillshade)?;
    Ok(files)
}

/// Grid of equally sized tiles, row by row, separated by a white gap.
/// Tiles smaller than the largest one are placed at their top-left corner.
pub fn panel(rows: &[Vec<RgbImage>]) -> RgbImage {
    let tw = rows.iter().flatten().map(|t| t.width()).max().unwrap_or(1);
    let th = rows.iter().flatten().map(|t| t.height()).max().unwrap_or(1);
    let ncols = rows.iter().map(Vec::len).max().unwrap_or(1).max(1) as u32;
    let nrows = rows.len().max(1) as u32;
    let mut out = RgbImage::from_pixel(
        ncols * tw + (ncols - 1) * GAP,
        nrows * th + (nrows - 1) * GAP,
        image::Rgb([255, 255, 255]),
    );
    for (r, row) in rows.iter().enumerate() {
        for (c, tile) in row.iter().enumerate() {
            let (x, y) = (c as u32 * (tw + GAP), r as u32 * (th + GAP));
            out.copy_from(tile, x, y).expect("tile fits its cell");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panel_layout() {
        let a = RgbImage::from_pixel(4, 3, image::Rgb([10, 20, 30]));
        let p = panel(&[vec![a.clone(), a.clone()], vec![a.clone()]]);
        assert_eq!(p.dimensions(), (4 * 2 + GAP, 3 * 2 + GAP));
        assert_eq!(p.get_pixel(4 + GAP, 0).0, [10, 20, 30]);
        assert_eq!(p.get_pixel(4, 0).0, [255, 255, 255]);
        assert_eq!(p.get_pixel(4 + GAP, 3 + GAP).0, [255, 255, 255]);
    }

    #[test]
    fn hillshade_file_name() {
        assert_eq!(hillshade_path(Path::new("out/x.png")), PathBuf::from("out/x_hillshade.png"));
    }
}
