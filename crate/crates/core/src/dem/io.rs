//! DEM file formats.
//!
//! * ESRI ASCII grid (`.asc`): `ncols`/`nrows`/`cellsize`/`NODATA_value`
//!   header followed by row-major values, north row first.
//! * 16-bit grayscale PNG with a JSON sidecar next to it (`x.png` +
//!   `x.json`) holding `h_min`, `h_max` and `pixel_size_m`. A pixel value
//!   `v` decodes to `h_min + v / 65535 * (h_max - h_min)`.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DemGrid, NormalizedPatch, ValueRange, DEFAULT_PIXEL_SIZE_M};
use crate::{CoreError, Result};

const U16_MAX: f64 = 65535.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub h_min: f64,
    pub h_max: f64,
    #[serde(default = "default_pixel_size")]
    pub pixel_size_m: f64,
    /// Raw pixel value marking missing cells, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodata: Option<u16>,
}

fn default_pixel_size() -> f64 {
    DEFAULT_PIXEL_SIZE_M
}

/// A loaded grid plus the number of no-data cells that were filled.
#[derive(Debug, Clone)]
pub struct LoadedDem {
    pub grid: DemGrid,
    pub filled_nodata: usize,
}

pub fn sidecar_path(image_path: &Path) -> PathBuf {
    image_path.with_extension("json")
}

/// Read a DEM, choosing the decoder from the file extension.
pub fn load_dem(path: impl AsRef<Path>) -> Result<LoadedDem> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let loaded = match ext.as_deref() {
        Some("asc") => load_ascii_grid(path)?,
        Some("png") => load_png16(path)?,
        _ => {
            return Err(CoreError::format(
                path,
                "unsupported DEM format (expected .asc or .png + .json sidecar)",
            ))
        }
    };
    if loaded.filled_nodata > 0 {
        log::warn!(
            "{}: filled {} no-data cells",
            path.display(),
            loaded.filled_nodata
        );
    }
    Ok(loaded)
}

fn origin_of(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dem")
        .to_string()
}

fn load_ascii_grid(path: &Path) -> Result<LoadedDem> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let mut tokens = text.split_ascii_whitespace().peekable();
    let mut ncols = None;
    let mut nrows = None;
    let mut cellsize = None;
    let mut nodata = None;
    while let Some(tok) = tokens.peek() {
        let key = tok.to_ascii_lowercase();
        if key.parse::<f64>().is_ok() {
            break;
        }
        tokens.next();
        let value = tokens
            .next()
            .ok_or_else(|| CoreError::format(path, format!("missing value for {key}")))?;
        let num: f64 = value
            .parse()
            .map_err(|_| CoreError::format(path, format!("bad header value {key}={value}")))?;
        match key.as_str() {
            "ncols" => ncols = Some(num as usize),
            "nrows" => nrows = Some(num as usize),
            "cellsize" => cellsize = Some(num),
            "nodata_value" => nodata = Some(num),
            "xllcorner" | "yllcorner" | "xllcenter" | "yllcenter" => {}
            other => return Err(CoreError::format(path, format!("unknown header key {other}"))),
        }
    }
    let (Some(ncols), Some(nrows)) = (ncols, nrows) else {
        return Err(CoreError::format(path, "missing ncols/nrows header"));
    };
    if ncols < 2 || nrows < 2 {
        return Err(CoreError::NotTwoDimensional {
            path: path.to_path_buf(),
            rows: nrows,
            cols: ncols,
        });
    }
    let values = tokens
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CoreError::format(path, format!("bad cell value {t}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != ncols * nrows {
        return Err(CoreError::format(
            path,
            format!("expected {} cells, found {}", ncols * nrows, values.len()),
        ));
    }
    let cells = Array2::from_shape_vec((nrows, ncols), values)
        .map_err(|e| CoreError::format(path, e.to_string()))?;
    let valid = cells.mapv(|v| v.is_finite() && Some(v) != nodata);
    let pixel_size = cellsize.unwrap_or(DEFAULT_PIXEL_SIZE_M);
    finish(path, cells, valid, pixel_size, None)
}

fn load_png16(path: &Path) -> Result<LoadedDem> {
    let sidecar = read_sidecar(&sidecar_path(path))?;
    let raw = read_png16(path)?;
    let range = sidecar.h_max - sidecar.h_min;
    let cells = raw.mapv(|v| sidecar.h_min + v as f64 / U16_MAX * range);
    let valid = raw.mapv(|v| Some(v) != sidecar.nodata);
    let quant = ValueRange {
        h_min: sidecar.h_min,
        h_max: sidecar.h_max,
    };
    finish(path, cells, valid, sidecar.pixel_size_m, Some(quant))
}

fn read_png16(path: &Path) -> Result<Array2<u16>> {
    let img = image::open(path).map_err(|source| CoreError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let image::DynamicImage::ImageLuma16(buf) = img else {
        return Err(CoreError::format(
            path,
            format!("expected 16-bit grayscale, got {:?}", img.color()),
        ));
    };
    let (w, h) = buf.dimensions();
    if w < 2 || h < 2 {
        return Err(CoreError::NotTwoDimensional {
            path: path.to_path_buf(),
            rows: h as usize,
            cols: w as usize,
        });
    }
    Array2::from_shape_vec((h as usize, w as usize), buf.into_raw())
        .map_err(|e| CoreError::format(path, e.to_string()))
}

fn finish(
    path: &Path,
    mut cells: Array2<f64>,
    valid: Array2<bool>,
    pixel_size_m: f64,
    quant: Option<ValueRange>,
) -> Result<LoadedDem> {
    let filled = fill_nearest(&mut cells, &valid);
    let filled_nodata = match filled {
        Some(n) => n,
        None => {
            return Err(CoreError::AllNoData {
                path: path.to_path_buf(),
            })
        }
    };
    let mut grid = DemGrid::new(cells, pixel_size_m)
        .map_err(|e| CoreError::format(path, e.to_string()))?
        .with_origin(origin_of(path));
    if let (Some(q), 0) = (quant, filled_nodata) {
        grid = grid.with_quantization(q);
    }
    Ok(LoadedDem {
        grid,
        filled_nodata,
    })
}

/// Multi-source breadth-first fill: each invalid cell takes the value of the
/// valid cell that reached it first (8-neighborhood, row-major tie order).
/// Returns the number of filled cells, or `None` if nothing is valid.
fn fill_nearest(cells: &mut Array2<f64>, valid: &Array2<bool>) -> Option<usize> {
    let (rows, cols) = cells.dim();
    let mut done = valid.clone();
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    for ((r, c), &ok) in valid.indexed_iter() {
        if ok {
            queue.push_back((r, c));
        }
    }
    if queue.is_empty() {
        return None;
    }
    let mut filled = 0;
    while let Some((r, c)) = queue.pop_front() {
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                if !done[[nr, nc]] {
                    done[[nr, nc]] = true;
                    cells[[nr, nc]] = cells[[r, c]];
                    filled += 1;
                    queue.push_back((nr, nc));
                }
            }
        }
    }
    Some(filled)
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|source| CoreError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    if !(sidecar.h_min.is_finite() && sidecar.h_max.is_finite()) || sidecar.h_max < sidecar.h_min
    {
        return Err(CoreError::format(path, "sidecar range must satisfy h_min <= h_max"));
    }
    if !(sidecar.pixel_size_m.is_finite() && sidecar.pixel_size_m > 0.0) {
        return Err(CoreError::format(path, "sidecar pixel_size_m must be positive"));
    }
    Ok(sidecar)
}

fn write_png16_with_sidecar(path: &Path, raw: Array2<u16>, sidecar: &Sidecar) -> Result<()> {
    let (h, w) = raw.dim();
    let data: Vec<u16> = raw.iter().copied().collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, data).expect("buffer size matches dims");
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| CoreError::io(parent, e))?;
        }
    }
    buf.save(path).map_err(|source| CoreError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    fs::write(&side, json + "\n").map_err(|e| CoreError::io(&side, e))
}

fn quantize(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * U16_MAX).round() as u16
}

/// Write a grid as 16-bit PNG + sidecar. Grids read from this format keep
/// their original range, so read → write reproduces the files exactly.
pub fn write_dem_png16(grid: &DemGrid, path: impl AsRef<Path>) -> Result<Sidecar> {
    let path = path.as_ref();
    let (h_min, h_max) = match grid.quantization() {
        Some(q) => (q.h_min, q.h_max),
        None => grid.range(),
    };
    let range = h_max - h_min;
    let raw = grid.heights().mapv(|h| {
        if range > 0.0 {
            quantize((h - h_min) / range)
        } else {
            0
        }
    });
    let sidecar = Sidecar {
        h_min,
        h_max,
        pixel_size_m: grid.pixel_size_m(),
        nodata: None,
    };
    write_png16_with_sidecar(path, raw, &sidecar)?;
    Ok(sidecar)
}

/// Write a normalized patch; the sidecar carries its elevation range so the
/// file also reads back through [`load_dem`] in meters.
pub fn write_patch_png16(patch: &NormalizedPatch, path: impl AsRef<Path>) -> Result<Sidecar> {
    let raw = patch.values().mapv(quantize);
    let sidecar = Sidecar {
        h_min: patch.h_min(),
        h_max: patch.h_max(),
        pixel_size_m: patch.pixel_size_m(),
        nodata: None,
    };
    write_png16_with_sidecar(path.as_ref(), raw, &sidecar)?;
    Ok(sidecar)
}

/// In-memory 16-bit PNG of a patch's normalized values, quantized as in
/// [`write_patch_png16`].
pub fn encode_patch_png16(patch: &NormalizedPatch) -> Result<Vec<u8>> {
    let (h, w) = patch.dim();
    let data: Vec<u16> = patch.values().iter().map(|&v| quantize(v)).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, data).expect("buffer size matches dims");
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|source| CoreError::Image {
            path: PathBuf::from("<memory>"),
            source,
        })?;
    Ok(out.into_inner())
}

pub fn load_patch_png16(path: impl AsRef<Path>) -> Result<NormalizedPatch> {
    let path = path.as_ref();
    let sidecar = read_sidecar(&sidecar_path(path))?;
    let raw = read_png16(path)?;
    NormalizedPatch::new(
        raw.mapv(|v| v as f64 / U16_MAX),
        sidecar.h_min,
        sidecar.h_max,
        sidecar.pixel_size_m,
    )
}
