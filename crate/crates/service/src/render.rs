use std::io::Cursor;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::ImageFormat;
use topogen_core::dem::{encode_patch_png16, relief_hillshade, HillshadeParams, NormalizedPatch, PREVIEW_RELIEF_M};
use topogen_core::sketch::{TopoField, TopoMap};
use topogen_core::CoreError;

use crate::api::{ApiError, GenerateResponse, ValueRange};

/// Base64 PNG (optionally a `data:` URL) to a binary sketch field.
/// Channels count as drawn where the 8-bit value is at least 128.
pub fn decode_sketch(b64: &str) -> Result<TopoField, ApiError> {
    let payload = match b64.split_once(";base64,") {
        Some((prefix, rest)) if prefix.starts_with("data:") => rest,
        _ => b64,
    };
    let bytes = STANDARD
        .decode(payload.trim())
        .map_err(|e| ApiError::bad_sketch(format!("base64: {e}")))?;
    let img = image::load_from_memory(&bytes).map_err(|e| ApiError::bad_sketch(format!("image: {e}")))?;
    let map = TopoMap::from_rgb8(&img.to_rgb8()).map_err(|e| ApiError::bad_sketch(e.to_string()))?;
    Ok(map.to_field())
}

/// Response payload for one generated patch; `latency_ms` is left at zero.
pub fn render(patch: &NormalizedPatch) -> Result<GenerateResponse, CoreError> {
    let dem = encode_patch_png16(patch)?;
    let shade = relief_hillshade(patch, PREVIEW_RELIEF_M, HillshadeParams::default())?;
    let mut png = Cursor::new(Vec::new());
    shade
        .write_to(&mut png, ImageFormat::Png)
        .map_err(|source| CoreError::Image {
            path: "<memory>".into(),
            source,
        })?;
    Ok(GenerateResponse {
        dem_png16_b64: STANDARD.encode(dem),
        sidecar: ValueRange {
            h_min: patch.h_min(),
            h_max: patch.h_max(),
        },
        hillshade_png_b64: STANDARD.encode(png.into_inner()),
        latency_ms: 0.0,
    })
}
