//! Topographic-map sketches: red ridge lines, green level sets, blue
//! valley lines.

mod levels;
pub mod mask;
mod ridges;
mod thin;
mod topo;

use serde::{Deserialize, Serialize};

use crate::dem::NormalizedPatch;
use crate::{Execution, Result};

pub use levels::{band_index, extract_level_sets};
pub use mask::Mask;
pub use ridges::{extract_ridge_valley, gaussian_blur, quantile, residual, RidgeValleyParams};
pub use thin::thin_ordered;
pub use topo::{compose_topo_map, Channel, TopoField, TopoMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SketchParams {
    pub n_levels: usize,
    pub line_px: usize,
    pub ridge_valley: RidgeValleyParams,
}

impl Default for SketchParams {
    fn default() -> Self {
        Self {
            n_levels: 10,
            line_px: 1,
            ridge_valley: RidgeValleyParams::default(),
        }
    }
}

/// Full sketch for one patch.
pub fn extract_topo_map(patch: &NormalizedPatch, params: &SketchParams) -> Result<TopoMap> {
    let levels = extract_level_sets(patch, params.n_levels, params.line_px);
    let (ridge, valley) = extract_ridge_valley(patch, &params.ridge_valley);
    compose_topo_map(&ridge, &levels, &valley)
}

pub fn extract_topo_maps(
    patches: &[NormalizedPatch],
    params: &SketchParams,
    exec: Execution,
) -> Result<Vec<TopoMap>> {
    exec.try_map(patches, |p| extract_topo_map(p, params))
}
