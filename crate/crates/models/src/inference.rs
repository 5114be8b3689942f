//! Sketch-to-DEM generation for loaded checkpoints.

use topogen_core::dem::{NormalizedPatch, DEFAULT_PIXEL_SIZE_M};
use topogen_core::sketch::TopoField;

use crate::cgan::Generator;
use crate::data::{sketch_batch, to_grids};
use crate::latent::mean_reconstruction;
use crate::vae::Vae;
use crate::Result;

/// Nearest-neighbor resize to the model's square input size.
pub fn fit_sketch(topo: &TopoField, px: usize) -> TopoField {
    topo.resize_nearest(px, px)
}

/// Generator output for one sketch, without any VAE pass. The sketch must
/// already have the generator's input size.
pub fn generate_from(gen: &Generator, topo: &TopoField) -> Result<NormalizedPatch> {
    let x = sketch_batch(std::slice::from_ref(topo), gen.dtype(), gen.device())?;
    let values = to_grids(&gen.generate(&x)?)?.remove(0);
    // no ground truth exists for a free sketch, so the range stays normalized
    Ok(NormalizedPatch::new(values, 0.0, 1.0, DEFAULT_PIXEL_SIZE_M)?)
}

/// Resize `topo`, optionally replace it by its mean VAE reconstruction, and
/// run the generator.
pub fn generate(gen: &Generator, vae: Option<&Vae>, topo: &TopoField) -> Result<NormalizedPatch> {
    let topo = fit_sketch(topo, gen.config().input_px);
    let topo = match vae {
        Some(vae) => mean_reconstruction(vae, &fit_sketch(&topo, vae.config().input_px))?,
        None => topo,
    };
    generate_from(gen, &fit_sketch(&topo, gen.config().input_px))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgan::GanConfig;
    use candle_core::{DType, Device};
    use ndarray::Array3;

    #[test]
    fn any_sketch_size_yields_model_sized_dem() {
        let cfg = GanConfig { input_px: 32, ngf: 2, ndf: 2, ..GanConfig::default() };
        let gen = Generator::new(&cfg, DType::F32, &Device::Cpu).unwrap();
        let blank = TopoField::new(Array3::zeros((3, 50, 70))).unwrap();
        let dem = generate(&gen, None, &blank).unwrap();
        assert_eq!(dem.dim(), (32, 32));
        assert_eq!((dem.h_min(), dem.h_max()), (0.0, 1.0));
        assert_eq!(dem, generate(&gen, None, &blank).unwrap());
    }
}
