//! Interpolation and variant sampling in the VAE latent space.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};
use topogen_core::sketch::TopoField;

use crate::data::{sketch_batch, to_fields};
use crate::train::{epoch_rng, normal_tensor};
use crate::vae::{reparameterize, Encoded, Vae};
use crate::{ModelError, Result};

/// Interpolation weights of the five-step strip.
pub const DEFAULT_GAMMAS: [f64; 5] = [0.167, 0.334, 0.501, 0.668, 0.835];

/// `γ·z1 + (1 − γ)·z2`.
pub fn interpolate_codes(z1: &[f32], z2: &[f32], gamma: f64) -> Result<Vec<f32>> {
    if z1.len() != z2.len() {
        return Err(ModelError::InvalidArgument(format!(
            "code lengths differ: {} vs {}",
            z1.len(),
            z2.len()
        )));
    }
    check_gamma(gamma)?;
    Ok(z1
        .iter()
        .zip(z2)
        .map(|(&a, &b)| (gamma * a as f64 + (1.0 - gamma) * b as f64) as f32)
        .collect())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(ModelError::InvalidArgument(format!("gamma {gamma} outside [0, 1]")));
    }
    Ok(())
}

/// How endpoint codes are taken from the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeMode {
    /// `z = μ`.
    #[default]
    Mean,
    /// `z = μ + σ·ε` with a seeded `ε` per endpoint.
    Sampled { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct InterpolationRequest {
    pub topo_a: TopoField,
    pub topo_b: TopoField,
    pub gammas: Vec<f64>,
    pub mode: CodeMode,
}

#[derive(Debug, Clone)]
pub struct VariantRequest {
    pub topo: TopoField,
    pub n_variants: usize,
    pub eps_scale: f64,
    pub seed: u64,
}

/// Posterior of a single sketch, inference mode.
pub fn encode_one(vae: &Vae, topo: &TopoField) -> Result<Encoded> {
    let x = sketch_batch(std::slice::from_ref(topo), vae.dtype(), vae.device())?;
    vae.encode(&x, false)
}

fn code_vec(t: &Tensor) -> Result<Vec<f32>> {
    Ok(t.to_dtype(candle_core::DType::F32)?.flatten_all()?.to_vec1()?)
}

/// Decode one latent vector, inference mode.
pub fn decode_code(vae: &Vae, z: &[f32]) -> Result<TopoField> {
    let z = Tensor::from_slice(z, (1, z.len()), vae.device())?.to_dtype(vae.dtype())?;
    let mut fields = to_fields(&vae.decode(&z, false)?)?;
    Ok(fields.remove(0))
}

/// Decoded mean code of `topo`.
pub fn mean_reconstruction(vae: &Vae, topo: &TopoField) -> Result<TopoField> {
    decode_code(vae, &code_vec(&encode_one(vae, topo)?.mu)?)
}

fn endpoint(vae: &Vae, topo: &TopoField, mode: CodeMode, which: usize) -> Result<Vec<f32>> {
    let enc = encode_one(vae, topo)?;
    match mode {
        CodeMode::Mean => code_vec(&enc.mu),
        CodeMode::Sampled { seed } => {
            let mut rng = epoch_rng(seed, which);
            let eps = normal_tensor(&mut rng, 1, vae.config().latent_dim, vae.dtype(), vae.device())?;
            code_vec(&reparameterize(&enc.mu, &enc.logvar, &eps)?)
        }
    }
}

/// One decoded sketch per `γ`, in request order.
pub fn interpolate_terrains(req: &InterpolationRequest, vae: &Vae) -> Result<Vec<TopoField>> {
    if req.gammas.is_empty() {
        return Err(ModelError::InvalidArgument("no interpolation weights given".into()));
    }
    for &g in &req.gammas {
        check_gamma(g)?;
    }
    let z1 = endpoint(vae, &req.topo_a, req.mode, 0)?;
    let z2 = endpoint(vae, &req.topo_b, req.mode, 1)?;
    req.gammas
        .iter()
        .map(|&g| decode_code(vae, &interpolate_codes(&z1, &z2, g)?))
        .collect()
}

/// Decoded `μ + σ·(eps_scale·ε)` for `n_variants` seeded draws of `ε`.
pub fn sample_variants(req: &VariantRequest, vae: &Vae) -> Result<Vec<TopoField>> {
    if req.n_variants == 0 {
        return Err(ModelError::InvalidArgument("n_variants must be at least 1".into()));
    }
    if !(req.eps_scale >= 0.0 && req.eps_scale.is_finite()) {
        return Err(ModelError::InvalidArgument(format!(
            "eps_scale must be a non-negative number, got {}",
            req.eps_scale
        )));
    }
    let enc = encode_one(vae, &req.topo)?;
    let mut rng = epoch_rng(req.seed, 0);
    (0..req.n_variants)
        .map(|_| {
            let eps = normal_tensor(&mut rng, 1, vae.config().latent_dim, vae.dtype(), vae.device())?
                .affine(req.eps_scale, 0.0)?;
            let z = reparameterize(&enc.mu, &enc.logvar, &eps)?;
            decode_code(vae, &code_vec(&z)?)
        })
        .collect()
}
