//! Two-stage sketch-to-terrain models.
//!
//! Stage 1 is a convolutional VAE over 3-channel sketches (ridges, level
//! sets, valleys); its latent space supports interpolation and variant
//! sampling. Stage 2 is a U-Net generator with a patch discriminator that
//! turns a sketch into a normalized elevation patch.

pub mod cgan;
pub mod checkpoint;
pub mod data;
mod error;
pub mod eval;
pub mod gradcheck;
pub mod inference;
pub mod latent;
pub mod loss;
pub mod nn;
pub mod params;
pub mod train;
pub mod vae;

pub use cgan::{Conditioning, Discriminator, GanConfig, Generator};
pub use checkpoint::{GanCheckpoint, GanEpoch, VaeCheckpoint, VaeEpoch};
pub use error::{ModelError, Result};
pub use vae::{Vae, VaeConfig};

/// Finite and strictly positive; rejects NaN.
pub(crate) fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}
