//! Training loops for both stages.
//!
//! Every epoch draws its shuffle, noise and dropout masks from a ChaCha
//! stream keyed by `(seed, epoch)`, so a run is reproducible and a resumed
//! run sees the same batches the uninterrupted run would have seen.

use candle_core::{DType, Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use topogen_core::Execution;

use crate::cgan::{Conditioning, Discriminator, GanConfig, Generator};
use crate::checkpoint::{GanCheckpoint, GanEpoch, VaeCheckpoint, VaeEpoch};
use crate::data::{dem_batch, load_pairs, load_sketches, sketch_batch, PairSource, Sketches};
use crate::loss::{gan_value_terms, l1_loss, vae_loss};
use crate::vae::{Vae, VaeConfig};
use crate::{ModelError, Result};

pub const TRAIN_DTYPE: DType = DType::F32;

/// Random stream for one epoch of a run.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Seeded permutation of `0..n`.
pub fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

/// `(rows, cols)` tensor of standard normal draws.
pub fn normal_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let v: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Ok(Tensor::from_vec(v, (rows, cols), device)?.to_dtype(dtype)?)
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn finite(v: f64, what: &'static str, epoch: usize, batch: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::NonFinite { what, epoch, batch })
    }
}

fn adam(vars: Vec<candle_core::Var>, lr: f64, beta1: f64, beta2: f64) -> Result<AdamW> {
    Ok(AdamW::new(
        vars,
        ParamsAdamW {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            weight_decay: 0.0,
        },
    )?)
}

fn check_resume<C: Clone + PartialEq>(
    resume_cfg: &C,
    cfg: &C,
    set_epochs: impl Fn(&mut C, usize),
    epochs: usize,
) -> Result<()> {
    let mut a = resume_cfg.clone();
    set_epochs(&mut a, epochs);
    if &a != cfg {
        return Err(ModelError::Config(
            "resume checkpoint was trained with a different configuration".into(),
        ));
    }
    Ok(())
}

/// Train the sketch VAE, or continue `resume` up to `cfg.epochs`.
/// `on_epoch` sees every finished epoch.
///
/// Adam moments are not part of a checkpoint, so a resumed run restarts them.
pub fn train_vae<S: Sketches + ?Sized>(
    data: &S,
    cfg: &VaeConfig,
    resume: Option<VaeCheckpoint>,
    exec: Execution,
    on_epoch: &mut dyn FnMut(&VaeEpoch, &Vae) -> Result<()>,
) -> Result<VaeCheckpoint> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let (vae, mut trace, start) = match resume {
        Some(ck) => {
            check_resume(&ck.config, cfg, |c, e| c.epochs = e, cfg.epochs)?;
            (ck.model, ck.trace, ck.epoch)
        }
        None => (Vae::new(cfg, TRAIN_DTYPE, &Device::Cpu)?, Vec::new(), 0),
    };
    let mut opt = adam(vae.params().trainable(), cfg.lr, 0.9, 0.999)?;
    let (dtype, device) = (vae.dtype(), vae.device().clone());
    for epoch in start..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        opt.set_learning_rate(lr);
        let mut rng = epoch_rng(cfg.seed, epoch);
        let order = shuffled(data.len(), &mut rng);
        let (mut recons_sum, mut kl_sum, mut total_sum) = (0.0, 0.0, 0.0);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = sketch_batch(&load_sketches(data, idx, exec)?, dtype, &device)?;
            let eps = normal_tensor(&mut rng, idx.len(), cfg.latent_dim, dtype, &device)?;
            let (rec, enc) = vae.forward(&x, &eps, true)?;
            let loss = vae_loss(&x, &rec, &enc.mu, &enc.logvar, cfg.alpha, cfg.gamma_loss, cfg.standard_kl)?;
            let total = finite(scalar(&loss.total)?, "VAE loss", epoch, b)?;
            opt.backward_step(&loss.total)?;
            let n = idx.len() as f64;
            recons_sum += scalar(&loss.recons)? * n;
            kl_sum += scalar(&loss.kl)? * n;
            total_sum += total * n;
        }
        let n = data.len() as f64;
        let rec = VaeEpoch {
            epoch,
            recons: recons_sum / n,
            kl: kl_sum / n,
            total: total_sum / n,
            lr,
        };
        log::debug!("vae epoch {epoch}: recons {:.5} kl {:.5}", rec.recons, rec.kl);
        trace.push(rec);
        on_epoch(&rec, &vae)?;
    }
    Ok(VaeCheckpoint {
        config: cfg.clone(),
        epoch: cfg.epochs.max(start),
        trace,
        model: vae,
    })
}

/// Generator input for a batch of ground-truth sketches.
pub fn condition(x: &Tensor, conditioning: Conditioning, vae: Option<&Vae>) -> Result<Tensor> {
    match (conditioning, vae) {
        (Conditioning::GroundTruth, _) => Ok(x.clone()),
        (Conditioning::VaeReconstruction, Some(vae)) => Ok(vae.reconstruct(x)?.detach()),
        (Conditioning::VaeReconstruction, None) => Err(ModelError::Config(
            "conditioning on VAE reconstructions needs a VAE checkpoint".into(),
        )),
    }
}

/// Losses of one alternating update.
#[derive(Debug, Clone, Copy)]
pub struct StepLosses {
    pub d: f64,
    pub g_adv: f64,
    pub g_l1: f64,
}

/// One discriminator update on `(sketch, dem)` against a (detached) fake.
/// Returns the loss before the update.
pub fn discriminator_step(
    disc: &Discriminator,
    opt_d: &mut AdamW,
    sketch: &Tensor,
    dem: &Tensor,
    fake: &Tensor,
    cfg: &GanConfig,
) -> Result<f64> {
    let real_logits = disc.forward(sketch, dem, true)?;
    let fake_logits = disc.forward(sketch, &fake.detach(), true)?;
    let (d_loss, _) = gan_value_terms(&real_logits, &fake_logits, cfg.saturating_g)?;
    let d = scalar(&d_loss)?;
    opt_d.backward_step(&d_loss)?;
    Ok(d)
}

/// One discriminator step on (real, detached fake) followed by one
/// generator step on `g_adv + λ·L1`.
#[allow(clippy::too_many_arguments)]
pub fn gan_step(
    gen: &Generator,
    disc: &Discriminator,
    opt_g: &mut AdamW,
    opt_d: &mut AdamW,
    sketch: &Tensor,
    dem: &Tensor,
    cfg: &GanConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepLosses> {
    let fake = gen.forward(sketch, true, Some(rng))?;
    let d = discriminator_step(disc, opt_d, sketch, dem, &fake, cfg)?;

    let fake_logits = disc.forward(sketch, &fake, true)?;
    let (_, g_adv) = gan_value_terms(&fake_logits, &fake_logits, cfg.saturating_g)?;
    let g_l1 = l1_loss(&fake, dem)?;
    let g_total = (&g_adv + g_l1.affine(cfg.lambda_l1, 0.0)?)?;
    let out = StepLosses {
        d,
        g_adv: scalar(&g_adv)?,
        g_l1: scalar(&g_l1)?,
    };
    if out.g_adv.is_finite() && out.g_l1.is_finite() {
        opt_g.backward_step(&g_total)?;
    }
    Ok(out)
}

/// Adam optimizers for a generator/discriminator pair.
pub fn gan_optimizers(gen: &Generator, disc: &Discriminator, cfg: &GanConfig) -> Result<(AdamW, AdamW)> {
    Ok((
        adam(gen.params().trainable(), cfg.lr, cfg.beta1, cfg.beta2)?,
        adam(disc.params().trainable(), cfg.lr, cfg.beta1, cfg.beta2)?,
    ))
}

/// Train the sketch-to-DEM cGAN, or continue `resume` up to `cfg.epochs`.
/// With [`Conditioning::VaeReconstruction`] the frozen `vae` rewrites each
/// sketch before it reaches either network.
pub fn train_cgan<S: PairSource + ?Sized>(
    data: &S,
    cfg: &GanConfig,
    vae: Option<&Vae>,
    resume: Option<GanCheckpoint>,
    exec: Execution,
    on_epoch: &mut dyn FnMut(&GanEpoch, &Generator) -> Result<()>,
) -> Result<GanCheckpoint> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let vae = match cfg.conditioning {
        Conditioning::GroundTruth => None,
        Conditioning::VaeReconstruction => {
            let v = vae.ok_or_else(|| {
                ModelError::Config("conditioning on VAE reconstructions needs a VAE checkpoint".into())
            })?;
            if v.config().input_px != cfg.input_px {
                return Err(ModelError::Config(format!(
                    "VAE works at {} px, GAN at {} px",
                    v.config().input_px,
                    cfg.input_px
                )));
            }
            Some(v)
        }
    };
    let (gen, disc, mut trace, start) = match resume {
        Some(ck) => {
            check_resume(&ck.config, cfg, |c, e| c.epochs = e, cfg.epochs)?;
            (ck.generator, ck.discriminator, ck.trace, ck.epoch)
        }
        None => (
            Generator::new(cfg, TRAIN_DTYPE, &Device::Cpu)?,
            Discriminator::new(cfg, TRAIN_DTYPE, &Device::Cpu)?,
            Vec::new(),
            0,
        ),
    };
    let (mut opt_g, mut opt_d) = gan_optimizers(&gen, &disc, cfg)?;
    let (dtype, device) = (gen.dtype(), gen.device().clone());
    for epoch in start..cfg.epochs {
        let mut rng = epoch_rng(cfg.seed, epoch);
        let order = shuffled(data.len(), &mut rng);
        let (mut d_sum, mut adv_sum, mut l1_sum) = (0.0, 0.0, 0.0);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let pairs = load_pairs(data, idx, exec)?;
            let sketches: Vec<_> = pairs.iter().map(|p| p.sketch.clone()).collect();
            let dems: Vec<_> = pairs.iter().map(|p| &p.dem).collect();
            let x = sketch_batch(&sketches, dtype, &device)?;
            let x = condition(&x, cfg.conditioning, vae)?;
            let y = dem_batch(&dems, dtype, &device)?;
            let s = gan_step(&gen, &disc, &mut opt_g, &mut opt_d, &x, &y, cfg, &mut rng)?;
            finite(s.d, "discriminator loss", epoch, b)?;
            finite(s.g_adv, "generator adversarial loss", epoch, b)?;
            finite(s.g_l1, "generator L1 loss", epoch, b)?;
            let n = idx.len() as f64;
            d_sum += s.d * n;
            adv_sum += s.g_adv * n;
            l1_sum += s.g_l1 * n;
        }
        let n = data.len() as f64;
        let rec = GanEpoch {
            epoch,
            g_adv: adv_sum / n,
            g_l1: l1_sum / n,
            d: d_sum / n,
            lr: cfg.lr,
        };
        log::debug!("gan epoch {epoch}: d {:.4} adv {:.4} l1 {:.4}", rec.d, rec.g_adv, rec.g_l1);
        trace.push(rec);
        on_epoch(&rec, &gen)?;
    }
    Ok(GanCheckpoint {
        config: cfg.clone(),
        epoch: cfg.epochs.max(start),
        trace,
        generator: gen,
        discriminator: disc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_streams_differ_and_repeat() {
        let a: Vec<usize> = shuffled(20, &mut epoch_rng(1, 0));
        assert_eq!(a, shuffled(20, &mut epoch_rng(1, 0)));
        assert_ne!(a, shuffled(20, &mut epoch_rng(1, 1)));
        assert_ne!(a, shuffled(20, &mut epoch_rng(2, 0)));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
    }
}
