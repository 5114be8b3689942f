//! Backpropagated gradients against central finite differences on f64
//! micro-models.

use candle_core::{DType, Device, Tensor};
use topogen_models::gradcheck::{check_gradients, GradProbe};
use topogen_models::loss::{bce, gan_value_terms, kl_loss, l1_loss, recons_loss, vae_loss};
use topogen_models::params::ParamStore;
use topogen_models::{Discriminator, GanConfig, Generator, Vae, VaeConfig};

const STEP: f64 = 1e-4;
const TOL: f64 = 1e-3;

fn assert_close(probes: &[GradProbe]) {
    let worst = probes
        .iter()
        .max_by(|a, b| a.rel_error().total_cmp(&b.rel_error()))
        .unwrap();
    assert!(
        worst.rel_error() < TOL,
        "{} probes, worst {}[{}]: analytic {} numeric {}",
        probes.len(),
        worst.name,
        worst.index,
        worst.analytic,
        worst.numeric
    );
    assert!(probes.iter().any(|p| p.analytic.abs() > 1e-6), "all probed gradients vanish");
}

fn uniform(seed: u64, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let mut ps = ParamStore::new(seed, DType::F64, &Device::Cpu);
    let t = ps.normal("t", shape, 0.0, 1.0).unwrap();
    // squash normal draws into (lo, hi)
    let s = candle_nn::ops::sigmoid(&t).unwrap();
    s.affine(hi - lo, lo).unwrap().detach()
}

#[test]
fn loss_primitives() {
    let mut ps = ParamStore::new(1, DType::F64, &Device::Cpu);
    let raw = ps.normal("recon", &[2, 3, 4, 4], 0.0, 1.0).unwrap();
    let mu = ps.normal("mu", &[2, 5], 0.0, 1.0).unwrap();
    let logvar = ps.normal("logvar", &[2, 5], 0.0, 0.5).unwrap();
    let target = uniform(2, &[2, 3, 4, 4], 0.0, 1.0);

    let recon = || candle_nn::ops::sigmoid(&raw).unwrap();
    let probes = check_gradients(&ps, &["recon"], 12, STEP, || bce(&target, &recon())).unwrap();
    assert_close(&probes);
    let probes = check_gradients(&ps, &["recon"], 12, STEP, || recons_loss(&target, &recon(), 5.0)).unwrap();
    assert_close(&probes);
    for standard in [false, true] {
        let probes = check_gradients(&ps, &["mu", "logvar"], 10, STEP, || kl_loss(&mu, &logvar, standard)).unwrap();
        assert_close(&probes);
    }
    let truth = uniform(3, &[2, 3, 4, 4], 0.0, 1.0);
    let probes = check_gradients(&ps, &["recon"], 12, STEP, || l1_loss(&raw, &truth)).unwrap();
    assert_close(&probes);
    for saturating in [false, true] {
        let probes = check_gradients(&ps, &["recon"], 12, STEP, || {
            let (d, g) = gan_value_terms(&raw.narrow(1, 0, 1)?, &raw.narrow(1, 1, 1)?, saturating)?;
            Ok((d + g)?)
        })
        .unwrap();
        assert_close(&probes);
    }
}

fn micro_vae() -> Vae {
    let cfg = VaeConfig {
        input_px: 8,
        base_channels: 2,
        depth: 2,
        latent_dim: 4,
        seed: 11,
        ..VaeConfig::default()
    };
    Vae::new(&cfg, DType::F64, &Device::Cpu).unwrap()
}

#[test]
fn vae_loss_through_the_network() {
    let vae = micro_vae();
    assert!(vae.params().num_params() <= 10_000);
    let x = uniform(4, &[3, 3, 8, 8], 0.05, 0.95);
    let eps = uniform(5, &[3, 4], -1.0, 1.0);
    let cfg = vae.config().clone();
    let loss = || {
        let (rec, enc) = vae.forward(&x, &eps, true)?;
        Ok(vae_loss(&x, &rec, &enc.mu, &enc.logvar, cfg.alpha, cfg.gamma_loss, cfg.standard_kl)?.total)
    };
    let probes = check_gradients(vae.params(), &[], 4, STEP, loss).unwrap();
    assert_close(&probes);
}

fn micro_gan() -> (Generator, Discriminator, GanConfig) {
    let cfg = GanConfig {
        input_px: 8,
        unet_depth: Some(2),
        ngf: 2,
        ndf: 2,
        d_layers: 1,
        seed: 13,
        ..GanConfig::default()
    };
    let g = Generator::new(&cfg, DType::F64, &Device::Cpu).unwrap();
    let d = Discriminator::new(&cfg, DType::F64, &Device::Cpu).unwrap();
    (g, d, cfg)
}

#[test]
fn generator_objective_through_both_networks() {
    let (g, d, cfg) = micro_gan();
    assert!(g.params().num_params() + d.params().num_params() <= 10_000);
    let sketch = uniform(6, &[2, 3, 8, 8], 0.0, 1.0);
    let dem = uniform(7, &[2, 1, 8, 8], 0.0, 1.0);
    let loss = || {
        let fake = g.forward(&sketch, true, None)?;
        let logits = d.forward(&sketch, &fake, true)?;
        let (_, g_adv) = gan_value_terms(&logits, &logits, cfg.saturating_g)?;
        Ok((g_adv + l1_loss(&fake, &dem)?.affine(cfg.lambda_l1, 0.0)?)?)
    };
    let probes = check_gradients(g.params(), &[], 6, STEP, loss).unwrap();
    assert_close(&probes);
}

#[test]
fn discriminator_objective() {
    let (g, d, cfg) = micro_gan();
    let sketch = uniform(8, &[2, 3, 8, 8], 0.0, 1.0);
    let dem = uniform(9, &[2, 1, 8, 8], 0.0, 1.0);
    let fake = g.forward(&sketch, false, None).unwrap().detach();
    let loss = || {
        let real = d.forward(&sketch, &dem, true)?;
        let fake = d.forward(&sketch, &fake, true)?;
        Ok(gan_value_terms(&real, &fake, cfg.saturating_g)?.0)
    };
    let probes = check_gradients(d.params(), &[], 6, STEP, loss).unwrap();
    assert_close(&probes);
}
