//! Short training runs on synthetic sketches and terrains.

use candle_core::{DType, Device};
use candle_nn::ops::sigmoid;
use topogen_core::dem::normalize_patch;
use topogen_core::sketch::{extract_topo_map, SketchParams};
use topogen_core::synth::synthetic_terrain;
use topogen_core::Execution;
use topogen_models::data::{dem_batch, sketch_batch, Pair};
use topogen_models::train::{discriminator_step, epoch_rng, gan_optimizers, train_cgan, train_vae};
use topogen_models::{Conditioning, Discriminator, GanConfig, Generator, ModelError, VaeConfig};

const PX: usize = 16;

fn pairs(n: u64) -> Vec<Pair> {
    (0..n)
        .map(|i| {
            let dem = normalize_patch(&synthetic_terrain(PX, i), PX).unwrap();
            let sketch = extract_topo_map(&dem, &SketchParams::default()).unwrap().to_field();
            Pair {
                id: format!("s{i}"),
                sketch,
                dem,
            }
        })
        .collect()
}

fn vae_cfg(epochs: usize) -> VaeConfig {
    VaeConfig {
        input_px: PX,
        depth: 2,
        base_channels: 4,
        latent_dim: 8,
        batch_size: 2,
        epochs,
        seed: 3,
        ..VaeConfig::default()
    }
}

fn gan_cfg(epochs: usize) -> GanConfig {
    GanConfig {
        input_px: PX,
        ngf: 4,
        ndf: 4,
        d_layers: 1,
        batch_size: 2,
        epochs,
        seed: 5,
        conditioning: Conditioning::GroundTruth,
        ..GanConfig::default()
    }
}

#[test]
fn vae_runs_are_reproducible() {
    let sketches: Vec<_> = pairs(4).into_iter().map(|p| p.sketch).collect();
    let run = |exec| train_vae(sketches.as_slice(), &vae_cfg(3), None, exec, &mut |_, _| Ok(())).unwrap();
    let a = run(Execution::Sequential);
    let b = run(Execution::Parallel);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.trace.len(), 3);
    assert_eq!(
        a.model.params().to_safetensors().unwrap(),
        b.model.params().to_safetensors().unwrap()
    );
    let other = train_vae(
        sketches.as_slice(),
        &VaeConfig { seed: 4, ..vae_cfg(3) },
        None,
        Execution::Sequential,
        &mut |_, _| Ok(()),
    )
    .unwrap();
    assert_ne!(a.trace, other.trace);
}

#[test]
fn vae_resume_continues_and_checks_config() {
    let sketches: Vec<_> = pairs(4).into_iter().map(|p| p.sketch).collect();
    let first = train_vae(sketches.as_slice(), &vae_cfg(2), None, Execution::Sequential, &mut |_, _| Ok(())).unwrap();
    let head = first.trace.clone();
    let mut seen = Vec::new();
    let resumed = train_vae(sketches.as_slice(), &vae_cfg(4), Some(first), Execution::Sequential, &mut |e, _| {
        seen.push(e.epoch);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![2, 3]);
    assert_eq!(resumed.epoch, 4);
    assert_eq!(&resumed.trace[..2], head.as_slice());

    let first = train_vae(sketches.as_slice(), &vae_cfg(1), None, Execution::Sequential, &mut |_, _| Ok(())).unwrap();
    let changed = VaeConfig { alpha: 2.0, ..vae_cfg(2) };
    let err = train_vae(sketches.as_slice(), &changed, Some(first), Execution::Sequential, &mut |_, _| Ok(())).unwrap_err();
    assert!(matches!(err, ModelError::Config(_)));
}

#[test]
fn gan_runs_are_reproducible() {
    let data = pairs(4);
    let run = || train_cgan(data.as_slice(), &gan_cfg(2), None, None, Execution::Sequential, &mut |_, _| Ok(())).unwrap();
    let a = run();
    let b = run();
    assert_eq!(a.trace, b.trace);
    assert_eq!(
        a.generator.params().to_safetensors().unwrap(),
        b.generator.params().to_safetensors().unwrap()
    );
    assert_eq!(
        a.discriminator.params().to_safetensors().unwrap(),
        b.discriminator.params().to_safetensors().unwrap()
    );
}

#[test]
fn vae_conditioning_needs_a_matching_vae() {
    let data = pairs(2);
    let cfg = GanConfig {
        conditioning: Conditioning::VaeReconstruction,
        ..gan_cfg(1)
    };
    let err = train_cgan(data.as_slice(), &cfg, None, None, Execution::Sequential, &mut |_, _| Ok(())).unwrap_err();
    assert!(matches!(err, ModelError::Config(_)));

    let sketches: Vec<_> = data.iter().map(|p| p.sketch.clone()).collect();
    let vae = train_vae(sketches.as_slice(), &vae_cfg(1), None, Execution::Sequential, &mut |_, _| Ok(())).unwrap();
    let ck = train_cgan(data.as_slice(), &cfg, Some(&vae.model), None, Execution::Sequential, &mut |_, _| Ok(())).unwrap();
    assert_eq!(ck.trace.len(), 1);
}

#[test]
fn discriminator_learns_to_separate() {
    let data = pairs(2);
    let cfg = gan_cfg(1);
    let gen = Generator::new(&cfg, DType::F32, &Device::Cpu).unwrap();
    let disc = Discriminator::new(&cfg, DType::F32, &Device::Cpu).unwrap();
    let (_, mut opt_d) = gan_optimizers(&gen, &disc, &cfg).unwrap();
    let sketches: Vec<_> = data.iter().map(|p| p.sketch.clone()).collect();
    let dems: Vec<_> = data.iter().map(|p| &p.dem).collect();
    let x = sketch_batch(&sketches, DType::F32, &Device::Cpu).unwrap();
    let y = dem_batch(&dems, DType::F32, &Device::Cpu).unwrap();
    let mut rng = epoch_rng(0, 0);
    let fake = gen.forward(&x, true, Some(&mut rng)).unwrap().detach();

    let mut losses = Vec::new();
    for _ in 0..10 {
        losses.push(discriminator_step(&disc, &mut opt_d, &x, &y, &fake, &cfg).unwrap());
    }
    assert!(losses[1] < losses[0], "{losses:?}");
    let mean_prob = |dem| -> f64 {
        let logits = disc.forward(&x, dem, true).unwrap();
        sigmoid(&logits).unwrap().mean_all().unwrap().to_dtype(DType::F64).unwrap().to_scalar().unwrap()
    };
    assert!(mean_prob(&y) > mean_prob(&fake));
}

#[test]
fn empty_dataset_is_rejected() {
    let none: Vec<Pair> = Vec::new();
    let err = train_cgan(none.as_slice(), &gan_cfg(1), None, None, Execution::Sequential, &mut |_, _| Ok(())).unwrap_err();
    assert!(matches!(err, ModelError::EmptyDataset));
}
