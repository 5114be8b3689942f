//! Shape probes of the full-size networks at 256×256.

use candle_core::{DType, Device, Tensor};
use topogen_models::{Discriminator, GanConfig, Generator, Vae, VaeConfig};

#[test]
fn vae_encoder_and_decoder_traces() {
    let vae = Vae::new(&VaeConfig::default(), DType::F32, &Device::Cpu).unwrap();
    let x = Tensor::rand(0f32, 1f32, (1, 3, 256, 256), &Device::Cpu).unwrap();
    let trace = vae.encoder_trace(&x).unwrap();
    let spatial: Vec<usize> = trace[..6].iter().map(|s| s[2]).collect();
    let channels: Vec<usize> = trace[..6].iter().map(|s| s[1]).collect();
    assert_eq!(spatial, vec![128, 64, 32, 16, 8, 4]);
    assert_eq!(channels, vec![32, 64, 128, 256, 512, 1024]);
    assert_eq!(trace[6], vec![1, 16384]);

    let enc = vae.encode(&x, false).unwrap();
    assert_eq!(enc.mu.dims(), &[1, 128]);
    assert_eq!(enc.logvar.dims(), &[1, 128]);

    let dtrace = vae.decoder_trace(&enc.mu).unwrap();
    assert_eq!(dtrace[0], vec![1, 1024, 4, 4]);
    let spatial: Vec<usize> = dtrace[1..7].iter().map(|s| s[2]).collect();
    assert_eq!(spatial, vec![8, 16, 32, 64, 128, 256]);
    assert_eq!(dtrace[7], vec![1, 3, 256, 256]);
}

#[test]
fn unet_and_patch_discriminator() {
    let cfg = GanConfig::default();
    let g = Generator::new(&cfg, DType::F32, &Device::Cpu).unwrap();
    let x = Tensor::rand(0f32, 1f32, (1, 3, 256, 256), &Device::Cpu).unwrap();
    let (y, f) = g.forward_features(&x, false, None).unwrap();
    assert_eq!(f.f.dims(), &[1, 512, 1, 1]);
    assert_eq!(y.dims(), &[1, 1, 256, 256]);
    let v: Vec<f32> = y.flatten_all().unwrap().to_vec1().unwrap();
    assert!(v.iter().all(|p| (0.0..=1.0).contains(p)));

    let d = Discriminator::new(&cfg, DType::F32, &Device::Cpu).unwrap();
    let logits = d.forward(&x, &y, false).unwrap();
    assert_eq!(logits.dims(), &[1, 1, 30, 30]);
}
