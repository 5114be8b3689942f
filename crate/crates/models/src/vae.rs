//! Stage 1: convolutional VAE over 3-channel sketches.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::nn::{leaky_relu, BatchNorm2d, Conv2d, ConvTranspose2d, Linear};
use crate::params::ParamStore;
use crate::{positive, ModelError, Result};

pub const SKETCH_CHANNELS: usize = 3;
pub const LOGVAR_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    /// Weight of the ridge and valley channels in the reconstruction loss.
    pub alpha: f64,
    /// Weight of the latent penalty.
    pub gamma_loss: f64,
    pub latent_dim: usize,
    pub lr: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay_gamma: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Use `½Σ(σ² + μ² − log σ² − 1)` instead of `Σ(σ² + μ² − log σ²)`.
    pub standard_kl: bool,
    pub input_px: usize,
    /// Channels of the first encoder layer; each further layer doubles them.
    pub base_channels: usize,
    /// Number of stride-2 layers in the encoder (and in the decoder).
    pub depth: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            alpha: 5.0,
            gamma_loss: 0.65,
            latent_dim: 128,
            lr: 1e-3,
            lr_decay_gamma: 0.95,
            batch_size: 64,
            epochs: 100,
            seed: 0,
            standard_kl: false,
            input_px: 256,
            base_channels: 32,
            depth: 6,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if !positive(self.alpha) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !positive(self.gamma_loss) {
            return bad(format!("gamma_loss must be positive, got {}", self.gamma_loss));
        }
        if !positive(self.lr) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !positive(self.lr_decay_gamma) {
            return bad(format!("lr_decay_gamma must be positive, got {}", self.lr_decay_gamma));
        }
        if self.latent_dim == 0 || self.batch_size == 0 || self.base_channels == 0 || self.depth == 0 {
            return bad("latent_dim, batch_size, base_channels and depth must be positive".into());
        }
        let scale = 1usize.checked_shl(self.depth as u32).unwrap_or(0);
        if scale == 0 || !self.input_px.is_multiple_of(scale) || self.input_px < scale {
            return bad(format!(
                "input_px {} is not divisible by 2^{}",
                self.input_px, self.depth
            ));
        }
        Ok(())
    }

    /// Learning rate for 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay_gamma.powi(epoch as i32)
    }

    /// Output channels of each encoder layer.
    pub fn channels(&self) -> Vec<usize> {
        (0..self.depth).map(|i| self.base_channels << i).collect()
    }

    /// Side length of the innermost feature map.
    pub fn bottleneck_px(&self) -> usize {
        self.input_px >> self.depth
    }

    pub fn flat_len(&self) -> usize {
        let c = self.base_channels << (self.depth - 1);
        c * self.bottleneck_px() * self.bottleneck_px()
    }
}

/// Posterior parameters for a batch, `(N, latent_dim)` each.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub mu: Tensor,
    pub logvar: Tensor,
}

/// `μ + exp(logvar/2)·ε`.
pub fn reparameterize(mu: &Tensor, logvar: &Tensor, eps: &Tensor) -> Result<Tensor> {
    Ok((mu + (logvar.affine(0.5, 0.0)?.exp()? * eps)?)?)
}

pub struct Vae {
    cfg: VaeConfig,
    params: ParamStore,
    enc: Vec<(Conv2d, BatchNorm2d)>,
    fc_mu: Linear,
    fc_logvar: Linear,
    fc_dec: Linear,
    dec: Vec<(ConvTranspose2d, BatchNorm2d)>,
    out: Conv2d,
}

impl std::fmt::Debug for Vae {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Vae").field("cfg", &self.cfg).field("params", &self.params).finish()
    }
}

impl Vae {
    /// Fresh network initialized from `cfg.seed`.
    pub fn new(cfg: &VaeConfig, dtype: DType, device: &Device) -> Result<Self> {
        cfg.validate()?;
        let mut ps = ParamStore::new(cfg.seed, dtype, device);
        let chans = cfg.channels();
        let mut enc = Vec::with_capacity(cfg.depth);
        let mut c_in = SKETCH_CHANNELS;
        for (i, &c) in chans.iter().enumerate() {
            let conv = Conv2d::new(&mut ps, &format!("enc.{i}.conv"), c_in, c, 3, 2, 1, false)?;
            let bn = BatchNorm2d::new(&mut ps, &format!("enc.{i}.bn"), c)?;
            enc.push((conv, bn));
            c_in = c;
        }
        let flat = cfg.flat_len();
        let fc_mu = Linear::new(&mut ps, "fc_mu", flat, cfg.latent_dim)?;
        let fc_logvar = Linear::new(&mut ps, "fc_logvar", flat, cfg.latent_dim)?;
        let fc_dec = Linear::new(&mut ps, "fc_dec", cfg.latent_dim, flat)?;
        // mirror of the encoder; the last layer keeps the base width
        let mut dec = Vec::with_capacity(cfg.depth);
        let mut widths: Vec<usize> = chans.iter().rev().copied().collect();
        widths.push(cfg.base_channels);
        for (i, pair) in widths.windows(2).enumerate() {
            let conv = ConvTranspose2d::new(&mut ps, &format!("dec.{i}.conv"), pair[0], pair[1], 3, 2, 1, 1, false)?;
            let bn = BatchNorm2d::new(&mut ps, &format!("dec.{i}.bn"), pair[1])?;
            dec.push((conv, bn));
        }
        let out = Conv2d::new(&mut ps, "out", cfg.base_channels, SKETCH_CHANNELS, 3, 1, 1, true)?;
        Ok(Self {
            cfg: cfg.clone(),
            params: ps,
            enc,
            fc_mu,
            fc_logvar,
            fc_dec,
            dec,
            out,
        })
    }

    pub fn config(&self) -> &VaeConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    pub fn device(&self) -> &Device {
        self.params.device()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let n = self.cfg.input_px;
        match x.dims() {
            [_, c, h, w] if *c == SKETCH_CHANNELS && *h == n && *w == n => Ok(()),
            d => Err(ModelError::Shape(format!(
                "sketch batch must be (N, {SKETCH_CHANNELS}, {n}, {n}), got {d:?}"
            ))),
        }
    }

    fn encoder_features(&self, x: &Tensor, train: bool, mut probe: impl FnMut(&Tensor)) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (conv, bn) in &self.enc {
            h = leaky_relu(&bn.forward(&conv.forward(&h)?, train)?)?;
            probe(&h);
        }
        let h = h.flatten_from(1)?;
        probe(&h);
        Ok(h)
    }

    pub fn encode(&self, x: &Tensor, train: bool) -> Result<Encoded> {
        let h = self.encoder_features(x, train, |_| {})?;
        let mu = self.fc_mu.forward(&h)?;
        let logvar = self
            .fc_logvar
            .forward(&h)?
            .clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)?;
        Ok(Encoded { mu, logvar })
    }

    fn decode_probed(&self, z: &Tensor, train: bool, mut probe: impl FnMut(&Tensor)) -> Result<Tensor> {
        match z.dims() {
            [_, d] if *d == self.cfg.latent_dim => {}
            d => {
                return Err(ModelError::Shape(format!(
                    "latent batch must be (N, {}), got {d:?}",
                    self.cfg.latent_dim
                )))
            }
        }
        let s = self.cfg.bottleneck_px();
        let c = self.cfg.base_channels << (self.cfg.depth - 1);
        let mut h = self.fc_dec.forward(z)?.reshape((z.dim(0)?, c, s, s))?;
        probe(&h);
        for (conv, bn) in &self.dec {
            h = leaky_relu(&bn.forward(&conv.forward(&h)?, train)?)?;
            probe(&h);
        }
        let y = candle_nn::ops::sigmoid(&self.out.forward(&h)?)?;
        probe(&y);
        Ok(y)
    }

    /// Sketch probabilities in `(0, 1)`, shape `(N, 3, input_px, input_px)`.
    pub fn decode(&self, z: &Tensor, train: bool) -> Result<Tensor> {
        self.decode_probed(z, train, |_| {})
    }

    /// Reconstruction through `z = μ + σ·ε`.
    pub fn forward(&self, x: &Tensor, eps: &Tensor, train: bool) -> Result<(Tensor, Encoded)> {
        let enc = self.encode(x, train)?;
        let z = reparameterize(&enc.mu, &enc.logvar, eps)?;
        Ok((self.decode(&z, train)?, enc))
    }

    /// Reconstruction through the mean code, inference mode.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        let enc = self.encode(x, false)?;
        self.decode(&enc.mu, false)
    }

    /// Shapes after every encoder layer, then the flattened features.
    pub fn encoder_trace(&self, x: &Tensor) -> Result<Vec<Vec<usize>>> {
        let mut shapes = Vec::new();
        self.encoder_features(x, false, |t| shapes.push(t.dims().to_vec()))?;
        Ok(shapes)
    }

    /// Shapes of the reshaped code, after every decoder layer, and the output.
    pub fn decoder_trace(&self, z: &Tensor) -> Result<Vec<Vec<usize>>> {
        let mut shapes = Vec::new();
        self.decode_probed(z, false, |t| shapes.push(t.dims().to_vec()))?;
        Ok(shapes)
    }
}
