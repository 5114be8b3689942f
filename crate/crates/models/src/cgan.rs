//! Stage 2: U-Net generator and patch discriminator.
//!
//! Sketches and DEMs enter the networks in `[0, 1]` and are mapped to
//! `[−1, 1]` internally; the generator maps its tanh output back to `[0, 1]`.

use candle_core::{DType, Device, Tensor};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{dropout, leaky_relu, BatchNorm2d, Conv2d, ConvTranspose2d};
use crate::params::ParamStore;
use crate::vae::SKETCH_CHANNELS;
use crate::{positive, ModelError, Result};

/// Which sketches the generator is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    GroundTruth,
    VaeReconstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the L1 term in the generator objective.
    pub lambda_l1: f64,
    pub seed: u64,
    pub input_px: usize,
    /// Generator width at the outermost level.
    pub ngf: usize,
    /// Discriminator width at the first layer.
    pub ndf: usize,
    /// Stride-2 layers in the discriminator.
    pub d_layers: usize,
    /// Number of down/up levels; `None` goes all the way to a 1×1 bottleneck.
    pub unet_depth: Option<usize>,
    pub dropout: f64,
    /// Minimize `E log(1 − D(G))` instead of maximizing `E log D(G)`.
    pub saturating_g: bool,
    pub conditioning: Conditioning,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 32,
            epochs: 200,
            lambda_l1: 100.0,
            seed: 0,
            input_px: 256,
            ngf: 64,
            ndf: 64,
            d_layers: 3,
            unet_depth: None,
            dropout: 0.5,
            saturating_g: false,
            conditioning: Conditioning::VaeReconstruction,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if !positive(self.lr) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("betas must lie in [0, 1), got ({}, {})", self.beta1, self.beta2));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.lambda_l1.is_finite() && self.lambda_l1 >= 0.0) {
            return bad(format!("lambda_l1 must be non-negative, got {}", self.lambda_l1));
        }
        if self.batch_size == 0 || self.ngf == 0 || self.ndf == 0 {
            return bad("batch_size, ngf and ndf must be positive".into());
        }
        if !self.input_px.is_power_of_two() {
            return bad(format!("input_px must be a power of two, got {}", self.input_px));
        }
        if self.d_layers == 0 || self.d_layers >= 16 || self.input_px >> self.d_layers < 3 {
            return bad(format!(
                "{} discriminator layers leave no logits at {} px",
                self.d_layers, self.input_px
            ));
        }
        let max_depth = self.input_px.trailing_zeros() as usize;
        let depth = self.depth();
        if depth < 2 || depth > max_depth {
            return bad(format!("unet_depth must lie in [2, {max_depth}], got {depth}"));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.unet_depth
            .unwrap_or(self.input_px.trailing_zeros() as usize)
    }

    /// Generator feature width at each level.
    pub fn widths(&self) -> Vec<usize> {
        (0..self.depth()).map(|i| self.ngf * (1 << i.min(3))).collect()
    }
}

struct Down {
    conv: Conv2d,
    bn: Option<BatchNorm2d>,
    act: bool,
}

struct Up {
    conv: ConvTranspose2d,
    bn: Option<BatchNorm2d>,
    dropout: bool,
}

/// Bottleneck features of the generator encoder.
#[derive(Debug, Clone)]
pub struct GeneratorFeatures {
    pub f: Tensor,
}

pub struct Generator {
    cfg: GanConfig,
    params: ParamStore,
    downs: Vec<Down>,
    ups: Vec<Up>,
}

impl std::fmt::Debug for Generator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Generator").field("cfg", &self.cfg).field("params", &self.params).finish()
    }
}

/// Dropout is active in the three innermost up levels (never the outermost).
fn has_dropout(level: usize, depth: usize) -> bool {
    level > 0 && level + 3 >= depth
}

impl Generator {
    pub fn new(cfg: &GanConfig, dtype: DType, device: &Device) -> Result<Self> {
        cfg.validate()?;
        let mut ps = ParamStore::new(cfg.seed, dtype, device);
        let depth = cfg.depth();
        let w = cfg.widths();
        let mut downs = Vec::with_capacity(depth);
        for i in 0..depth {
            let c_in = if i == 0 { SKETCH_CHANNELS } else { w[i - 1] };
            let normed = i > 0 && i + 1 < depth;
            let conv = Conv2d::new(&mut ps, &format!("down.{i}.conv"), c_in, w[i], 4, 2, 1, !normed)?;
            let bn = if normed {
                Some(BatchNorm2d::new(&mut ps, &format!("down.{i}.bn"), w[i])?)
            } else {
                None
            };
            downs.push(Down { conv, bn, act: i > 0 });
        }
        let mut ups = Vec::with_capacity(depth);
        for i in 0..depth {
            let c_in = if i + 1 == depth { w[i] } else { 2 * w[i] };
            let c_out = if i == 0 { 1 } else { w[i - 1] };
            let conv = ConvTranspose2d::new(&mut ps, &format!("up.{i}.conv"), c_in, c_out, 4, 2, 1, 0, i == 0)?;
            let bn = if i > 0 {
                Some(BatchNorm2d::new(&mut ps, &format!("up.{i}.bn"), c_out)?)
            } else {
                None
            };
            ups.push(Up {
                conv,
                bn,
                dropout: has_dropout(i, depth),
            });
        }
        Ok(Self {
            cfg: cfg.clone(),
            params: ps,
            downs,
            ups,
        })
    }

    pub fn config(&self) -> &GanConfig {
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

    /// Normalized DEM batch `(N, 1, H, W)` in `[0, 1]` plus the bottleneck
    /// features. `dropout_rng` enables dropout; `train` selects batch
    /// statistics in batch norm.
    pub fn forward_features(
        &self,
        sketch: &Tensor,
        train: bool,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor, GeneratorFeatures)> {
        self.check_input(sketch)?;
        let mut h = sketch.affine(2.0, -1.0)?;
        let mut skips = Vec::with_capacity(self.downs.len());
        for d in &self.downs {
            if d.act {
                h = leaky_relu(&h)?;
            }
            h = d.conv.forward(&h)?;
            if let Some(bn) = &d.bn {
                h = bn.forward(&h, train)?;
            }
            skips.push(h.clone());
        }
        let features = GeneratorFeatures { f: h.clone() };
        let depth = self.ups.len();
        for (i, up) in self.ups.iter().enumerate().rev() {
            if i + 1 < depth {
                h = Tensor::cat(&[&h, &skips[i]], 1)?;
            }
            h = up.conv.forward(&h.relu()?)?;
            if let Some(bn) = &up.bn {
                h = bn.forward(&h, train)?;
            }
            if up.dropout {
                if let Some(rng) = dropout_rng.as_deref_mut() {
                    h = dropout(&h, self.cfg.dropout, rng)?;
                }
            }
        }
        Ok((h.tanh()?.affine(0.5, 0.5)?, features))
    }

    pub fn forward(&self, sketch: &Tensor, train: bool, dropout_rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        Ok(self.forward_features(sketch, train, dropout_rng)?.0)
    }

    /// Inference: running batch-norm statistics, no dropout.
    pub fn generate(&self, sketch: &Tensor) -> Result<Tensor> {
        self.forward(sketch, false, None)
    }
}

/// Conditional patch discriminator over sketch ⊕ DEM.
pub struct Discriminator {
    params: ParamStore,
    layers: Vec<(Conv2d, Option<BatchNorm2d>)>,
}

impl std::fmt::Debug for Discriminator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Discriminator")
            .field("layers", &self.layers.len())
            .field("params", &self.params)
            .finish()
    }
}

impl Discriminator {
    pub fn new(cfg: &GanConfig, dtype: DType, device: &Device) -> Result<Self> {
        cfg.validate()?;
        // separate stream from the generator's initialization
        let mut ps = ParamStore::new(cfg.seed ^ 0x5EED_D15C, dtype, device);
        let width = |n: usize| cfg.ndf * (1 << n.min(3));
        let mut spec = vec![(SKETCH_CHANNELS + 1, width(0), 2, false)];
        for n in 1..cfg.d_layers {
            spec.push((width(n - 1), width(n), 2, true));
        }
        spec.push((width(cfg.d_layers - 1), width(cfg.d_layers), 1, true));
        spec.push((width(cfg.d_layers), 1, 1, false));
        let mut layers = Vec::with_capacity(spec.len());
        for (i, &(c_in, c_out, stride, normed)) in spec.iter().enumerate() {
            let conv = Conv2d::new(&mut ps, &format!("layer.{i}.conv"), c_in, c_out, 4, stride, 1, !normed)?;
            let bn = if normed {
                Some(BatchNorm2d::new(&mut ps, &format!("layer.{i}.bn"), c_out)?)
            } else {
                None
            };
            layers.push((conv, bn));
        }
        Ok(Self { params: ps, layers })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Logit map `(N, 1, h, w)`.
    pub fn forward(&self, sketch: &Tensor, dem: &Tensor, train: bool) -> Result<Tensor> {
        let (n, c, h, w) = sketch.dims4()?;
        if c != SKETCH_CHANNELS || dem.dims() != [n, 1, h, w] {
            return Err(ModelError::Shape(format!(
                "discriminator inputs {:?} and {:?} do not pair up",
                sketch.dims(),
                dem.dims()
            )));
        }
        let mut x = Tensor::cat(&[&sketch.affine(2.0, -1.0)?, &dem.affine(2.0, -1.0)?], 1)?;
        let last = self.layers.len() - 1;
        for (i, (conv, bn)) in self.layers.iter().enumerate() {
            x = conv.forward(&x)?;
            if let Some(bn) = bn {
                x = bn.forward(&x, train)?;
            }
            if i < last {
                x = leaky_relu(&x)?;
            }
        }
        Ok(x)
    }
}
