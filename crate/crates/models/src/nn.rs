//! Layers used by both stages.

use candle_core::{Module, Tensor, Var, D};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::params::ParamStore;
use crate::Result;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const INIT_STD: f64 = 0.02;
const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// `max(x, slope·x)` written as `slope·x + (1 - slope)·relu(x)`.
pub fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    Ok((x.affine(LEAKY_SLOPE, 0.0)? + x.relu()?.affine(1.0 - LEAKY_SLOPE, 0.0)?)?)
}

/// Inverted dropout with a mask drawn from `rng`.
pub fn dropout(x: &Tensor, p: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if p <= 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - p;
    let mask: Vec<f64> = (0..x.elem_count())
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let mask = Tensor::from_vec(mask, x.dims(), x.device())?.to_dtype(x.dtype())?;
    Ok((x * mask)?)
}

fn channel_view(t: &Tensor) -> Result<Tensor> {
    Ok(t.reshape((1, t.elem_count(), 1, 1))?)
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Tensor,
    bias: Option<Tensor>,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = ps.normal(&format!("{name}.weight"), &[c_out, c_in, kernel, kernel], 0.0, INIT_STD)?;
        let bias = if bias {
            Some(ps.constant(&format!("{name}.bias"), &[c_out], 0.0)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        match &self.bias {
            Some(b) => Ok(y.broadcast_add(&channel_view(b)?)?),
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    weight: Tensor,
    bias: Option<Tensor>,
    stride: usize,
    padding: usize,
    output_padding: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = ps.normal(&format!("{name}.weight"), &[c_in, c_out, kernel, kernel], 0.0, INIT_STD)?;
        let bias = if bias {
            Some(ps.constant(&format!("{name}.bias"), &[c_out], 0.0)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
            output_padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(&self.weight, self.padding, self.output_padding, self.stride, 1)?;
        match &self.bias {
            Some(b) => Ok(y.broadcast_add(&channel_view(b)?)?),
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    inner: candle_nn::Linear,
}

impl Linear {
    pub fn new(ps: &mut ParamStore, name: &str, d_in: usize, d_out: usize) -> Result<Self> {
        let weight = ps.normal(&format!("{name}.weight"), &[d_out, d_in], 0.0, INIT_STD)?;
        let bias = ps.constant(&format!("{name}.bias"), &[d_out], 0.0)?;
        Ok(Self {
            inner: candle_nn::Linear::new(weight, Some(bias)),
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.inner.forward(x)?)
    }
}

/// Batch normalization over `(N, C, H, W)`.
///
/// Training mode normalizes with the biased batch variance and folds the
/// unbiased variance into the running estimate; evaluation mode uses the
/// running estimates only.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    gamma: Tensor,
    beta: Tensor,
    running_mean: Var,
    running_var: Var,
}

impl BatchNorm2d {
    pub fn new(ps: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: ps.normal(&format!("{name}.weight"), &[channels], 1.0, INIT_STD)?,
            beta: ps.constant(&format!("{name}.bias"), &[channels], 0.0)?,
            running_mean: ps.buffer(&format!("{name}.running_mean"), &[channels], 0.0)?,
            running_var: ps.buffer(&format!("{name}.running_var"), &[channels], 1.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (n, _, h, w) = x.dims4()?;
        let (centered, var) = if train {
            let mean = x.mean_keepdim(0)?.mean_keepdim(D::Minus2)?.mean_keepdim(D::Minus1)?;
            let centered = x.broadcast_sub(&mean)?;
            let var = centered
                .sqr()?
                .mean_keepdim(0)?
                .mean_keepdim(D::Minus2)?
                .mean_keepdim(D::Minus1)?;
            let count = (n * h * w) as f64;
            let unbiased = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            let m = BN_MOMENTUM;
            let rm = (self.running_mean.as_tensor().affine(1.0 - m, 0.0)?
                + mean.detach().flatten_all()?.affine(m, 0.0)?)?;
            let rv = (self.running_var.as_tensor().affine(1.0 - m, 0.0)?
                + var.detach().flatten_all()?.affine(m * unbiased, 0.0)?)?;
            self.running_mean.set(&rm)?;
            self.running_var.set(&rv)?;
            (centered, var)
        } else {
            let mean = channel_view(self.running_mean.as_tensor())?;
            let var = channel_view(self.running_var.as_tensor())?;
            (x.broadcast_sub(&mean)?, var)
        };
        let xhat = centered.broadcast_div(&(var + BN_EPS)?.sqrt()?)?;
        Ok(xhat
            .broadcast_mul(&channel_view(&self.gamma)?)?
            .broadcast_add(&channel_view(&self.beta)?)?)
    }
}
