//! Training objectives. Every function returns a scalar tensor so the
//! result can be differentiated.

use candle_core::{DType, Tensor, D};
use topogen_core::sketch::Channel;

use crate::{ModelError, Result};

/// Lower clamp applied to probabilities inside [`bce`].
pub const BCE_EPS: f64 = 1e-7;

/// Mean of all elements, accumulated in f64 and returned in the input dtype.
fn mean(t: &Tensor) -> Result<Tensor> {
    Ok(t.to_dtype(DType::F64)?.mean_all()?.to_dtype(t.dtype())?)
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(ModelError::Shape(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Binary cross entropy averaged over every element.
pub fn bce(target: &Tensor, recon: &Tensor) -> Result<Tensor> {
    same_shape(target, recon)?;
    let r = recon.clamp(BCE_EPS, 1.0 - BCE_EPS)?;
    let pos = (target * r.log()?)?;
    let neg = (target.affine(-1.0, 1.0)? * r.affine(-1.0, 1.0)?.log()?)?;
    mean(&(pos + neg)?.neg()?)
}

/// `BCE(green) + α·(BCE(red) + BCE(blue))` over `(N, 3, H, W)` batches.
pub fn recons_loss(target: &Tensor, recon: &Tensor, alpha: f64) -> Result<Tensor> {
    same_shape(target, recon)?;
    let ch = |t: &Tensor, c: Channel| t.narrow(1, c as usize, 1);
    let term = |c: Channel| -> Result<Tensor> { bce(&ch(target, c)?, &ch(recon, c)?) };
    let lines = (term(Channel::Red)? + term(Channel::Blue)?)?;
    Ok((term(Channel::Green)? + lines.affine(alpha, 0.0)?)?)
}

/// Latent penalty over `(N, d)` codes, summed over `d` and averaged over the
/// batch. The default form is `Σ(σ² + μ² − log σ²)`; `standard` selects the
/// closed-form Gaussian KL `½Σ(σ² + μ² − log σ² − 1)`.
pub fn kl_loss(mu: &Tensor, logvar: &Tensor, standard: bool) -> Result<Tensor> {
    same_shape(mu, logvar)?;
    let terms = ((logvar.exp()? + mu.sqr()?)? - logvar)?;
    let terms = if standard {
        terms.affine(0.5, -0.5)?
    } else {
        terms
    };
    mean(&terms.sum(D::Minus1)?)
}

#[derive(Debug, Clone)]
pub struct VaeLoss {
    pub total: Tensor,
    pub recons: Tensor,
    pub kl: Tensor,
}

pub fn vae_loss(
    target: &Tensor,
    recon: &Tensor,
    mu: &Tensor,
    logvar: &Tensor,
    alpha: f64,
    gamma_loss: f64,
    standard_kl: bool,
) -> Result<VaeLoss> {
    let recons = recons_loss(target, recon, alpha)?;
    let kl = kl_loss(mu, logvar, standard_kl)?;
    let total = (&recons + kl.affine(gamma_loss, 0.0)?)?;
    Ok(VaeLoss { total, recons, kl })
}

/// `log σ(x)` without overflow: `min(x, 0) − log(1 + e^{−|x|})`.
pub fn log_sigmoid(x: &Tensor) -> Result<Tensor> {
    let softplus = x.abs()?.neg()?.exp()?.affine(1.0, 1.0)?.log()?;
    Ok((x.minimum(0.0)? - softplus)?)
}

/// Discriminator loss and generator adversarial loss from logit maps.
///
/// `d_loss = −½(E log σ(real) + E log(1 − σ(fake)))`. The generator term is
/// the non-saturating `−E log σ(fake)` unless `saturating` is set, in which
/// case it is the literal `E log(1 − σ(fake))`.
pub fn gan_value_terms(real: &Tensor, fake: &Tensor, saturating: bool) -> Result<(Tensor, Tensor)> {
    let log_real = mean(&log_sigmoid(real)?)?;
    let log_not_fake = mean(&log_sigmoid(&fake.neg()?)?)?;
    let d_loss = (log_real + &log_not_fake)?.affine(-0.5, 0.0)?;
    let g_adv = if saturating {
        log_not_fake
    } else {
        mean(&log_sigmoid(fake)?)?.neg()?
    };
    Ok((d_loss, g_adv))
}

/// Mean absolute difference.
pub fn l1_loss(generated: &Tensor, truth: &Tensor) -> Result<Tensor> {
    same_shape(generated, truth)?;
    mean(&(generated - truth)?.abs()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn full(v: f64, shape: &[usize]) -> Tensor {
        Tensor::full(v, shape, &Device::Cpu).unwrap()
    }

    fn scalar(t: Tensor) -> f64 {
        t.to_dtype(DType::F64).unwrap().to_scalar().unwrap()
    }

    #[test]
    fn bce_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((scalar(bce(&full(0.5, &[4, 4]), &full(0.5, &[4, 4])).unwrap()) - ln2).abs() < 1e-12);
        let quarter = scalar(bce(&full(1.0, &[3]), &full(0.25, &[3])).unwrap());
        assert!((quarter - 4f64.ln()).abs() < 1e-12);
        let perfect = scalar(bce(&full(1.0, &[3]), &full(1.0, &[3])).unwrap());
        assert!(perfect < 1e-6);
        assert!(bce(&full(1.0, &[3]), &full(1.0, &[4])).is_err());
    }

    #[test]
    fn recons_weights_lines() {
        let t = full(0.5, &[2, 3, 4, 4]);
        let b = std::f64::consts::LN_2;
        assert!((scalar(recons_loss(&t, &t, 5.0).unwrap()) - 11.0 * b).abs() < 1e-12);
        assert!((scalar(recons_loss(&t, &t, 1.0).unwrap()) - 3.0 * b).abs() < 1e-12);
    }

    #[test]
    fn kl_values() {
        let d128 = scalar(kl_loss(&full(0.0, &[1, 128]), &full(0.0, &[1, 128]), false).unwrap());
        assert_eq!(d128, 128.0);
        assert_eq!(scalar(kl_loss(&full(1.0, &[1, 1]), &full(0.0, &[1, 1]), false).unwrap()), 2.0);
        let e = scalar(kl_loss(&full(0.0, &[1, 1]), &full(1.0, &[1, 1]), false).unwrap());
        assert!((e - (std::f64::consts::E - 1.0)).abs() < 1e-12);
        // standard form vanishes at the prior
        assert_eq!(scalar(kl_loss(&full(0.0, &[3, 8]), &full(0.0, &[3, 8]), true).unwrap()), 0.0);
        // batch mean, not sum
        assert_eq!(scalar(kl_loss(&full(0.0, &[4, 128]), &full(0.0, &[4, 128]), false).unwrap()), 128.0);
    }

    #[test]
    fn composite_vae_loss() {
        let t = full(0.5, &[1, 3, 2, 2]);
        let l = vae_loss(&t, &t, &full(0.0, &[1, 4]), &full(0.0, &[1, 4]), 5.0, 0.65, false).unwrap();
        let want = 11.0 * std::f64::consts::LN_2 + 0.65 * 4.0;
        assert!((scalar(l.total) - want).abs() < 1e-12);
        let l0 = vae_loss(&t, &t, &full(0.0, &[1, 4]), &full(0.0, &[1, 4]), 5.0, 0.0, false).unwrap();
        assert_eq!(scalar(l0.total), scalar(l0.recons));
    }

    #[test]
    fn gan_terms() {
        let ln2 = std::f64::consts::LN_2;
        let (d, g) = gan_value_terms(&full(0.0, &[2, 1, 3, 3]), &full(0.0, &[2, 1, 3, 3]), false).unwrap();
        assert!((scalar(d) - ln2).abs() < 1e-12);
        assert!((scalar(g) - ln2).abs() < 1e-12);
        let l3 = 3f64.ln();
        let (d, _) = gan_value_terms(&full(l3, &[1]), &full(l3, &[1]), false).unwrap();
        let want = -0.5 * (0.75f64.ln() + 0.25f64.ln());
        assert!((scalar(d) - want).abs() < 1e-12);
        let (d, g) = gan_value_terms(&full(100.0, &[4]), &full(-100.0, &[4]), false).unwrap();
        assert!(scalar(d) < 1e-30 && scalar(g).is_finite());
        let (d, g) = gan_value_terms(&full(-100.0, &[4]), &full(100.0, &[4]), true).unwrap();
        assert!((scalar(d) - 100.0).abs() < 1e-9);
        assert!((scalar(g) + 100.0).abs() < 1e-9);
    }

    #[test]
    fn l1_values() {
        let a = Tensor::new(&[[0.1f64, -0.3], [0.0, 0.2]], &Device::Cpu).unwrap();
        let z = full(0.0, &[2, 2]);
        assert!((scalar(l1_loss(&a, &z).unwrap()) - 0.15).abs() < 1e-12);
        assert_eq!(scalar(l1_loss(&a, &a).unwrap()), 0.0);
    }
}
