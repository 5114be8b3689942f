//! Central finite-difference check of autodiff gradients.

use candle_core::{DType, Tensor};

use crate::params::ParamStore;
use crate::{ModelError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradProbe {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradProbe {
    /// `|a − n| / max(|a|, |n|)`, with a floor of 1e-8 on the denominator.
    pub fn rel_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs()).max(1e-8);
        (self.analytic - self.numeric).abs() / scale
    }
}

fn flat(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?)
}

fn eval(loss: &impl Fn() -> Result<Tensor>) -> Result<f64> {
    Ok(loss()?.to_dtype(DType::F64)?.to_scalar()?)
}

/// Compare `d loss / d θ` from backpropagation with
/// `(loss(θ + h) − loss(θ − h)) / 2h` on `per_tensor` evenly spaced entries
/// of every trainable tensor whose name starts with one of `prefixes`
/// (all tensors when `prefixes` is empty). `loss` must be deterministic.
pub fn check_gradients(
    params: &ParamStore,
    prefixes: &[&str],
    per_tensor: usize,
    step: f64,
    loss: impl Fn() -> Result<Tensor>,
) -> Result<Vec<GradProbe>> {
    let grads = loss()?.backward()?;
    let names: Vec<String> = params
        .names()
        .filter(|n| prefixes.is_empty() || prefixes.iter().any(|p| n.starts_with(p)))
        .map(str::to_string)
        .collect();
    let mut probes = Vec::new();
    for name in names {
        let var = params.get(&name).expect("name comes from the store");
        let analytic = match grads.get(var.as_tensor()) {
            Some(g) => flat(g)?,
            None => vec![0.0; var.elem_count()],
        };
        let original = flat(var.as_tensor())?;
        let n = original.len();
        let picks: Vec<usize> = (0..per_tensor.min(n)).map(|k| k * n / per_tensor.min(n)).collect();
        for index in picks {
            let mut shifted = original.clone();
            let set = |v: &[f64]| -> Result<()> {
                let t = Tensor::from_slice(v, var.dims(), var.device())?.to_dtype(var.dtype())?;
                Ok(var.set(&t)?)
            };
            shifted[index] = original[index] + step;
            set(&shifted)?;
            let up = eval(&loss)?;
            shifted[index] = original[index] - step;
            set(&shifted)?;
            let down = eval(&loss)?;
            set(&original)?;
            probes.push(GradProbe {
                name: name.clone(),
                index,
                analytic: analytic[index],
                numeric: (up - down) / (2.0 * step),
            });
        }
    }
    if probes.is_empty() {
        return Err(ModelError::InvalidArgument("no parameters matched the probe prefixes".into()));
    }
    Ok(probes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    #[test]
    fn quadratic_gradient() {
        let mut ps = ParamStore::new(0, DType::F64, &Device::Cpu);
        let w = ps.normal("w", &[5], 0.0, 1.0).unwrap();
        let probes = check_gradients(&ps, &[], 5, 1e-4, || Ok((&w * &w)?.sum_all()?.affine(1.5, 0.0)?)).unwrap();
        assert_eq!(probes.len(), 5);
        let values: Vec<f64> = w.to_vec1().unwrap();
        for p in probes {
            assert!((p.analytic - 3.0 * values[p.index]).abs() < 1e-12);
            assert!(p.rel_error() < 1e-6);
        }
    }
}
