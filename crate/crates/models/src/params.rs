//! Named parameter storage with seeded initialization.
//!
//! Parameters live in a sorted map so that creation, optimizer order and
//! serialization are independent of hashing. Buffers (batch-norm running
//! statistics) are saved with the weights but never handed to an optimizer.

use std::collections::{BTreeMap, HashMap};

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{ModelError, Result};

pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    buffers: BTreeMap<String, Var>,
    rng: ChaCha8Rng,
    dtype: DType,
    device: Device,
}

impl std::fmt::Debug for ParamStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParamStore")
            .field("tensors", &self.vars.len())
            .field("buffers", &self.buffers.len())
            .field("dtype", &self.dtype)
            .finish()
    }
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType, device: &Device) -> Self {
        Self {
            vars: BTreeMap::new(),
            buffers: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            dtype,
            device: device.clone(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn check_free(&self, name: &str) -> Result<()> {
        if self.vars.contains_key(name) || self.buffers.contains_key(name) {
            return Err(ModelError::Config(format!("duplicate parameter name {name}")));
        }
        Ok(())
    }

    fn var_from(&self, values: Vec<f64>, shape: &[usize]) -> Result<Var> {
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        Ok(Var::from_tensor(&t)?)
    }

    /// Trainable tensor drawn from N(mean, std²).
    pub fn normal(&mut self, name: &str, shape: &[usize], mean: f64, std: f64) -> Result<Tensor> {
        self.check_free(name)?;
        let dist = Normal::new(mean, std)
            .map_err(|e| ModelError::Config(format!("{name}: {e}")))?;
        let n = shape.iter().product();
        let values: Vec<f64> = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        let var = self.var_from(values, shape)?;
        let t = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(t)
    }

    /// Trainable tensor filled with `value`.
    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Tensor> {
        self.check_free(name)?;
        let var = self.var_from(vec![value; shape.iter().product()], shape)?;
        let t = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(t)
    }

    /// Non-trainable state saved alongside the weights.
    pub fn buffer(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        self.check_free(name)?;
        let var = self.var_from(vec![value; shape.iter().product()], shape)?;
        self.buffers.insert(name.to_string(), var.clone());
        Ok(var)
    }

    /// Trainable variables in name order.
    pub fn trainable(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name).or_else(|| self.buffers.get(name))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn num_params(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// All weights and buffers, by name.
    pub fn tensors(&self) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .chain(self.buffers.iter())
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect()
    }

    /// Overwrite every weight and buffer from `tensors`. The key set and the
    /// shapes must match exactly.
    pub fn load(&self, tensors: &HashMap<String, Tensor>) -> Result<()> {
        let expected = self.vars.len() + self.buffers.len();
        if tensors.len() != expected {
            return Err(ModelError::Shape(format!(
                "expected {expected} tensors, found {}",
                tensors.len()
            )));
        }
        for (name, var) in self.vars.iter().chain(self.buffers.iter()) {
            let src = tensors
                .get(name)
                .ok_or_else(|| ModelError::Shape(format!("missing tensor {name}")))?;
            if src.dims() != var.dims() {
                return Err(ModelError::Shape(format!(
                    "{name}: expected {:?}, found {:?}",
                    var.dims(),
                    src.dims()
                )));
            }
            var.set(&src.to_dtype(self.dtype)?.to_device(&self.device)?)?;
        }
        Ok(())
    }

    pub fn to_safetensors(&self) -> Result<Vec<u8>> {
        safetensors::serialize(self.tensors(), None)
            .map_err(|e| ModelError::Tensor(candle_core::Error::Msg(e.to_string())))
    }

    pub fn load_safetensors(&self, bytes: &[u8]) -> Result<()> {
        let tensors = candle_core::safetensors::load_buffer(bytes, &self.device)?;
        self.load(&tensors)
    }
}
