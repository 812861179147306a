//! Named trainable parameters with seeded initialization.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform in `[-a, a]`.
    Uniform(f64),
    Normal(f64),
    /// Glorot uniform from the first two dims (fan_out, fan_in) and any
    /// trailing receptive field.
    Xavier,
    /// Kaiming uniform for ReLU conv / linear weights.
    Kaiming,
    Values(Vec<f64>),
}

/// Ordered map of variables. Creation order is fixed by the model code, so
/// a seed fully determines the initial weights.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    rng: ChaCha8Rng,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType, device: Device) -> Self {
        Self {
            vars: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            dtype,
            device,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn get(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if let Some(v) = self.vars.get(name) {
            if v.dims() != shape {
                return Err(ModelError::Config(format!(
                    "parameter {name} has shape {:?}, requested {shape:?}",
                    v.dims()
                )));
            }
            return Ok(v.as_tensor().clone());
        }
        let n: usize = shape.iter().product();
        let fan_in = if shape.len() >= 2 { shape[1..].iter().product::<usize>() } else { n.max(1) };
        let fan_out = if shape.len() >= 2 { shape[0] * shape[2..].iter().product::<usize>() } else { n.max(1) };
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Uniform(a) => (0..n).map(|_| self.rng.random_range(-a..=a)).collect(),
            Init::Normal(std) => {
                let d = Normal::new(0.0, std).map_err(|e| ModelError::Config(e.to_string()))?;
                (0..n).map(|_| d.sample(&mut self.rng)).collect()
            }
            Init::Xavier => {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n).map(|_| self.rng.random_range(-a..=a)).collect()
            }
            Init::Kaiming => {
                let a = (6.0 / fan_in as f64).sqrt();
                (0..n).map(|_| self.rng.random_range(-a..=a)).collect()
            }
            Init::Values(v) => {
                if v.len() != n {
                    return Err(ModelError::Config(format!("{name}: {} init values for {n} entries", v.len())));
                }
                v
            }
        };
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(out)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn named(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Overwrites every parameter from `tensors`; names and shapes must match
    /// exactly.
    pub fn assign(&self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        if tensors.len() != self.vars.len() {
            return Err(ModelError::ConfigMismatch(format!(
                "{} stored tensors, model has {}",
                tensors.len(),
                self.vars.len()
            )));
        }
        for (name, var) in &self.vars {
            let t = tensors
                .get(name)
                .ok_or_else(|| ModelError::ConfigMismatch(format!("missing tensor {name}")))?;
            if t.dims() != var.dims() {
                return Err(ModelError::ConfigMismatch(format!(
                    "{name}: stored {:?}, model {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }
}

/// Sub-namespace helper so layers can be built with relative names.
pub struct Scope<'a> {
    store: &'a mut ParamStore,
    prefix: String,
}

impl<'a> Scope<'a> {
    pub fn new(store: &'a mut ParamStore, prefix: &str) -> Self {
        Self {
            store,
            prefix: prefix.to_string(),
        }
    }

    pub fn get(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let full = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        self.store.get(&full, shape, init)
    }

    pub fn sub(&mut self, name: &str) -> Scope<'_> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        Scope {
            store: &mut *self.store,
            prefix,
        }
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn device(&self) -> Device {
        self.store.device().clone()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.store.rng
    }
}
