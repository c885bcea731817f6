//! Adam with bias correction, operating on named model variables.

use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::Tensor;
use ndarray::ArrayD;

use crate::formats::NamedTensors;
use crate::model::{ModelError, ModelParams};

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every parameter that received a gradient.
    pub fn step(
        &mut self,
        params: &ModelParams,
        grads: &GradStore,
        lr: f64,
    ) -> Result<(), ModelError> {
        self.step += 1;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - self.beta1.powi(t), 1.0 - self.beta2.powi(t));
        for (name, var) in params.vars() {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            // Gradients carry the backward graph; detaching keeps the moments
            // from pinning every past step's activations alive.
            let g = &g.detach();
            let m = match self.m.get(name) {
                Some(m) => ((m * self.beta1)? + (g * (1.0 - self.beta1))?)?,
                None => (g * (1.0 - self.beta1))?,
            };
            let v = match self.v.get(name) {
                Some(v) => ((v * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?,
                None => (g.sqr()? * (1.0 - self.beta2))?,
            };
            let denom = ((&v / c2)?.sqrt()? + self.eps)?;
            let update = ((&m / c1)?.div(&denom)? * lr)?;
            var.set(&var.as_tensor().detach().sub(&update)?)?;
            self.m.insert(name.clone(), m);
            self.v.insert(name.clone(), v);
        }
        Ok(())
    }

    /// Moments as `m.<param>` / `v.<param>` plus a one-element `step` tensor.
    pub fn to_named_tensors(&self) -> Result<NamedTensors, ModelError> {
        let mut out = NamedTensors::new();
        for (prefix, map) in [("m", &self.m), ("v", &self.v)] {
            for (name, t) in map {
                let data = t
                    .to_dtype(candle_core::DType::F32)?
                    .flatten_all()?
                    .to_vec1::<f32>()?;
                let arr = ArrayD::from_shape_vec(t.dims(), data)
                    .map_err(|e| ModelError::Shape(e.to_string()))?;
                out.insert(format!("{prefix}.{name}"), arr);
            }
        }
        // The step count is split into two exactly representable halves.
        let (hi, lo) = ((self.step >> 16) as f32, (self.step & 0xffff) as f32);
        out.insert(
            "step".into(),
            ArrayD::from_shape_vec(vec![2], vec![hi, lo]).expect("static shape"),
        );
        Ok(out)
    }

    pub fn from_named_tensors(
        named: &NamedTensors,
        params: &ModelParams,
    ) -> Result<Self, ModelError> {
        let mut adam = Adam::default();
        for (key, arr) in named {
            if key == "step" {
                let s = arr
                    .as_slice()
                    .ok_or_else(|| ModelError::Shape("bad step tensor".into()))?;
                if s.len() != 2 {
                    return Err(ModelError::Shape(
                        "step tensor must have two entries".into(),
                    ));
                }
                adam.step = ((s[0] as u64) << 16) | s[1] as u64;
                continue;
            }
            let (prefix, name) = key
                .split_once('.')
                .ok_or_else(|| ModelError::UnknownParam(key.clone()))?;
            let var = params.var(name)?;
            if arr.shape() != var.dims() {
                return Err(ModelError::Shape(format!(
                    "{key}: {:?} vs {:?}",
                    arr.shape(),
                    var.dims()
                )));
            }
            let t = Tensor::from_slice(
                arr.as_slice()
                    .ok_or_else(|| ModelError::Shape(key.clone()))?,
                arr.shape(),
                params.device(),
            )?
            .to_dtype(params.dtype())?;
            match prefix {
                "m" => adam.m.insert(name.to_string(), t),
                "v" => adam.v.insert(name.to_string(), t),
                _ => return Err(ModelError::UnknownParam(key.clone())),
            };
        }
        Ok(adam)
    }
}
