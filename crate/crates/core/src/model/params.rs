//! Named learnable parameters.
//!
//! Names are hierarchical (`blocks.0.attn3d.q.weight`); weights are stored
//! `[in, out]` so a linear layer is `x·W + b`.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::attention::AttnWeights;
use super::{ModelConfig, ModelError, Precision};
use crate::formats::NamedTensors;

/// Weight `[in, out]` and bias `[out]` of one affine map.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

/// `x·W + b` over the last dimension of `x`.
pub(crate) fn linear(x: &Tensor, l: &Linear) -> Result<Tensor, ModelError> {
    let dims = x.dims().to_vec();
    let (d_in, d_out) = l.w.dims2()?;
    let rows: usize = dims[..dims.len() - 1].iter().product();
    if *dims.last().unwrap_or(&0) != d_in {
        return Err(ModelError::Shape(format!(
            "linear expects last dim {d_in}, got {dims:?}"
        )));
    }
    let y = x.reshape((rows, d_in))?.matmul(&l.w)?.broadcast_add(&l.b)?;
    let mut out = dims;
    *out.last_mut().unwrap() = d_out;
    Ok(y.reshape(out)?)
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Zeros,
    /// Normal with standard deviation `1/√fan_in`.
    FanIn,
    /// Unit normal.
    Normal,
}

/// Every parameter's name, shape and initializer, in a fixed order.
fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.d_model;
    let mut out = Vec::new();
    let lin =
        |out: &mut Vec<(String, Vec<usize>, Init)>, name: &str, i: usize, o: usize, init: Init| {
            out.push((format!("{name}.weight"), vec![i, o], init));
            out.push((format!("{name}.bias"), vec![o], Init::Zeros));
        };
    for kind in ["video", "identity", "depth"] {
        lin(
            &mut out,
            &format!("embed.{kind}"),
            cfg.video_token_dim,
            d,
            Init::FanIn,
        );
    }
    lin(
        &mut out,
        "embed.camera",
        cfg.camera_token_dim,
        d,
        Init::FanIn,
    );
    out.push((
        "text.embedding".into(),
        vec![cfg.text_vocab, cfg.text_dim],
        Init::Normal,
    ));
    lin(&mut out, "time.mlp.0", cfg.time_freq_dim, d, Init::FanIn);
    lin(&mut out, "time.mlp.2", d, d, Init::FanIn);
    for i in 0..cfg.n_layers {
        let p = format!("blocks.{i}");
        lin(&mut out, &format!("{p}.adaln"), d, 12 * d, Init::Zeros);
        for attn in ["attn2d", "attn3d"] {
            for proj in ["q", "k", "v", "o"] {
                lin(&mut out, &format!("{p}.{attn}.{proj}"), d, d, Init::FanIn);
            }
        }
        lin(&mut out, &format!("{p}.cross.q"), d, d, Init::FanIn);
        lin(
            &mut out,
            &format!("{p}.cross.k"),
            cfg.text_dim,
            d,
            Init::FanIn,
        );
        lin(
            &mut out,
            &format!("{p}.cross.v"),
            cfg.text_dim,
            d,
            Init::FanIn,
        );
        lin(&mut out, &format!("{p}.cross.o"), d, d, Init::FanIn);
        lin(&mut out, &format!("{p}.ffn.up"), d, cfg.d_ff, Init::FanIn);
        lin(&mut out, &format!("{p}.ffn.down"), cfg.d_ff, d, Init::FanIn);
    }
    lin(&mut out, "final.proj", d, cfg.video_token_dim, Init::Zeros);
    out
}

/// All learnable weights of the stack, addressable by name.
#[derive(Debug, Clone)]
pub struct ModelParams {
    cfg: ModelConfig,
    precision: Precision,
    device: Device,
    vars: BTreeMap<String, Var>,
}

impl ModelParams {
    /// Seeded initialization: AdaLN projections and the output projection are
    /// zero; identity and depth embeddings start as copies of the video one.
    pub fn init(cfg: &ModelConfig, precision: Precision, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let device = Device::Cpu;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values: BTreeMap<String, Tensor> = BTreeMap::new();
        for (name, shape, init) in layout(cfg) {
            let n: usize = shape.iter().product();
            let std = match init {
                Init::Zeros => 0.0,
                Init::FanIn => 1.0 / (shape[0] as f64).sqrt(),
                Init::Normal => 1.0,
            };
            let data: Vec<f64> = if std == 0.0 {
                vec![0.0; n]
            } else {
                let dist = Normal::new(0.0, std).expect("positive std");
                (0..n).map(|_| dist.sample(&mut rng)).collect()
            };
            values.insert(
                name,
                Tensor::from_vec(data, shape, &device)?.to_dtype(precision.dtype())?,
            );
        }
        for kind in ["identity", "depth"] {
            for part in ["weight", "bias"] {
                let src = values[&format!("embed.video.{part}")].copy()?;
                values.insert(format!("embed.{kind}.{part}"), src);
            }
        }
        let vars = values
            .into_iter()
            .map(|(k, t)| Ok((k, Var::from_tensor(&t)?)))
            .collect::<Result<_, candle_core::Error>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            precision,
            device,
            vars,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn dtype(&self) -> DType {
        self.precision.dtype()
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    pub fn var(&self, name: &str) -> Result<&Var, ModelError> {
        self.vars
            .get(name)
            .ok_or_else(|| ModelError::UnknownParam(name.into()))
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor, ModelError> {
        Ok(self.var(name)?.as_tensor().clone())
    }

    pub fn num_params(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// The affine map stored under `<prefix>.weight` and `<prefix>.bias`.
    pub fn linear(&self, prefix: &str) -> Result<Linear, ModelError> {
        Ok(Linear {
            w: self.tensor(&format!("{prefix}.weight"))?,
            b: self.tensor(&format!("{prefix}.bias"))?,
        })
    }

    /// The q/k/v/o projections stored under `prefix` (e.g. `blocks.0.attn2d`).
    pub fn attn(&self, prefix: &str) -> Result<AttnWeights, ModelError> {
        Ok(AttnWeights {
            q: self.linear(&format!("{prefix}.q"))?,
            k: self.linear(&format!("{prefix}.k"))?,
            v: self.linear(&format!("{prefix}.v"))?,
            o: self.linear(&format!("{prefix}.o"))?,
        })
    }

    /// Overwrites one parameter in place (shape and dtype must match).
    pub fn set(&self, name: &str, value: &Tensor) -> Result<(), ModelError> {
        let var = self.var(name)?;
        if var.dims() != value.dims() {
            return Err(ModelError::Shape(format!(
                "{name}: expected {:?}, got {:?}",
                var.dims(),
                value.dims()
            )));
        }
        var.set(&value.to_dtype(self.dtype())?)?;
        Ok(())
    }

    /// Replaces every parameter (including the zero-initialized ones) by seeded
    /// normal draws of standard deviation `std`; used to probe a "trained" model.
    pub fn randomize(&self, std: f64, seed: u64) -> Result<(), ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, std).map_err(|e| ModelError::Config(e.to_string()))?;
        for var in self.vars.values() {
            let data: Vec<f64> = (0..var.elem_count())
                .map(|_| dist.sample(&mut rng))
                .collect();
            let t = Tensor::from_vec(data, var.dims(), &self.device)?.to_dtype(self.dtype())?;
            var.set(&t)?;
        }
        Ok(())
    }

    /// Deep copy with fresh variables.
    pub fn deep_clone(&self) -> Result<Self, ModelError> {
        let vars = self
            .vars
            .iter()
            .map(|(k, v)| Ok((k.clone(), Var::from_tensor(&v.as_tensor().copy()?)?)))
            .collect::<Result<_, candle_core::Error>>()?;
        Ok(Self {
            cfg: self.cfg.clone(),
            precision: self.precision,
            device: self.device.clone(),
            vars,
        })
    }

    /// Converts to `f32` host arrays for checkpointing.
    pub fn to_named_tensors(&self) -> Result<NamedTensors, ModelError> {
        self.vars
            .iter()
            .map(|(k, v)| {
                let t = v.as_tensor().to_dtype(DType::F32)?;
                let data = t.flatten_all()?.to_vec1::<f32>()?;
                let arr = ArrayD::from_shape_vec(IxDyn(t.dims()), data)
                    .map_err(|e| ModelError::Shape(e.to_string()))?;
                Ok((k.clone(), arr))
            })
            .collect()
    }

    /// Rebuilds parameters from checkpoint tensors; names and shapes must match
    /// the configuration exactly.
    pub fn from_named_tensors(
        cfg: &ModelConfig,
        precision: Precision,
        named: &NamedTensors,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        let device = Device::Cpu;
        let expected = layout(cfg);
        if expected.len() != named.len() {
            return Err(ModelError::Shape(format!(
                "checkpoint has {} parameters, configuration expects {}",
                named.len(),
                expected.len()
            )));
        }
        let mut vars = BTreeMap::new();
        for (name, shape, _) in expected {
            let arr = named
                .get(&name)
                .ok_or_else(|| ModelError::UnknownParam(name.clone()))?;
            if arr.shape() != shape.as_slice() {
                return Err(ModelError::Shape(format!(
                    "{name}: expected {shape:?}, got {:?}",
                    arr.shape()
                )));
            }
            let data: Vec<f32> = arr.iter().copied().collect();
            let t = Tensor::from_vec(data, shape, &device)?.to_dtype(precision.dtype())?;
            vars.insert(name, Var::from_tensor(&t)?);
        }
        Ok(Self {
            cfg: cfg.clone(),
            precision,
            device,
            vars,
        })
    }
}
