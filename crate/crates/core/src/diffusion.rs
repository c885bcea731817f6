//! Flow matching: the straight noise→data path, its velocity target, the
//! masked MSE objective, and Euler sampling with classifier-free guidance.
//!
//! ```text
//! x_t = t·x₁ + (1 − (1 − σ_min)·t)·x₀        V = x₁ − (1 − σ_min)·x₀
//! ```

use candle_core::Tensor;
use ndarray::{ArrayD, IxDyn, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::{model_forward, BatchContext, ModelError, ModelInput, ModelParams};
use crate::tokenizer::{assemble_sequence, TokenKind, TokenSequence};

/// Reserved text id of the unconditional (null) prompt.
pub const NULL_TEXT_ID: u32 = 0;

#[derive(Debug, thiserror::Error)]
pub enum DiffusionError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("loss mask selects no element")]
    EmptyLossMask,
    #[error("invalid flow configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<candle_core::Error> for DiffusionError {
    fn from(e: candle_core::Error) -> Self {
        DiffusionError::Model(ModelError::Backend(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub sigma_min: f64,
    /// Euler steps at sampling time.
    pub n_steps: usize,
    /// Classifier-free guidance scale.
    pub cfg_scale: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            sigma_min: 1e-5,
            n_steps: 50,
            cfg_scale: 5.0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), DiffusionError> {
        if !(self.sigma_min > 0.0 && self.sigma_min < 1.0) {
            return Err(DiffusionError::Config(format!(
                "sigma_min {} not in (0, 1)",
                self.sigma_min
            )));
        }
        if self.n_steps == 0 {
            return Err(DiffusionError::Config("n_steps must be at least 1".into()));
        }
        if !(self.cfg_scale >= 0.0 && self.cfg_scale.is_finite()) {
            return Err(DiffusionError::Config(format!(
                "cfg_scale {} must be ≥ 0",
                self.cfg_scale
            )));
        }
        Ok(())
    }
}

fn same_shape(a: &ArrayD<f64>, b: &ArrayD<f64>) -> Result<(), DiffusionError> {
    if a.shape() != b.shape() {
        return Err(DiffusionError::Shape(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub fn noisy_sample(
    x0: &ArrayD<f64>,
    x1: &ArrayD<f64>,
    t: f64,
    sigma_min: f64,
) -> Result<ArrayD<f64>, DiffusionError> {
    same_shape(x0, x1)?;
    let noise_coef = 1.0 - (1.0 - sigma_min) * t;
    Ok(Zip::from(x0)
        .and(x1)
        .map_collect(|&a, &b| t * b + noise_coef * a))
}

pub fn velocity_target(
    x0: &ArrayD<f64>,
    x1: &ArrayD<f64>,
    sigma_min: f64,
) -> Result<ArrayD<f64>, DiffusionError> {
    same_shape(x0, x1)?;
    Ok(Zip::from(x0)
        .and(x1)
        .map_collect(|&a, &b| b - (1.0 - sigma_min) * a))
}

/// Mean squared error over the tokens selected by `loss_mask`; `pred` and
/// `target` are `[L, ...]` with the mask indexing the leading axis.
pub fn fm_loss(
    pred: &ArrayD<f64>,
    target: &ArrayD<f64>,
    loss_mask: &[bool],
) -> Result<f64, DiffusionError> {
    same_shape(pred, target)?;
    if pred.ndim() == 0 || pred.shape()[0] != loss_mask.len() {
        return Err(DiffusionError::Shape(format!(
            "mask of length {} for leading axis {:?}",
            loss_mask.len(),
            pred.shape().first()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, &keep) in loss_mask.iter().enumerate() {
        if keep {
            let (p, t) = (
                pred.index_axis(ndarray::Axis(0), i),
                target.index_axis(ndarray::Axis(0), i),
            );
            sum += Zip::from(&p)
                .and(&t)
                .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b));
            count += p.len();
        }
    }
    if count == 0 {
        return Err(DiffusionError::EmptyLossMask);
    }
    Ok(sum / count as f64)
}

/// Differentiable MSE between two equally shaped tensors (every element counts).
pub fn fm_loss_tensor(pred: &Tensor, target: &Tensor) -> Result<Tensor, DiffusionError> {
    if pred.dims() != target.dims() {
        return Err(DiffusionError::Shape(format!(
            "{:?} vs {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    if pred.elem_count() == 0 {
        return Err(DiffusionError::EmptyLossMask);
    }
    Ok((pred - target)?.sqr()?.mean_all()?)
}

/// `v_u + s·(v_c − v_u)`; scales 0 and 1 return the corresponding input exactly.
pub fn cfg_combine(
    v_uncond: &ArrayD<f64>,
    v_cond: &ArrayD<f64>,
    scale: f64,
) -> Result<ArrayD<f64>, DiffusionError> {
    same_shape(v_uncond, v_cond)?;
    Ok(if scale == 0.0 {
        v_uncond.clone()
    } else if scale == 1.0 {
        v_cond.clone()
    } else {
        Zip::from(v_uncond)
            .and(v_cond)
            .map_collect(|&u, &c| u + scale * (c - u))
    })
}

/// A velocity field `v(x, t)` to integrate.
pub trait VelocityField {
    fn velocity(&mut self, x: &ArrayD<f64>, t: f64) -> Result<ArrayD<f64>, DiffusionError>;
}

impl<F> VelocityField for F
where
    F: FnMut(&ArrayD<f64>, f64) -> Result<ArrayD<f64>, DiffusionError>,
{
    fn velocity(&mut self, x: &ArrayD<f64>, t: f64) -> Result<ArrayD<f64>, DiffusionError> {
        self(x, t)
    }
}

/// Forward Euler from `t = 0` to `t = 1` on the grid `t_i = i/n`.
pub fn euler_integrate(
    field: &mut impl VelocityField,
    x0: ArrayD<f64>,
    n_steps: usize,
) -> Result<ArrayD<f64>, DiffusionError> {
    if n_steps == 0 {
        return Err(DiffusionError::Config("n_steps must be at least 1".into()));
    }
    let dt = 1.0 / n_steps as f64;
    let mut x = x0;
    for i in 0..n_steps {
        let v = field.velocity(&x, i as f64 / n_steps as f64)?;
        same_shape(&x, &v)?;
        x.scaled_add(dt, &v);
    }
    Ok(x)
}

/// Seeded standard-normal noise of the given shape.
pub fn gaussian_noise(shape: &[usize], seed: u64) -> ArrayD<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ArrayD::from_shape_simple_fn(IxDyn(shape), || StandardNormal.sample(&mut rng))
}

/// Draws `x₀ ~ N(0, I)` from `seed` and integrates the guided field
/// `cfg_combine(v_uncond, v_cond, cfg_scale)`.
pub fn euler_sample(
    cond: &mut impl VelocityField,
    uncond: &mut impl VelocityField,
    flow: &FlowConfig,
    shape: &[usize],
    seed: u64,
) -> Result<ArrayD<f64>, DiffusionError> {
    flow.validate()?;
    let x0 = gaussian_noise(shape, seed);
    let scale = flow.cfg_scale;
    let mut guided = |x: &ArrayD<f64>, t: f64| -> Result<ArrayD<f64>, DiffusionError> {
        if scale == 1.0 {
            return cond.velocity(x, t);
        }
        let vu = uncond.velocity(x, t)?;
        if scale == 0.0 {
            return Ok(vu);
        }
        let vc = cond.velocity(x, t)?;
        cfg_combine(&vu, &vc, scale)
    };
    euler_integrate(&mut guided, x0, flow.n_steps)
}

/// The model as a velocity field over video tokens `[B, L_video, D]`.
pub struct ModelField<'a> {
    pub params: &'a ModelParams,
    pub ctx: BatchContext,
    pub text_ids: Vec<Vec<u32>>,
}

impl<'a> ModelField<'a> {
    pub fn new(
        params: &'a ModelParams,
        seqs: &[TokenSequence],
        text_ids: Vec<Vec<u32>>,
    ) -> Result<Self, DiffusionError> {
        Ok(Self {
            params,
            ctx: BatchContext::new(seqs, params)?,
            text_ids,
        })
    }

    /// The null condition of `seqs`: video tokens only, every text id null.
    pub fn unconditional(
        params: &'a ModelParams,
        seqs: &[TokenSequence],
        text_ids: &[Vec<u32>],
    ) -> Result<Self, DiffusionError> {
        let video_only =
            seqs.iter()
                .map(|s| {
                    let video = s.segment(TokenKind::Video).cloned().ok_or_else(|| {
                        DiffusionError::Shape("sequence without video block".into())
                    })?;
                    assemble_sequence(video, None, None, None, None)
                        .map_err(|e| DiffusionError::Shape(e.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?;
        let null = text_ids
            .iter()
            .map(|t| vec![NULL_TEXT_ID; t.len()])
            .collect();
        Self::new(params, &video_only, null)
    }
}

impl VelocityField for ModelField<'_> {
    fn velocity(&mut self, x: &ArrayD<f64>, t: f64) -> Result<ArrayD<f64>, DiffusionError> {
        let shape = x.shape().to_vec();
        let data: Vec<f64> = x.iter().copied().collect();
        let xt = Tensor::from_vec(data, shape.as_slice(), self.params.device())?
            .to_dtype(self.params.dtype())?;
        let ts = vec![t; self.ctx.batch_size()];
        let v = model_forward(
            self.params,
            ModelInput {
                x_t: &xt,
                t: &ts,
                text_ids: &self.text_ids,
            },
            &self.ctx,
        )?;
        let out = v
            .to_dtype(candle_core::DType::F64)?
            .flatten_all()?
            .to_vec1::<f64>()?;
        ArrayD::from_shape_vec(IxDyn(&shape), out).map_err(|e| DiffusionError::Shape(e.to_string()))
    }
}

/// Samples video tokens `[B, L_video, D]` for a batch of assembled condition
/// sequences with classifier-free guidance against the null condition.
pub fn sample_tokens(
    params: &ModelParams,
    seqs: &[TokenSequence],
    text_ids: &[Vec<u32>],
    flow: &FlowConfig,
    seed: u64,
) -> Result<ArrayD<f64>, DiffusionError> {
    let mut cond = ModelField::new(params, seqs, text_ids.to_vec())?;
    let mut uncond = ModelField::unconditional(params, seqs, text_ids)?;
    let shape = [
        seqs.len(),
        cond.ctx.video_len(),
        params.config().video_token_dim,
    ];
    euler_sample(&mut cond, &mut uncond, flow, &shape, seed)
}
