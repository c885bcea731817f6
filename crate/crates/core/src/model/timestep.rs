//! Timestep embedding: sinusoidal features of `1000·t` through a
//! `Linear → SiLU → Linear` MLP.

use candle_core::Tensor;

use super::params::linear;
use super::{ModelError, ModelParams};

const TIME_SCALE: f64 = 1000.0;
const MAX_PERIOD: f64 = 10000.0;

/// `[cos(1000·t·f_i)…, sin(1000·t·f_i)…]` with `f_i = MAX_PERIOD^(−i/half)`,
/// row-major `len(t) × dim`.
pub fn sinusoidal_features(t: &[f64], dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(t.len() * dim);
    for &ti in t {
        let args: Vec<f64> = (0..half)
            .map(|i| TIME_SCALE * ti * MAX_PERIOD.powf(-(i as f64) / half as f64))
            .collect();
        out.extend(args.iter().map(|a| a.cos()));
        out.extend(args.iter().map(|a| a.sin()));
    }
    out
}

/// Embeds a batch of timesteps into `[B, d_model]`.
pub fn timestep_embedding(params: &ModelParams, t: &[f64]) -> Result<Tensor, ModelError> {
    let dim = params.config().time_freq_dim;
    let feats = Tensor::from_vec(sinusoidal_features(t, dim), (t.len(), dim), params.device())?
        .to_dtype(params.dtype())?;
    let h = linear(&feats, &params.linear("time.mlp.0")?)?.silu()?;
    linear(&h, &params.linear("time.mlp.2")?)
}
