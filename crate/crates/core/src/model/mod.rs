//! The FullDiT transformer stack.
//!
//! Each block runs four pre-norm residual sublayers — per-frame 2D
//! self-attention with 2D RoPE, full 3D self-attention with 3D RoPE, text
//! cross-attention and a GELU FFN — each modulated by its own AdaLN-Zero
//! `(scale, shift, gate)` triple projected from the timestep embedding.
//!
//! Tensors are `candle` tensors; gradients come from `candle`'s reverse-mode
//! autodiff. Every parameter is a named [`candle_core::Var`] so checkpoints
//! and gradient checks can address it by its hierarchical name.

mod attention;
mod block;
mod forward;
pub mod gradcheck;
mod params;
mod rope;
mod timestep;

#[cfg(test)]
mod tests_stack;

pub use attention::{attention, sdpa, AttnMode, AttnWeights, RopeSpec};
pub use block::{adaln_params, fulldit_block, AdaLnTriple};
pub use forward::{embed_tokens, forward_embedded, model_forward, BatchContext, ModelInput};
pub use params::{Linear, ModelParams};
pub use rope::{rope_angles, rope_axis_pairs, rope_rotate, RopeAxes};
pub use timestep::{sinusoidal_features, timestep_embedding};

use candle_core::DType;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("query row {row} has no unmasked key")]
    AllMasked { row: usize },
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("tensor backend: {0}")]
    Backend(#[from] candle_core::Error),
}

/// Floating-point precision of parameters and activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    /// Text vocabulary size; id 0 is the null token.
    pub text_vocab: usize,
    pub text_dim: usize,
    pub rope_base: f64,
    /// Width of the sinusoidal timestep features fed to the timestep MLP.
    pub time_freq_dim: usize,
    /// Raw dimension of video, identity and depth tokens.
    pub video_token_dim: usize,
    /// Raw dimension of camera tokens.
    pub camera_token_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 256,
            text_vocab: 12,
            text_dim: 32,
            rope_base: 10000.0,
            time_freq_dim: 64,
            video_token_dim: 32,
            camera_token_dim: 1536,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads.max(1)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("d_ff", self.d_ff),
            ("text_vocab", self.text_vocab),
            ("text_dim", self.text_dim),
            ("time_freq_dim", self.time_freq_dim),
            ("video_token_dim", self.video_token_dim),
            ("camera_token_dim", self.camera_token_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !self.time_freq_dim.is_multiple_of(2) {
            return Err(ModelError::Config("time_freq_dim must be even".into()));
        }
        if !(self.rope_base.is_finite() && self.rope_base > 1.0) {
            return Err(ModelError::Config(
                "rope_base must be finite and > 1".into(),
            ));
        }
        rope_axis_pairs(self.head_dim(), RopeAxes::TwoD)?;
        rope_axis_pairs(self.head_dim(), RopeAxes::ThreeD)?;
        Ok(())
    }
}
