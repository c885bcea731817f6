//! Batched forward pass over assembled token sequences.

use candle_core::{DType, Tensor};

use super::attention::{attention_bias, AttnMode, RopeTables};
use super::block::{fulldit_block, rms_norm};
use super::params::linear;
use super::rope::{rope_angles, rope_tables, RopeAxes};
use super::timestep::timestep_embedding;
use super::{ModelError, ModelParams};
use crate::tokenizer::{TokenKind, TokenSequence};

/// Condition tokens, masks and positional tables of a batch of sequences.
///
/// Built once per batch of condition sets and reused across sampler steps;
/// the video block of every sequence is supplied separately as `x_t`.
#[derive(Debug, Clone)]
pub struct BatchContext {
    pub(crate) batch: usize,
    pub(crate) len: usize,
    pub(crate) video_len: usize,
    /// Per sample: raw camera, identity and depth tokens, when present.
    conditions: Vec<[Option<Tensor>; 3]>,
    pub(crate) valid: Vec<Vec<bool>>,
    pub(crate) bias_2d: Tensor,
    pub(crate) bias_3d: Tensor,
    pub(crate) rope_2d: RopeTables,
    pub(crate) rope_3d: RopeTables,
}

fn fragment_tensor(
    seq: &TokenSequence,
    kind: TokenKind,
    dim: usize,
    params: &ModelParams,
) -> Result<Option<Tensor>, ModelError> {
    match seq.segment(kind) {
        None => Ok(None),
        Some(f) => {
            if f.dim != dim {
                return Err(ModelError::Shape(format!(
                    "{kind:?} tokens have dim {}, model expects {dim}",
                    f.dim
                )));
            }
            let t = Tensor::from_vec(f.features.clone(), (f.len(), dim), params.device())?
                .to_dtype(params.dtype())?;
            Ok(Some(t))
        }
    }
}

impl BatchContext {
    pub fn new(seqs: &[TokenSequence], params: &ModelParams) -> Result<Self, ModelError> {
        let cfg = params.config();
        let first = seqs
            .first()
            .ok_or_else(|| ModelError::Shape("empty batch".into()))?;
        let video_len = first.video_len();
        if video_len == 0 {
            return Err(ModelError::Shape("sequence has no video block".into()));
        }
        let len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let hd = cfg.head_dim();
        let (dtype, dev) = (params.dtype(), params.device());

        let mut conditions = Vec::with_capacity(seqs.len());
        let mut valid = Vec::with_capacity(seqs.len());
        let (mut b2, mut b3, mut a2, mut a3) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for seq in seqs {
            if seq.video_len() != video_len {
                return Err(ModelError::Shape(format!(
                    "video blocks differ in length: {} vs {video_len}",
                    seq.video_len()
                )));
            }
            let seq = seq
                .padded_to(len)
                .map_err(|e| ModelError::Shape(e.to_string()))?;
            conditions.push([
                fragment_tensor(&seq, TokenKind::Camera, cfg.camera_token_dim, params)?,
                fragment_tensor(&seq, TokenKind::Identity, cfg.video_token_dim, params)?,
                fragment_tensor(&seq, TokenKind::Depth, cfg.video_token_dim, params)?,
            ]);
            let time: Vec<i32> = seq.coords.iter().map(|c| c[0]).collect();
            b2.extend(attention_bias(
                Some(&seq.attn_mask),
                &seq.attn_mask,
                &time,
                &time,
                AttnMode::PerFrame,
            )?);
            b3.extend(attention_bias(
                Some(&seq.attn_mask),
                &seq.attn_mask,
                &time,
                &time,
                AttnMode::Full,
            )?);
            a2.extend(rope_angles(&seq.coords, hd, RopeAxes::TwoD, cfg.rope_base)?);
            a3.extend(rope_angles(
                &seq.coords,
                hd,
                RopeAxes::ThreeD,
                cfg.rope_base,
            )?);
            valid.push(seq.attn_mask.clone());
        }
        let b = seqs.len();
        let bias = |v: Vec<f64>| -> Result<Tensor, ModelError> {
            Ok(Tensor::from_vec(v, (b, 1, len, len), dev)?.to_dtype(dtype)?)
        };
        Ok(Self {
            batch: b,
            len,
            video_len,
            conditions,
            valid,
            bias_2d: bias(b2)?,
            bias_3d: bias(b3)?,
            rope_2d: rope_tables(&a2, &[b, 1, len, hd / 2], dtype, dev)?,
            rope_3d: rope_tables(&a3, &[b, 1, len, hd / 2], dtype, dev)?,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn seq_len(&self) -> usize {
        self.len
    }

    pub fn video_len(&self) -> usize {
        self.video_len
    }

    /// Attention-mask bits of sample `b` after batch padding.
    pub fn valid(&self, b: usize) -> &[bool] {
        &self.valid[b]
    }
}

/// Inputs that change per sampler step.
#[derive(Debug, Clone, Copy)]
pub struct ModelInput<'a> {
    /// Noisy video tokens `[B, L_video, video_token_dim]`.
    pub x_t: &'a Tensor,
    pub t: &'a [f64],
    /// Text token ids, equal length per sample.
    pub text_ids: &'a [Vec<u32>],
}

/// Projects raw tokens to `[B, L, d_model]`; padding rows are zero.
pub fn embed_tokens(
    params: &ModelParams,
    x_t: &Tensor,
    ctx: &BatchContext,
) -> Result<Tensor, ModelError> {
    let (b, lv, dv) = x_t.dims3()?;
    let cfg = params.config();
    if b != ctx.batch || lv != ctx.video_len || dv != cfg.video_token_dim {
        return Err(ModelError::Shape(format!(
            "x_t is {:?}, expected [{}, {}, {}]",
            x_t.dims(),
            ctx.batch,
            ctx.video_len,
            cfg.video_token_dim
        )));
    }
    let video = linear(x_t, &params.linear("embed.video")?)?;
    let projections = [
        params.linear("embed.camera")?,
        params.linear("embed.identity")?,
        params.linear("embed.depth")?,
    ];
    let mut rows = Vec::with_capacity(b);
    for (i, conds) in ctx.conditions.iter().enumerate() {
        let mut parts = vec![video.get(i)?];
        for (c, proj) in conds.iter().zip(&projections) {
            if let Some(c) = c {
                parts.push(linear(c, proj)?);
            }
        }
        let used: usize = parts.iter().map(|p| p.dim(0)).sum::<Result<usize, _>>()?;
        if used < ctx.len {
            parts.push(Tensor::zeros(
                (ctx.len - used, cfg.d_model),
                params.dtype(),
                params.device(),
            )?);
        }
        rows.push(Tensor::cat(&parts, 0)?);
    }
    Ok(Tensor::stack(&rows, 0)?)
}

fn text_embedding(params: &ModelParams, ids: &[Vec<u32>]) -> Result<Tensor, ModelError> {
    let cfg = params.config();
    let t = ids.first().map_or(0, Vec::len);
    if t == 0 || ids.iter().any(|r| r.len() != t) {
        return Err(ModelError::Shape(
            "text ids must be non-empty and of equal length".into(),
        ));
    }
    if let Some(&bad) = ids
        .iter()
        .flatten()
        .find(|&&id| id as usize >= cfg.text_vocab)
    {
        return Err(ModelError::Shape(format!(
            "text id {bad} outside vocabulary of {}",
            cfg.text_vocab
        )));
    }
    let flat: Vec<u32> = ids.iter().flatten().copied().collect();
    let idx = Tensor::from_vec(flat, ids.len() * t, params.device())?;
    let table = params.tensor("text.embedding")?;
    Ok(table
        .index_select(&idx, 0)?
        .reshape((ids.len(), t, cfg.text_dim))?)
}

/// Runs the block stack on embedded tokens `h` (`[B, L, d]`) and returns the
/// prediction at video positions, `[B, L_video, video_token_dim]`.
pub fn forward_embedded(
    params: &ModelParams,
    h: &Tensor,
    t: &[f64],
    text_ids: &[Vec<u32>],
    ctx: &BatchContext,
) -> Result<Tensor, ModelError> {
    if t.len() != ctx.batch || text_ids.len() != ctx.batch {
        return Err(ModelError::Shape(format!(
            "{} timesteps and {} texts for a batch of {}",
            t.len(),
            text_ids.len(),
            ctx.batch
        )));
    }
    let t_emb = timestep_embedding(params, t)?;
    let text = text_embedding(params, text_ids)?;
    let mut h = h.clone();
    for layer in 0..params.config().n_layers {
        h = fulldit_block(&h, &text, &t_emb, params, layer, ctx)?;
    }
    let out = linear(&rms_norm(&h)?, &params.linear("final.proj")?)?;
    Ok(out.narrow(1, 0, ctx.video_len)?)
}

/// Velocity prediction `u_Θ(x_t, t, C)` at the video tokens.
pub fn model_forward(
    params: &ModelParams,
    input: ModelInput<'_>,
    ctx: &BatchContext,
) -> Result<Tensor, ModelError> {
    let h = embed_tokens(params, input.x_t, ctx)?;
    forward_embedded(params, &h, input.t, input.text_ids, ctx)
}

/// Host copy of a tensor as `f64`, row-major.
pub(crate) fn to_f64_vec(t: &Tensor) -> Result<Vec<f64>, ModelError> {
    Ok(t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?)
}
