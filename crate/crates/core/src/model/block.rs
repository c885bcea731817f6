//! One FullDiT block with AdaLN-Zero modulation.

use candle_core::{Tensor, D};

use super::attention::multihead;
use super::forward::BatchContext;
use super::params::linear;
use super::{ModelError, ModelParams};

const NORM_EPS: f64 = 1e-6;

/// Modulation of one sublayer; each tensor is `[B, 1, d_model]`.
#[derive(Debug, Clone)]
pub struct AdaLnTriple {
    pub scale: Tensor,
    pub shift: Tensor,
    pub gate: Tensor,
}

/// Weightless RMS normalization over the last dimension.
pub(crate) fn rms_norm(x: &Tensor) -> Result<Tensor, ModelError> {
    let ms = x.sqr()?.mean_keepdim(D::Minus1)?;
    Ok(x.broadcast_div(&(ms + NORM_EPS)?.sqrt()?)?)
}

/// Projects `t_emb` (`[B, d]`) to `12·d` and splits it into four
/// `(scale, shift, gate)` triples, in sublayer order 2D attn, 3D attn,
/// cross-attn, FFN.
pub fn adaln_params(
    t_emb: &Tensor,
    params: &ModelParams,
    layer: usize,
) -> Result<[AdaLnTriple; 4], ModelError> {
    let d = params.config().d_model;
    let all = linear(t_emb, &params.linear(&format!("blocks.{layer}.adaln"))?)?.unsqueeze(1)?;
    let chunk = |i: usize| all.narrow(D::Minus1, i * d, d);
    let triple = |s: usize| -> Result<AdaLnTriple, ModelError> {
        Ok(AdaLnTriple {
            scale: chunk(3 * s)?,
            shift: chunk(3 * s + 1)?,
            gate: chunk(3 * s + 2)?,
        })
    };
    Ok([triple(0)?, triple(1)?, triple(2)?, triple(3)?])
}

/// Tanh-approximated GELU built from primitive ops, so its reverse-mode
/// derivative is exact rather than a rounded closed form.
pub(crate) fn gelu(x: &Tensor) -> Result<Tensor, ModelError> {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let cube = (x.sqr()? * x)?;
    let inner = ((x + (cube * 0.044715)?)? * c)?;
    Ok(((inner.tanh()? + 1.0)? * x)?.affine(0.5, 0.0)?)
}

fn modulate(x: &Tensor, m: &AdaLnTriple) -> Result<Tensor, ModelError> {
    Ok(rms_norm(x)?
        .broadcast_mul(&(m.scale.clone() + 1.0)?)?
        .broadcast_add(&m.shift)?)
}

fn residual(x: &Tensor, m: &AdaLnTriple, update: Tensor) -> Result<Tensor, ModelError> {
    Ok((x + update.broadcast_mul(&m.gate)?)?)
}

/// `h` is `[B, L, d]`, `text` is `[B, T, text_dim]`, `t_emb` is `[B, d]`.
pub fn fulldit_block(
    h: &Tensor,
    text: &Tensor,
    t_emb: &Tensor,
    params: &ModelParams,
    layer: usize,
    ctx: &BatchContext,
) -> Result<Tensor, ModelError> {
    let heads = params.config().n_heads;
    let p = format!("blocks.{layer}");
    let [m2, m3, mc, mf] = adaln_params(t_emb, params, layer)?;

    let x = modulate(h, &m2)?;
    let a = multihead(
        &x,
        &x,
        &params.attn(&format!("{p}.attn2d"))?,
        heads,
        Some(&ctx.bias_2d),
        Some((&ctx.rope_2d, &ctx.rope_2d)),
    )?;
    let h = residual(h, &m2, a)?;

    let x = modulate(&h, &m3)?;
    let a = multihead(
        &x,
        &x,
        &params.attn(&format!("{p}.attn3d"))?,
        heads,
        Some(&ctx.bias_3d),
        Some((&ctx.rope_3d, &ctx.rope_3d)),
    )?;
    let h = residual(&h, &m3, a)?;

    let x = modulate(&h, &mc)?;
    let a = multihead(
        &x,
        text,
        &params.attn(&format!("{p}.cross"))?,
        heads,
        None,
        None,
    )?;
    let h = residual(&h, &mc, a)?;

    let x = modulate(&h, &mf)?;
    let up = gelu(&linear(&x, &params.linear(&format!("{p}.ffn.up"))?)?)?;
    let f = linear(&up, &params.linear(&format!("{p}.ffn.down"))?)?;
    residual(&h, &mf, f)
}
