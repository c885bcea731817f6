//! Masked multi-head scaled dot-product attention.
//!
//! Masking is an additive bias of `−∞` on disallowed keys, so a masked key's
//! weight is exactly zero and no perturbation of it can reach the output.

use candle_core::{Tensor, D};

use super::params::{linear, Linear};
use super::rope::{apply_rope, rope_angles, rope_tables, RopeAxes};
use super::ModelError;

/// Which keys a query may see beyond the padding mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttnMode {
    /// Every unmasked key.
    Full,
    /// Only unmasked keys sharing the query's temporal coordinate.
    PerFrame,
}

/// Projection weights of one attention sublayer.
#[derive(Debug, Clone)]
pub struct AttnWeights {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

/// `softmax(q·kᵀ/√d + bias)·v` over `[B, H, L, d]` tensors; `bias` broadcasts
/// against `[B, H, Lq, Lk]`.
pub fn sdpa(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    bias: Option<&Tensor>,
) -> Result<Tensor, ModelError> {
    let hd = q.dim(D::Minus1)?;
    let mut s = (q.matmul(&k.t()?)? * (1.0 / (hd as f64).sqrt()))?;
    if let Some(b) = bias {
        s = s.broadcast_add(b)?;
    }
    // The max is only a stabilizer; softmax is invariant to it.
    let m = s.max_keepdim(D::Minus1)?.detach();
    let e = s.broadcast_sub(&m)?.exp()?;
    let p = e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?;
    Ok(p.matmul(v)?)
}

fn split_heads(x: &Tensor, n_heads: usize) -> Result<Tensor, ModelError> {
    let (b, l, d) = x.dims3()?;
    Ok(x.reshape((b, l, n_heads, d / n_heads))?
        .transpose(1, 2)?
        .contiguous()?)
}

fn merge_heads(x: &Tensor) -> Result<Tensor, ModelError> {
    let (b, h, l, hd) = x.dims4()?;
    Ok(x.transpose(1, 2)?.contiguous()?.reshape((b, l, h * hd))?)
}

/// `(cos, sin)` tables shaped `[B, 1, L, head_dim/2]`.
pub(crate) type RopeTables = (Tensor, Tensor);

/// Batched multi-head attention of `x_q` (`[B, Lq, d]`) over `x_kv` (`[B, Lk, d_kv]`).
pub(crate) fn multihead(
    x_q: &Tensor,
    x_kv: &Tensor,
    w: &AttnWeights,
    n_heads: usize,
    bias: Option<&Tensor>,
    rope: Option<(&RopeTables, &RopeTables)>,
) -> Result<Tensor, ModelError> {
    let mut q = split_heads(&linear(x_q, &w.q)?, n_heads)?;
    let mut k = split_heads(&linear(x_kv, &w.k)?, n_heads)?;
    let v = split_heads(&linear(x_kv, &w.v)?, n_heads)?;
    if let Some(((qc, qs), (kc, ks))) = rope {
        q = apply_rope(&q, qc, qs)?;
        k = apply_rope(&k, kc, ks)?;
    }
    let o = sdpa(&q, &k, &v, bias)?;
    linear(&merge_heads(&o)?, &w.o)
}

/// Additive attention bias, row-major `Lq × Lk`: `0` where query `i` may see
/// key `j`, `−∞` elsewhere. `query_valid[i] == false` marks padding queries,
/// which see only themselves so their (discarded) rows stay finite.
pub(crate) fn attention_bias(
    query_valid: Option<&[bool]>,
    key_valid: &[bool],
    q_time: &[i32],
    k_time: &[i32],
    mode: AttnMode,
) -> Result<Vec<f64>, ModelError> {
    let (lq, lk) = (q_time.len(), k_time.len());
    let mut bias = vec![f64::NEG_INFINITY; lq * lk];
    for i in 0..lq {
        let row = &mut bias[i * lk..(i + 1) * lk];
        if query_valid.is_some_and(|v| !v[i]) {
            if i < lk {
                row[i] = 0.0;
            }
            continue;
        }
        let mut any = false;
        for j in 0..lk {
            if key_valid[j] && (mode == AttnMode::Full || q_time[i] == k_time[j]) {
                row[j] = 0.0;
                any = true;
            }
        }
        if !any {
            return Err(ModelError::AllMasked { row: i });
        }
    }
    Ok(bias)
}

/// Rotary coordinates of a single-sequence attention call.
#[derive(Debug, Clone, Copy)]
pub struct RopeSpec<'a> {
    pub q_coords: &'a [[i32; 3]],
    pub k_coords: &'a [[i32; 3]],
    pub axes: RopeAxes,
    pub base: f64,
}

/// Single-sequence attention: `q_seq` is `Lq × d`, `kv_seq` is `Lk × d_kv`,
/// `kv_mask` marks usable keys. `PerFrame` mode needs `rope` for the temporal
/// coordinates; without `rope` no rotation is applied.
pub fn attention(
    q_seq: &Tensor,
    kv_seq: &Tensor,
    kv_mask: &[bool],
    w: &AttnWeights,
    n_heads: usize,
    mode: AttnMode,
    rope: Option<RopeSpec<'_>>,
) -> Result<Tensor, ModelError> {
    let (lq, d) = q_seq.dims2()?;
    let (lk, _) = kv_seq.dims2()?;
    if kv_mask.len() != lk {
        return Err(ModelError::Shape(format!(
            "mask of length {} for {lk} keys",
            kv_mask.len()
        )));
    }
    if d % n_heads != 0 {
        return Err(ModelError::Shape(format!(
            "d={d} not divisible by {n_heads} heads"
        )));
    }
    let (q_time, k_time): (Vec<i32>, Vec<i32>) = match rope {
        Some(r) => {
            if r.q_coords.len() != lq || r.k_coords.len() != lk {
                return Err(ModelError::Shape(
                    "coordinate count does not match sequence length".into(),
                ));
            }
            (
                r.q_coords.iter().map(|c| c[0]).collect(),
                r.k_coords.iter().map(|c| c[0]).collect(),
            )
        }
        None if mode == AttnMode::PerFrame => {
            return Err(ModelError::Shape(
                "per-frame attention needs token coordinates".into(),
            ))
        }
        None => (vec![0; lq], vec![0; lk]),
    };
    let bias = attention_bias(None, kv_mask, &q_time, &k_time, mode)?;
    let dtype = q_seq.dtype();
    let dev = q_seq.device();
    let bias = Tensor::from_vec(bias, (1, 1, lq, lk), dev)?.to_dtype(dtype)?;
    let hd = d / n_heads;
    let tables = match rope {
        Some(r) => {
            let qa = rope_angles(r.q_coords, hd, r.axes, r.base)?;
            let ka = rope_angles(r.k_coords, hd, r.axes, r.base)?;
            Some((
                rope_tables(&qa, &[1, 1, lq, hd / 2], dtype, dev)?,
                rope_tables(&ka, &[1, 1, lk, hd / 2], dtype, dev)?,
            ))
        }
        None => None,
    };
    let out = multihead(
        &q_seq.unsqueeze(0)?,
        &kv_seq.unsqueeze(0)?,
        w,
        n_heads,
        Some(&bias),
        tables.as_ref().map(|(q, k)| (q, k)),
    )?;
    Ok(out.squeeze(0)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_t(shape: (usize, usize), rng: &mut ChaCha8Rng) -> Tensor {
        let v: Vec<f64> = (0..shape.0 * shape.1)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
    }

    fn weights(d: usize, rng: &mut ChaCha8Rng) -> AttnWeights {
        let mut lin = || Linear {
            w: rand_t((d, d), rng),
            b: rand_t((1, d), rng).squeeze(0).unwrap(),
        };
        AttnWeights {
            q: lin(),
            k: lin(),
            v: lin(),
            o: lin(),
        }
    }

    fn rows(t: &Tensor) -> Vec<Vec<f64>> {
        t.to_vec2::<f64>().unwrap()
    }

    #[test]
    fn single_token_returns_its_value_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = weights(8, &mut rng);
        let x = rand_t((1, 8), &mut rng);
        let out = attention(&x, &x, &[true], &w, 2, AttnMode::Full, None).unwrap();
        let want = linear(&linear(&x.unsqueeze(0).unwrap(), &w.v).unwrap(), &w.o)
            .unwrap()
            .squeeze(0)
            .unwrap();
        for (a, b) in rows(&out)[0].iter().zip(&rows(&want)[0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_keys_average_values() {
        // Bare sdpa: two identical keys, distinct values → the mean, for any query.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let key = rand_t((1, 4), &mut rng);
        let k = Tensor::cat(&[&key, &key], 0)
            .unwrap()
            .reshape((1, 1, 2, 4))
            .unwrap();
        let v = rand_t((2, 4), &mut rng).reshape((1, 1, 2, 4)).unwrap();
        let mean = v
            .mean_keepdim(2)
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1::<f64>()
            .unwrap();
        for _ in 0..5 {
            let q = rand_t((1, 4), &mut rng).reshape((1, 1, 1, 4)).unwrap();
            let o = sdpa(&q, &k, &v, None)
                .unwrap()
                .flatten_all()
                .unwrap()
                .to_vec1::<f64>()
                .unwrap();
            for (a, b) in o.iter().zip(&mean) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn masked_key_has_no_influence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = weights(8, &mut rng);
        let q = rand_t((3, 8), &mut rng);
        let kv = rand_t((4, 8), &mut rng);
        let mask = [true, false, true, true];
        let base = attention(&q, &kv, &mask, &w, 2, AttnMode::Full, None).unwrap();
        let mut pert = kv.to_vec2::<f64>().unwrap();
        pert[1].iter_mut().for_each(|v| *v = *v * 1e6 - 3e5);
        let pert = Tensor::new(pert, &Device::Cpu).unwrap();
        let out = attention(&q, &pert, &mask, &w, 2, AttnMode::Full, None).unwrap();
        assert_eq!(rows(&base), rows(&out));
    }

    #[test]
    fn all_masked_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = weights(4, &mut rng);
        let x = rand_t((2, 4), &mut rng);
        let err = attention(&x, &x, &[false, false], &w, 1, AttnMode::Full, None).unwrap_err();
        assert!(matches!(err, ModelError::AllMasked { row: 0 }));
        // per-frame: query at t=1 has no key in its frame
        let qc = [[1, 0, 0]];
        let kc = [[0, 0, 0], [0, 1, 0]];
        let spec = RopeSpec {
            q_coords: &qc,
            k_coords: &kc,
            axes: RopeAxes::TwoD,
            base: 100.0,
        };
        let q = x.narrow(0, 0, 1).unwrap();
        let err =
            attention(&q, &x, &[true, true], &w, 1, AttnMode::PerFrame, Some(spec)).unwrap_err();
        assert!(matches!(err, ModelError::AllMasked { row: 0 }));
    }

    #[test]
    fn per_frame_keys_from_other_frames_are_ignored() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = weights(8, &mut rng);
        let x = rand_t((4, 8), &mut rng);
        let coords = [[0, 0, 0], [0, 0, 1], [1, 0, 0], [1, 0, 1]];
        let spec = RopeSpec {
            q_coords: &coords,
            k_coords: &coords,
            axes: RopeAxes::TwoD,
            base: 100.0,
        };
        let base = attention(&x, &x, &[true; 4], &w, 2, AttnMode::PerFrame, Some(spec)).unwrap();
        let mut pert = x.to_vec2::<f64>().unwrap();
        pert[3].iter_mut().for_each(|v| *v += 50.0);
        let pert = Tensor::new(pert, &Device::Cpu).unwrap();
        let out = attention(
            &pert,
            &pert,
            &[true; 4],
            &w,
            2,
            AttnMode::PerFrame,
            Some(spec),
        )
        .unwrap();
        assert_eq!(rows(&base)[..2], rows(&out)[..2]);
        assert_ne!(rows(&base)[2], rows(&out)[2]);
    }

    #[test]
    fn bias_gives_padding_queries_themselves() {
        let b = attention_bias(
            Some(&[true, false]),
            &[true, false],
            &[0, 0],
            &[0, 0],
            AttnMode::Full,
        )
        .unwrap();
        assert_eq!(b, vec![0.0, f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0]);
    }
}
