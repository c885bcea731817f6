//! Axial rotary position encoding over integer `(t, h, w)` token coordinates.
//!
//! The `head_dim / 2` feature pairs `(2k, 2k+1)` are split among the active
//! axes, laid out axis by axis (`t`, then `h`, then `w`). Pair `j` of an axis
//! with `d_axis = 2·pairs_axis` features rotates by `c · base^(−2j/d_axis)`.

use candle_core::{DType, Device, Tensor, D};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RopeAxes {
    /// Spatial `(h, w)` only; pairs split equally.
    TwoD,
    /// `(t, h, w)`; pairs split 2:1:1 when divisible by 4, else in thirds with
    /// the remainder on `t`.
    ThreeD,
}

/// Pair counts allotted to the `[t, h, w]` axes.
pub fn rope_axis_pairs(head_dim: usize, axes: RopeAxes) -> Result<[usize; 3], ModelError> {
    if head_dim == 0 || !head_dim.is_multiple_of(2) {
        return Err(ModelError::Shape(format!(
            "head_dim {head_dim} is not a positive even number"
        )));
    }
    let pairs = head_dim / 2;
    match axes {
        RopeAxes::TwoD => {
            if !pairs.is_multiple_of(2) {
                return Err(ModelError::Shape(format!(
                    "{pairs} feature pairs cannot be split equally between h and w"
                )));
            }
            Ok([0, pairs / 2, pairs / 2])
        }
        RopeAxes::ThreeD => {
            if pairs.is_multiple_of(4) {
                Ok([pairs / 2, pairs / 4, pairs / 4])
            } else if pairs >= 3 {
                let third = pairs / 3;
                Ok([pairs - 2 * third, third, third])
            } else {
                Err(ModelError::Shape(format!(
                    "{pairs} feature pairs cannot cover three axes"
                )))
            }
        }
    }
}

/// Rotation angle of every `(token, pair)`, row-major `L × head_dim/2`.
pub fn rope_angles(
    coords: &[[i32; 3]],
    head_dim: usize,
    axes: RopeAxes,
    base: f64,
) -> Result<Vec<f64>, ModelError> {
    let split = rope_axis_pairs(head_dim, axes)?;
    let mut freqs = Vec::with_capacity(head_dim / 2);
    for (axis, &n) in split.iter().enumerate() {
        let d_axis = (2 * n) as f64;
        for j in 0..n {
            freqs.push((axis, base.powf(-2.0 * j as f64 / d_axis)));
        }
    }
    let mut out = Vec::with_capacity(coords.len() * freqs.len());
    for c in coords {
        out.extend(freqs.iter().map(|&(axis, f)| c[axis] as f64 * f));
    }
    Ok(out)
}

/// `(cos, sin)` tables shaped `shape` (its last dim is the pair count).
pub(crate) fn rope_tables(
    angles: &[f64],
    shape: &[usize],
    dtype: DType,
    device: &Device,
) -> Result<(Tensor, Tensor), ModelError> {
    let cos: Vec<f64> = angles.iter().map(|a| a.cos()).collect();
    let sin: Vec<f64> = angles.iter().map(|a| a.sin()).collect();
    let cos = Tensor::from_vec(cos, shape, device)?.to_dtype(dtype)?;
    let sin = Tensor::from_vec(sin, shape, device)?.to_dtype(dtype)?;
    Ok((cos, sin))
}

/// Rotates interleaved pairs of `x` (`[..., L, head_dim]`) by tables that
/// broadcast against `[..., L, head_dim/2]`.
pub(crate) fn apply_rope(x: &Tensor, cos: &Tensor, sin: &Tensor) -> Result<Tensor, ModelError> {
    let dims = x.dims().to_vec();
    let hd = *dims
        .last()
        .ok_or_else(|| ModelError::Shape("rope input is a scalar".into()))?;
    let mut paired = dims.clone();
    paired.pop();
    paired.push(hd / 2);
    paired.push(2);
    let xp = x.reshape(paired)?;
    let x0 = xp.narrow(D::Minus1, 0, 1)?.squeeze(D::Minus1)?;
    let x1 = xp.narrow(D::Minus1, 1, 1)?.squeeze(D::Minus1)?;
    let r0 = (x0.broadcast_mul(cos)? - x1.broadcast_mul(sin)?)?;
    let r1 = (x0.broadcast_mul(sin)? + x1.broadcast_mul(cos)?)?;
    Ok(Tensor::stack(&[r0, r1], D::Minus1)?.reshape(dims)?)
}

/// Applies axial RoPE to `x` shaped `L × n_heads × head_dim`.
pub fn rope_rotate(
    x: &Tensor,
    coords: &[[i32; 3]],
    axes: RopeAxes,
    base: f64,
) -> Result<Tensor, ModelError> {
    let (l, _h, hd) = x.dims3()?;
    if coords.len() != l {
        return Err(ModelError::Shape(format!(
            "{} coords for {l} tokens",
            coords.len()
        )));
    }
    let angles = rope_angles(coords, hd, axes, base)?;
    let (cos, sin) = rope_tables(&angles, &[l, 1, hd / 2], x.dtype(), x.device())?;
    apply_rope(x, &cos, &sin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(l: usize, h: usize, hd: usize, rng: &mut ChaCha8Rng) -> Tensor {
        let v: Vec<f64> = (0..l * h * hd)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Tensor::from_vec(v, (l, h, hd), &Device::Cpu).unwrap()
    }

    #[test]
    fn axis_splits() {
        assert_eq!(rope_axis_pairs(8, RopeAxes::TwoD).unwrap(), [0, 2, 2]);
        assert_eq!(rope_axis_pairs(16, RopeAxes::ThreeD).unwrap(), [4, 2, 2]);
        assert_eq!(rope_axis_pairs(12, RopeAxes::ThreeD).unwrap(), [2, 2, 2]);
        assert_eq!(rope_axis_pairs(10, RopeAxes::ThreeD).unwrap(), [3, 1, 1]);
        assert!(rope_axis_pairs(6, RopeAxes::TwoD).is_err());
        assert!(rope_axis_pairs(4, RopeAxes::ThreeD).is_err());
        assert!(rope_axis_pairs(7, RopeAxes::TwoD).is_err());
    }

    #[test]
    fn zero_coords_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(5, 2, 16, &mut rng);
        for axes in [RopeAxes::TwoD, RopeAxes::ThreeD] {
            let y = rope_rotate(&x, &[[0, 0, 0]; 5], axes, 10000.0).unwrap();
            assert_eq!(y.to_vec3::<f64>().unwrap(), x.to_vec3::<f64>().unwrap());
        }
    }

    #[test]
    fn rotation_by_pi_negates_the_pair() {
        // 3D, head_dim 16: t pairs 0..4, h pairs 4..6, w pairs 6..8.
        // h pair j=1 has frequency base^(−2/4); c = π·base^(1/2) gives angle π.
        let base: f64 = 100.0;
        let c = std::f64::consts::PI * base.powf(0.5);
        let angles = rope_angles(&[[0, 0, 0]], 16, RopeAxes::ThreeD, base).unwrap();
        assert!(angles.iter().all(|&a| a == 0.0));
        let x = Tensor::from_vec(
            (0..16).map(|i| i as f64 + 1.0).collect::<Vec<_>>(),
            (1, 1, 16),
            &Device::Cpu,
        )
        .unwrap();
        // Coordinates are integers, so check the table and the rotation separately.
        let freq = base.powf(-2.0 / 4.0);
        assert!((c * freq - std::f64::consts::PI).abs() < 1e-12);
        let mut ang = vec![0.0; 8];
        ang[5] = c * freq;
        let (cos, sin) = rope_tables(&ang, &[1, 1, 8], DType::F64, &Device::Cpu).unwrap();
        let y = apply_rope(&x, &cos, &sin)
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1::<f64>()
            .unwrap();
        assert!((y[10] + 11.0).abs() < 1e-12 && (y[11] + 12.0).abs() < 1e-12);
        assert_eq!(
            &y[..10],
            &(1..=10).map(|v| v as f64).collect::<Vec<_>>()[..]
        );
    }

    #[test]
    fn two_d_ignores_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(1, 1, 8, &mut rng);
        let a = rope_rotate(&x, &[[0, 2, 3]], RopeAxes::TwoD, 10000.0).unwrap();
        let b = rope_rotate(&x, &[[7, 2, 3]], RopeAxes::TwoD, 10000.0).unwrap();
        assert_eq!(a.to_vec3::<f64>().unwrap(), b.to_vec3::<f64>().unwrap());
    }

    fn logits(q: &Tensor, k: &Tensor) -> Vec<f64> {
        // q: 1×H×hd, k: 1×H×hd → per-head dot products
        (q * k)
            .unwrap()
            .sum(2)
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1::<f64>()
            .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn logits_depend_only_on_relative_position(
            seed in any::<u64>(),
            a in prop::array::uniform3(-20i32..20),
            b in prop::array::uniform3(-20i32..20),
            s in prop::array::uniform3(-50i32..50),
            three_d in any::<bool>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random(1, 2, 16, &mut rng);
            let k = random(1, 2, 16, &mut rng);
            let axes = if three_d { RopeAxes::ThreeD } else { RopeAxes::TwoD };
            let shift = |c: [i32; 3]| [c[0] + s[0], c[1] + s[1], c[2] + s[2]];
            let before = logits(&rope_rotate(&q, &[a], axes, 10000.0).unwrap(), &rope_rotate(&k, &[b], axes, 10000.0).unwrap());
            let after = logits(&rope_rotate(&q, &[shift(a)], axes, 10000.0).unwrap(), &rope_rotate(&k, &[shift(b)], axes, 10000.0).unwrap());
            for (x, y) in before.iter().zip(&after) {
                prop_assert!((x - y).abs() <= 1e-6, "{} vs {}", x, y);
            }
        }
    }
}
