//! Recovering the square from pixels, and the toy metric suite.
//!
//! Pixels of the scene are mixtures `p = α·c + β·1` of a palette color `c`
//! and gray (background, or the marker's extra brightness). Projecting the
//! chroma `p − mean(p)` onto the chroma of `c` therefore recovers the square
//! coverage `α` exactly, independent of the background.

use nalgebra::{Matrix3, Vector3};
use ndarray::{Array3, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use super::world::{Palette, ToySample, SQUARE_DEPTH};
use super::SynthError;
use crate::tokenizer::VideoTensor;

/// Pixels whose estimated coverage is below this are treated as background.
const MIN_COVERAGE: f64 = 0.1;
/// Minimum cosine between a pixel's chroma and the palette chroma.
const MIN_HUE_COSINE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareEstimate {
    /// Palette entry the square was matched to.
    pub palette_index: usize,
    /// Per-frame `(u, v)` in pixels.
    pub centers: Vec<[f64; 2]>,
    /// Per-frame in-plane orientation in radians, in `(−π, π]`.
    pub orientations: Vec<f64>,
    /// Per-frame mean RGB over the square.
    pub colors: Vec<[f64; 3]>,
}

fn chroma(p: [f64; 3]) -> [f64; 3] {
    let m = (p[0] + p[1] + p[2]) / 3.0;
    [p[0] - m, p[1] - m, p[2] - m]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn pixel(frame: &ArrayView3<f32>, y: usize, x: usize) -> [f64; 3] {
    [
        frame[[y, x, 0]] as f64,
        frame[[y, x, 1]] as f64,
        frame[[y, x, 2]] as f64,
    ]
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = a.rem_euclid(tau);
    if r > std::f64::consts::PI {
        r - tau
    } else {
        r
    }
}

/// Palette entry whose chroma best explains the colored pixels.
fn match_palette(video: &VideoTensor, palette: &Palette) -> usize {
    let hues: Vec<[f64; 3]> = (0..palette.len())
        .map(|k| {
            let h = chroma(palette.body(k).map(f64::from));
            let n = dot(h, h).sqrt();
            h.map(|v| v / n)
        })
        .collect();
    let mut scores = vec![0.0; hues.len()];
    for px in video.lanes(Axis(3)) {
        let h = chroma([px[0] as f64, px[1] as f64, px[2] as f64]);
        for (k, hue) in hues.iter().enumerate() {
            let s = dot(h, *hue).max(0.0);
            scores[k] += s * s;
        }
    }
    scores
        .iter()
        .enumerate()
        .fold(
            (0, f64::MIN),
            |best, (k, &s)| if s > best.1 { (k, s) } else { best },
        )
        .0
}

/// Least-squares plane `g(x, y) = a·x + b·y + c` through weighted intensities.
fn fit_plane(samples: &[(f64, f64, f64)]) -> impl Fn(f64, f64) -> f64 {
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for &(x, y, g) in samples {
        let r = Vector3::new(x, y, 1.0);
        ata += r * r.transpose();
        atb += r * g;
    }
    let mean = if samples.is_empty() {
        0.5
    } else {
        samples.iter().map(|s| s.2).sum::<f64>() / samples.len() as f64
    };
    let coef = if samples.len() >= 3 {
        ata.try_inverse().map(|inv| inv * atb)
    } else {
        None
    };
    move |x, y| match coef {
        Some(c) => c[0] * x + c[1] * y + c[2],
        None => mean,
    }
}

/// Per-frame square center (coverage centroid), orientation (direction of
/// the marker centroid) and mean color.
pub fn estimate_square(
    video: &VideoTensor,
    palette: &Palette,
) -> Result<SquareEstimate, SynthError> {
    let (n, h, w, c) = video.dim();
    if c != 3 || n == 0 {
        return Err(SynthError::Shape(format!(
            "expected N×H×W×3 video, got {:?}",
            video.shape()
        )));
    }
    if palette.is_empty() {
        return Err(SynthError::Config("palette is empty".into()));
    }
    let k = match_palette(video, palette);
    let body = palette.body(k).map(f64::from);
    let hc = chroma(body);
    let hc2 = dot(hc, hc);
    let body_mean = (body[0] + body[1] + body[2]) / 3.0;
    let boost = palette.marker_boost as f64;

    let mut est = SquareEstimate {
        palette_index: k,
        centers: Vec::with_capacity(n),
        orientations: Vec::with_capacity(n),
        colors: Vec::with_capacity(n),
    };
    for i in 0..n {
        let frame = video.index_axis(Axis(0), i);
        let mut alpha = vec![0.0; h * w];
        let mut background = Vec::new();
        let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let p = pixel(&frame, y, x);
                let hp = chroma(p);
                let a = dot(hp, hc) / hc2;
                let norm = dot(hp, hp).sqrt();
                let cosine = if norm > 0.0 {
                    dot(hp, hc) / (norm * hc2.sqrt())
                } else {
                    0.0
                };
                if a >= MIN_COVERAGE && cosine >= MIN_HUE_COSINE {
                    let a = a.min(1.0);
                    alpha[y * w + x] = a;
                    sw += a;
                    sx += a * x as f64;
                    sy += a * y as f64;
                } else {
                    background.push((x as f64, y as f64, (p[0] + p[1] + p[2]) / 3.0));
                }
            }
        }
        if sw <= 0.0 {
            return Err(SynthError::NotFound { frame: i });
        }
        let center = [sx / sw, sy / sw];
        let g = fit_plane(&background);

        let (mut mw, mut mx, mut my) = (0.0, 0.0, 0.0);
        let (mut cw, mut col) = (0.0, [0.0; 3]);
        for y in 0..h {
            for x in 0..w {
                let a = alpha[y * w + x];
                if a <= 0.0 {
                    continue;
                }
                let p = pixel(&frame, y, x);
                let gray =
                    (p[0] + p[1] + p[2]) / 3.0 - a * body_mean - (1.0 - a) * g(x as f64, y as f64);
                let beta = (gray / boost).clamp(0.0, a);
                mw += beta;
                mx += beta * x as f64;
                my += beta * y as f64;
                if a >= 0.5 {
                    cw += a;
                    for ch in 0..3 {
                        col[ch] += a * p[ch];
                    }
                }
            }
        }
        // The marker occupies the upper-right quadrant, at angle −π/4 when upright.
        let orientation = if mw > 1e-9 {
            wrap_angle(
                (my / mw - center[1]).atan2(mx / mw - center[0]) + std::f64::consts::FRAC_PI_4,
            )
        } else {
            0.0
        };
        let color = if cw > 0.0 {
            col.map(|v| v / cw)
        } else {
            let mut acc = [0.0; 3];
            for y in 0..h {
                for x in 0..w {
                    let a = alpha[y * w + x];
                    let p = pixel(&frame, y, x);
                    for ch in 0..3 {
                        acc[ch] += a * p[ch];
                    }
                }
            }
            acc.map(|v| v / sw)
        };
        est.centers.push(center);
        est.orientations.push(orientation);
        est.colors.push(color);
    }
    Ok(est)
}

/// `(center_err px, orient_err rad)`: mean per-frame distances to ground truth.
pub fn eval_camera_toy(
    gen: &VideoTensor,
    gt: &ToySample,
    palette: &Palette,
) -> Result<(f64, f64), SynthError> {
    if gen.dim().0 != gt.centers.len() {
        return Err(SynthError::Shape(format!(
            "{} generated frames vs {} ground-truth frames",
            gen.dim().0,
            gt.centers.len()
        )));
    }
    let est = estimate_square(gen, palette)?;
    let n = gt.centers.len() as f64;
    let center = est
        .centers
        .iter()
        .zip(&gt.centers)
        .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let orient = est
        .orientations
        .iter()
        .zip(&gt.orientations)
        .map(|(a, b)| wrap_angle(a - b).abs())
        .sum::<f64>()
        / n;
    Ok((center, orient))
}

fn mean_color(est: &SquareEstimate) -> [f64; 3] {
    let n = est.colors.len() as f64;
    est.colors.iter().fold([0.0; 3], |acc, c| {
        [acc[0] + c[0] / n, acc[1] + c[1] / n, acc[2] + c[2] / n]
    })
}

/// Cosine similarity of square mean colors, mapped from `[−1, 1]` to `[0, 1]`.
pub fn eval_identity_toy(
    gen: &VideoTensor,
    reference: &Array3<f32>,
    palette: &Palette,
) -> Result<f64, SynthError> {
    let g = mean_color(&estimate_square(gen, palette)?);
    let r = mean_color(&estimate_square(
        &reference.clone().insert_axis(Axis(0)),
        palette,
    )?);
    let denom = dot(g, g).sqrt() * dot(r, r).sqrt();
    let cosine = if denom > 0.0 {
        (dot(g, r) / denom).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    Ok((cosine + 1.0) / 2.0)
}

/// Mean absolute difference between generated pixels and ground-truth depth
/// over every channel of the pixels the square does not touch.
pub fn eval_depth_toy(gen: &VideoTensor, gt_depth: &VideoTensor) -> Result<f64, SynthError> {
    if gen.shape() != gt_depth.shape() {
        return Err(SynthError::Shape(format!(
            "{:?} vs {:?}",
            gen.shape(),
            gt_depth.shape()
        )));
    }
    let (n, h, w, c) = gen.dim();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for y in 0..h {
            for x in 0..w {
                let d = gt_depth[[i, y, x, 0]];
                if d >= SQUARE_DEPTH {
                    continue;
                }
                for ch in 0..c {
                    sum += (gen[[i, y, x, ch]] as f64 - d as f64).abs();
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(SynthError::Shape(
            "ground-truth depth has no background pixel".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// Mean absolute change between adjacent frames.
fn mean_frame_change(video: &VideoTensor) -> f64 {
    let n = video.dim().0;
    let diffs: f64 = (1..n)
        .map(|i| {
            let (a, b) = (
                video.index_axis(Axis(0), i - 1),
                video.index_axis(Axis(0), i),
            );
            a.iter()
                .zip(b.iter())
                .map(|(p, q)| (p - q).abs() as f64)
                .sum::<f64>()
                / a.len() as f64
        })
        .sum();
    diffs / (n - 1) as f64
}

/// Smoothness `1 − mean |f_{i+1} − f_i|` (pixels only).
pub fn smoothness(video: &VideoTensor) -> Result<f64, SynthError> {
    if video.dim().0 < 2 {
        return Err(SynthError::NeedTwoFrames);
    }
    Ok(1.0 - mean_frame_change(video))
}

/// Mean displacement of the estimated square center, pixels per frame.
pub fn dynamic_degree(video: &VideoTensor, palette: &Palette) -> Result<f64, SynthError> {
    if video.dim().0 < 2 {
        return Err(SynthError::NeedTwoFrames);
    }
    let c = estimate_square(video, palette)?.centers;
    Ok(c.windows(2)
        .map(|p| ((p[1][0] - p[0][0]).powi(2) + (p[1][1] - p[0][1]).powi(2)).sqrt())
        .sum::<f64>()
        / (c.len() - 1) as f64)
}

/// `(smoothness, dynamic)`.
pub fn eval_quality_toy(gen: &VideoTensor, palette: &Palette) -> Result<(f64, f64), SynthError> {
    Ok((smoothness(gen)?, dynamic_degree(gen, palette)?))
}
