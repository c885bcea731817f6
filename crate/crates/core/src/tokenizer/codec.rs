//! Deterministic linear stand-in for a causal video autoencoder.
//!
//! Latent frame 0 encodes video frame 0 alone; latent frame `l > 0` encodes
//! frames `1 + (l−1)·r ..= l·r` for temporal rate `r`. Each latent cell is the
//! projection of its space-time block onto `C` orthonormal directions.

use ndarray::{Array2, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TokenizerError;

/// Pixel video `N × H × W × 3`, values nominally in `[0, 1]`.
pub type VideoTensor = Array4<f32>;

/// Latent video `N_l × H_l × W_l × C`.
pub type Latent = Array4<f32>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecMode {
    Paper,
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecConfig {
    pub temporal_compression: usize,
    pub spatial_compression: usize,
    pub latent_channels: usize,
    pub mode: CodecMode,
    /// Seed of the projection directions.
    pub seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl CodecConfig {
    /// Rates 4 (time) and 8 (space), 8 latent channels.
    pub fn paper() -> Self {
        Self {
            temporal_compression: 4,
            spatial_compression: 8,
            latent_channels: 8,
            mode: CodecMode::Paper,
            seed: 0x5eed,
        }
    }

    /// Identity codec: latent equals the pixels.
    pub fn unit() -> Self {
        Self {
            temporal_compression: 1,
            spatial_compression: 1,
            latent_channels: 3,
            mode: CodecMode::Unit,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TokenizerError> {
        if self.temporal_compression == 0
            || self.spatial_compression == 0
            || self.latent_channels == 0
        {
            return Err(TokenizerError::Config(
                "codec rates and channels must be positive".into(),
            ));
        }
        if self.mode == CodecMode::Unit
            && (self.temporal_compression != 1
                || self.spatial_compression != 1
                || self.latent_channels != 3)
        {
            return Err(TokenizerError::Config(
                "unit codec requires rates 1 and 3 latent channels".into(),
            ));
        }
        if self.mode == CodecMode::Paper {
            let first = self.spatial_compression.pow(2) * 3;
            if self.latent_channels > first {
                return Err(TokenizerError::Config(format!(
                    "{} latent channels exceed first-frame block size {first}",
                    self.latent_channels
                )));
            }
        }
        Ok(())
    }

    /// Number of latent frames for `n` video frames under the causal rule.
    pub fn latent_frames(&self, n: usize) -> Result<usize, TokenizerError> {
        if n == 0 || !(n - 1).is_multiple_of(self.temporal_compression) {
            return Err(TokenizerError::Shape(format!(
                "{n} frames do not satisfy N = 1 + k·{}",
                self.temporal_compression
            )));
        }
        Ok(1 + (n - 1) / self.temporal_compression)
    }

    pub fn latent_shape(&self, video: [usize; 4]) -> Result<[usize; 4], TokenizerError> {
        let [n, h, w, c] = video;
        if c != 3 {
            return Err(TokenizerError::Shape(format!(
                "expected 3 channels, got {c}"
            )));
        }
        let s = self.spatial_compression;
        if h % s != 0 || w % s != 0 || h == 0 || w == 0 {
            return Err(TokenizerError::Shape(format!(
                "{h}x{w} frame is not divisible by spatial rate {s}"
            )));
        }
        Ok([self.latent_frames(n)?, h / s, w / s, self.latent_channels])
    }
}

/// A codec instance with its projection matrices materialized.
#[derive(Debug, Clone)]
pub struct ToyCodec {
    cfg: CodecConfig,
    /// `C × (s²·3)` for the causal first frame.
    first: Array2<f64>,
    /// `C × (r·s²·3)` for every later latent frame.
    rest: Array2<f64>,
}

impl ToyCodec {
    pub fn new(cfg: CodecConfig) -> Result<Self, TokenizerError> {
        cfg.validate()?;
        let s2 = cfg.spatial_compression.pow(2) * 3;
        let (first, rest) = match cfg.mode {
            CodecMode::Unit => (Array2::eye(3), Array2::eye(3)),
            CodecMode::Paper => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let first = orthonormal_rows(cfg.latent_channels, s2, &mut rng);
                let rest =
                    orthonormal_rows(cfg.latent_channels, s2 * cfg.temporal_compression, &mut rng);
                (first, rest)
            }
        };
        Ok(Self { cfg, first, rest })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.cfg
    }

    /// Video frames belonging to latent frame `l`.
    fn frame_span(&self, l: usize) -> std::ops::Range<usize> {
        let r = self.cfg.temporal_compression;
        if l == 0 {
            0..1
        } else {
            1 + (l - 1) * r..1 + l * r
        }
    }

    pub fn encode(&self, video: &VideoTensor) -> Result<Latent, TokenizerError> {
        let shape = video.shape();
        let [nl, hl, wl, c] = self
            .cfg
            .latent_shape([shape[0], shape[1], shape[2], shape[3]])?;
        let s = self.cfg.spatial_compression;
        let mut out = Latent::zeros((nl, hl, wl, c));
        let mut block = Vec::new();
        for l in 0..nl {
            let span = self.frame_span(l);
            let proj = if l == 0 { &self.first } else { &self.rest };
            for i in 0..hl {
                for j in 0..wl {
                    block.clear();
                    for f in span.clone() {
                        for dy in 0..s {
                            for dx in 0..s {
                                for ch in 0..3 {
                                    block.push(video[[f, i * s + dy, j * s + dx, ch]]);
                                }
                            }
                        }
                    }
                    for k in 0..c {
                        let row = proj.row(k);
                        let v: f64 = row.iter().zip(&block).map(|(a, &b)| a * b as f64).sum();
                        out[[l, i, j, k]] = v as f32;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Applies the transpose projection; exact inverse in unit mode.
    pub fn decode(&self, latent: &Latent) -> Result<VideoTensor, TokenizerError> {
        let (nl, hl, wl, c) = latent.dim();
        if c != self.cfg.latent_channels || nl == 0 {
            return Err(TokenizerError::Shape(format!(
                "latent has {c} channels and {nl} frames, codec expects {} channels",
                self.cfg.latent_channels
            )));
        }
        let s = self.cfg.spatial_compression;
        let n = 1 + (nl - 1) * self.cfg.temporal_compression;
        let mut out = VideoTensor::zeros((n, hl * s, wl * s, 3));
        for l in 0..nl {
            let span = self.frame_span(l);
            let proj = if l == 0 { &self.first } else { &self.rest };
            for i in 0..hl {
                for j in 0..wl {
                    let mut idx = 0;
                    for f in span.clone() {
                        for dy in 0..s {
                            for dx in 0..s {
                                for ch in 0..3 {
                                    let v: f64 = (0..c)
                                        .map(|k| proj[[k, idx]] * latent[[l, i, j, k]] as f64)
                                        .sum();
                                    out[[f, i * s + dy, j * s + dx, ch]] = v as f32;
                                    idx += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `rows × cols` matrix with orthonormal rows (Gaussian draws, modified Gram–Schmidt).
fn orthonormal_rows(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while basis.len() < rows {
        let mut v: Vec<f64> = (0..cols).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    Array2::from_shape_fn((rows, cols), |(r, c)| basis[r][c])
}
