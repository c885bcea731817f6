//! Condition tokenization and unified sequence assembly.
//!
//! Every condition becomes a [`TokenFragment`]: raw patch features plus one
//! integer `(t, h, w)` coordinate per token. Fragments are concatenated in the
//! fixed order video, camera, identities, depth, then right-padded.

mod codec;
mod conditions;

pub use codec::{CodecConfig, CodecMode, Latent, ToyCodec, VideoTensor};
pub use conditions::{Condition, ConditionSet, ConditionedTokens};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::geometry::{plucker_embedding, GeometryError, Trajectory};

/// Default patch size of video, identity and depth latents.
pub const LATENT_PATCH: usize = 2;
/// Default patch size of the plücker grid.
pub const CAMERA_PATCH: usize = 16;
/// Channels of a plücker cell.
pub const PLUCKER_CHANNELS: usize = 6;

pub const DEFAULT_MAX_IDENTITIES: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid codec configuration: {0}")]
    Config(String),
    #[error("{count} identities exceed the maximum of {max}")]
    TooManyIdentities { count: usize, max: usize },
    #[error("pad_to={pad_to} is smaller than the sequence length {len}")]
    PadTooSmall { pad_to: usize, len: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Video,
    Camera,
    Identity,
    Depth,
    Padding,
}

/// Raw tokens of one condition, `len × dim` features in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenFragment {
    pub kind: TokenKind,
    pub dim: usize,
    pub features: Vec<f32>,
    pub coords: Vec<[i32; 3]>,
}

impl TokenFragment {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn token(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    fn concat(kind: TokenKind, parts: Vec<TokenFragment>) -> Option<TokenFragment> {
        let mut iter = parts.into_iter();
        let mut first = iter.next()?;
        first.kind = kind;
        for p in iter {
            debug_assert_eq!(p.dim, first.dim);
            first.features.extend(p.features);
            first.coords.extend(p.coords);
        }
        Some(first)
    }
}

/// The unified sequence: fragments in assembly order plus per-token metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub segments: Vec<TokenFragment>,
    pub type_tags: Vec<TokenKind>,
    pub coords: Vec<[i32; 3]>,
    pub attn_mask: Vec<bool>,
    pub loss_mask: Vec<bool>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.type_tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.type_tags.is_empty()
    }

    pub fn segment(&self, kind: TokenKind) -> Option<&TokenFragment> {
        self.segments.iter().find(|s| s.kind == kind)
    }

    pub fn video_len(&self) -> usize {
        self.segment(TokenKind::Video).map_or(0, |s| s.len())
    }

    /// Number of real (non-padding) tokens.
    pub fn unpadded_len(&self) -> usize {
        self.segments.iter().map(|s| s.len()).sum()
    }

    /// Re-pads to a new length (used when batching sequences).
    pub fn padded_to(&self, pad_to: usize) -> Result<TokenSequence, TokenizerError> {
        let seg = |k| self.segment(k).cloned();
        assemble_sequence(
            seg(TokenKind::Video)
                .ok_or_else(|| TokenizerError::Shape("no video segment".into()))?,
            seg(TokenKind::Camera),
            seg(TokenKind::Identity),
            seg(TokenKind::Depth),
            Some(pad_to),
        )
    }
}

/// Geometry shared by all tokenizers of one configuration.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    codec: ToyCodec,
    latent_patch: usize,
    camera_patch: usize,
    pub max_identities: usize,
}

impl Tokenizer {
    pub fn new(codec: CodecConfig) -> Result<Self, TokenizerError> {
        Self::with_patches(codec, LATENT_PATCH, CAMERA_PATCH)
    }

    pub fn with_patches(
        codec: CodecConfig,
        latent_patch: usize,
        camera_patch: usize,
    ) -> Result<Self, TokenizerError> {
        if latent_patch == 0 || camera_patch == 0 {
            return Err(TokenizerError::Config(
                "patch sizes must be positive".into(),
            ));
        }
        Ok(Self {
            codec: ToyCodec::new(codec)?,
            latent_patch,
            camera_patch,
            max_identities: DEFAULT_MAX_IDENTITIES,
        })
    }

    pub fn latent_patch(&self) -> usize {
        self.latent_patch
    }

    pub fn camera_patch(&self) -> usize {
        self.camera_patch
    }

    pub fn codec(&self) -> &ToyCodec {
        &self.codec
    }

    /// Raw dimension of video, identity and depth tokens, `patch² · C`.
    pub fn latent_token_dim(&self) -> usize {
        self.latent_patch * self.latent_patch * self.codec.config().latent_channels
    }

    pub fn camera_token_dim(&self) -> usize {
        self.camera_patch * self.camera_patch * PLUCKER_CHANNELS
    }

    /// Pixels covered by one video token along each spatial axis.
    pub fn pixels_per_video_token(&self) -> usize {
        self.codec.config().spatial_compression * self.latent_patch
    }

    pub fn encode(&self, video: &VideoTensor) -> Result<Latent, TokenizerError> {
        self.codec.encode(video)
    }

    pub fn tokenize_video(&self, latent: &Latent) -> Result<TokenFragment, TokenizerError> {
        tokenize_latent(latent, self.latent_patch, TokenKind::Video, |t| t as i32)
    }

    /// Encodes then tokenizes a pixel video.
    pub fn tokenize_pixels(
        &self,
        video: &VideoTensor,
        kind: TokenKind,
    ) -> Result<TokenFragment, TokenizerError> {
        let latent = self.codec.encode(video)?;
        tokenize_latent(&latent, self.latent_patch, kind, |t| t as i32)
    }

    pub fn tokenize_depth(&self, depth: &VideoTensor) -> Result<TokenFragment, TokenizerError> {
        self.tokenize_pixels(depth, TokenKind::Depth)
    }

    /// Plücker tokens for every camera frame. Camera frame `i` of `N_cam` is
    /// placed at latent frame `round(i·(N_l−1)/(N_cam−1))`; spatial coordinates
    /// are the center of the camera patch in video-token units.
    pub fn tokenize_camera(
        &self,
        traj: &Trajectory,
        video_frames: usize,
    ) -> Result<TokenFragment, TokenizerError> {
        let (h, w, cp) = (traj.height(), traj.width(), self.camera_patch);
        if h % cp != 0 || w % cp != 0 {
            return Err(TokenizerError::Shape(format!(
                "{h}x{w} frame is not divisible by camera patch {cp}"
            )));
        }
        let n_latent = self.codec.config().latent_frames(video_frames)?;
        let n_cam = traj.len();
        let (ph, pw) = (h / cp, w / cp);
        let dim = self.camera_token_dim();
        let scale = cp as f64 / self.pixels_per_video_token() as f64;
        let center = |r: usize| (r as f64 * scale + (scale - 1.0) / 2.0).floor() as i32;

        let mut features = Vec::with_capacity(n_cam * ph * pw * dim);
        let mut coords = Vec::with_capacity(n_cam * ph * pw);
        for (i, frame) in traj.frames().iter().enumerate() {
            let t = aligned_frame(i, n_cam, n_latent);
            let plucker = plucker_embedding(&frame.pose, &frame.intrinsics)?;
            patchify_plucker(&plucker.grid, cp, &mut features);
            for r in 0..ph {
                for c in 0..pw {
                    coords.push([t, center(r), center(c)]);
                }
            }
        }
        Ok(TokenFragment {
            kind: TokenKind::Camera,
            dim,
            features,
            coords,
        })
    }

    /// Tokens for identity images (`H × W × 3` each); identity `j` sits at
    /// temporal coordinate `−(j+1)`.
    pub fn tokenize_identities(
        &self,
        images: &[Array3<f32>],
    ) -> Result<Option<TokenFragment>, TokenizerError> {
        if images.len() > self.max_identities {
            return Err(TokenizerError::TooManyIdentities {
                count: images.len(),
                max: self.max_identities,
            });
        }
        let parts = images
            .iter()
            .enumerate()
            .map(|(j, img)| {
                let video = img.clone().insert_axis(ndarray::Axis(0));
                let latent = self.codec.encode(&video)?;
                tokenize_latent(&latent, self.latent_patch, TokenKind::Identity, |_| {
                    -(j as i32) - 1
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TokenFragment::concat(TokenKind::Identity, parts))
    }
}

/// Latent frame that camera frame `i` of `n_cam` aligns to.
pub fn aligned_frame(i: usize, n_cam: usize, n_latent: usize) -> i32 {
    if n_cam <= 1 {
        return 0;
    }
    (i as f64 * (n_latent - 1) as f64 / (n_cam - 1) as f64).round() as i32
}

fn tokenize_latent(
    latent: &Latent,
    p: usize,
    kind: TokenKind,
    time_coord: impl Fn(usize) -> i32,
) -> Result<TokenFragment, TokenizerError> {
    let (nl, hl, wl, c) = latent.dim();
    if hl % p != 0 || wl % p != 0 || hl == 0 || wl == 0 {
        return Err(TokenizerError::Shape(format!(
            "{hl}x{wl} latent is not divisible by patch {p}"
        )));
    }
    let (gh, gw) = (hl / p, wl / p);
    let dim = p * p * c;
    let mut features = Vec::with_capacity(nl * gh * gw * dim);
    let mut coords = Vec::with_capacity(nl * gh * gw);
    for t in 0..nl {
        for i in 0..gh {
            for j in 0..gw {
                for dy in 0..p {
                    for dx in 0..p {
                        for ch in 0..c {
                            features.push(latent[[t, i * p + dy, j * p + dx, ch]]);
                        }
                    }
                }
                coords.push([time_coord(t), i as i32, j as i32]);
            }
        }
    }
    Ok(TokenFragment {
        kind,
        dim,
        features,
        coords,
    })
}

/// Inverse of video tokenization: tokens back to an `N_l × H_l × W_l × C` latent.
pub fn untokenize_video(
    features: &[f32],
    latent_shape: [usize; 4],
    p: usize,
) -> Result<Latent, TokenizerError> {
    let [nl, hl, wl, c] = latent_shape;
    if p == 0 || hl % p != 0 || wl % p != 0 || features.len() != nl * hl * wl * c {
        return Err(TokenizerError::Shape(format!(
            "{} features do not fill latent {latent_shape:?}",
            features.len()
        )));
    }
    let mut out = Latent::zeros((nl, hl, wl, c));
    let mut it = features.iter();
    for t in 0..nl {
        for i in 0..hl / p {
            for j in 0..wl / p {
                for dy in 0..p {
                    for dx in 0..p {
                        for ch in 0..c {
                            out[[t, i * p + dy, j * p + dx, ch]] = *it.next().unwrap();
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn patchify_plucker(grid: &Array3<f64>, p: usize, out: &mut Vec<f32>) {
    let (h, w, ch) = grid.dim();
    for r in 0..h / p {
        for c in 0..w / p {
            for dy in 0..p {
                for dx in 0..p {
                    for k in 0..ch {
                        out.push(grid[[r * p + dy, c * p + dx, k]] as f32);
                    }
                }
            }
        }
    }
}

/// Concatenates fragments as `[video, camera, identities, depth]` and
/// right-pads to `pad_to` tokens with masked-out padding.
pub fn assemble_sequence(
    video: TokenFragment,
    camera: Option<TokenFragment>,
    identity: Option<TokenFragment>,
    depth: Option<TokenFragment>,
    pad_to: Option<usize>,
) -> Result<TokenSequence, TokenizerError> {
    let expected = [
        (Some(&video), TokenKind::Video),
        (camera.as_ref(), TokenKind::Camera),
        (identity.as_ref(), TokenKind::Identity),
        (depth.as_ref(), TokenKind::Depth),
    ];
    for (frag, kind) in expected {
        if let Some(f) = frag {
            if f.kind != kind {
                return Err(TokenizerError::Shape(format!(
                    "fragment of kind {:?} passed in the {kind:?} slot",
                    f.kind
                )));
            }
            if f.features.len() != f.len() * f.dim {
                return Err(TokenizerError::Shape(format!(
                    "{kind:?} fragment features do not match its length"
                )));
            }
        }
    }
    if video.is_empty() {
        return Err(TokenizerError::Shape("video fragment is empty".into()));
    }

    let segments: Vec<TokenFragment> = [Some(video), camera, identity, depth]
        .into_iter()
        .flatten()
        .filter(|f| !f.is_empty())
        .collect();
    let len: usize = segments.iter().map(|s| s.len()).sum();
    let total = pad_to.unwrap_or(len);
    if total < len {
        return Err(TokenizerError::PadTooSmall { pad_to: total, len });
    }

    let mut type_tags = Vec::with_capacity(total);
    let mut coords = Vec::with_capacity(total);
    for s in &segments {
        type_tags.extend(std::iter::repeat_n(s.kind, s.len()));
        coords.extend_from_slice(&s.coords);
    }
    let mut attn_mask = vec![true; len];
    let mut loss_mask: Vec<bool> = type_tags.iter().map(|k| *k == TokenKind::Video).collect();
    type_tags.resize(total, TokenKind::Padding);
    coords.resize(total, [0, 0, 0]);
    attn_mask.resize(total, false);
    loss_mask.resize(total, false);

    Ok(TokenSequence {
        segments,
        type_tags,
        coords,
        attn_mask,
        loss_mask,
    })
}
