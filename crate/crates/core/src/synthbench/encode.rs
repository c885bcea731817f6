//! Between toy samples and model tokens. Pixel-valued blocks (video,
//! identity, depth) are mapped from `[0, 1]` to `[−1, 1]` before encoding.

use ndarray::{Array3, Array4};

use super::world::{ToySample, ToyWorldSpec, TEXT_WORDS};
use super::SynthError;
use crate::diffusion::{sample_tokens, FlowConfig};
use crate::geometry::Trajectory;
use crate::model::ModelParams;
use crate::tokenizer::{
    untokenize_video, Condition, ConditionSet, ConditionedTokens, TokenFragment, TokenKind,
    Tokenizer, VideoTensor,
};

pub fn to_model_range(v: f32) -> f32 {
    2.0 * v - 1.0
}

pub fn from_model_range(v: f32) -> f32 {
    ((v + 1.0) / 2.0).clamp(0.0, 1.0)
}

/// Tokens of a sample with the given conditions present.
pub fn encode_sample(
    tok: &Tokenizer,
    sample: &ToySample,
    conditions: ConditionSet,
) -> Result<ConditionedTokens, SynthError> {
    let video = tok.tokenize_pixels(&sample.video.mapv(to_model_range), TokenKind::Video)?;
    let camera = if conditions.contains(Condition::Camera) {
        Some(tok.tokenize_camera(&sample.trajectory, sample.video.dim().0)?)
    } else {
        None
    };
    let identity = if conditions.contains(Condition::Identity) {
        let imgs: Vec<_> = sample
            .identities
            .iter()
            .map(|i| i.mapv(to_model_range))
            .collect();
        tok.tokenize_identities(&imgs)?
    } else {
        None
    };
    let depth = if conditions.contains(Condition::Depth) {
        Some(tok.tokenize_depth(&sample.depth.mapv(to_model_range))?)
    } else {
        None
    };
    Ok(ConditionedTokens {
        video,
        camera,
        identity,
        depth,
        text: sample.text.clone(),
    })
}

/// Whichever annotations are available for one generation request, in
/// pixel range `[0, 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionInputs {
    pub trajectory: Option<Trajectory>,
    pub identities: Vec<Array3<f32>>,
    pub depth: Option<Array4<f32>>,
    /// Text ids; empty means the null prompt.
    pub text: Vec<u32>,
}

impl ConditionInputs {
    pub fn available(&self) -> ConditionSet {
        let mut set = ConditionSet::EMPTY;
        if self.trajectory.is_some() {
            set = set.with(Condition::Camera);
        }
        if !self.identities.is_empty() {
            set = set.with(Condition::Identity);
        }
        if self.depth.is_some() {
            set = set.with(Condition::Depth);
        }
        set
    }
}

/// Tokens for generation from the available annotations restricted to
/// `use_conditions`; the video block is a placeholder.
pub fn encode_conditions(
    tok: &Tokenizer,
    spec: &ToyWorldSpec,
    inputs: &ConditionInputs,
    use_conditions: ConditionSet,
) -> Result<ConditionedTokens, SynthError> {
    let camera = match (
        &inputs.trajectory,
        use_conditions.contains(Condition::Camera),
    ) {
        (Some(traj), true) => Some(tok.tokenize_camera(traj, spec.frames)?),
        _ => None,
    };
    let identity = if use_conditions.contains(Condition::Identity) {
        let imgs: Vec<_> = inputs
            .identities
            .iter()
            .map(|i| i.mapv(to_model_range))
            .collect();
        tok.tokenize_identities(&imgs)?
    } else {
        None
    };
    let depth = match (&inputs.depth, use_conditions.contains(Condition::Depth)) {
        (Some(d), true) => {
            let want = (spec.frames, spec.height, spec.width, 3);
            if d.dim() != want {
                return Err(SynthError::Shape(format!(
                    "depth video {:?} does not match the world {want:?}",
                    d.dim()
                )));
            }
            Some(tok.tokenize_depth(&d.mapv(to_model_range))?)
        }
        _ => None,
    };
    let text = if inputs.text.is_empty() {
        vec![crate::diffusion::NULL_TEXT_ID; TEXT_WORDS]
    } else {
        inputs.text.clone()
    };
    Ok(ConditionedTokens {
        video: video_placeholder(tok, spec)?,
        camera,
        identity,
        depth,
        text,
    })
}

/// A video block of the world's shape with zero features (its coordinates
/// are what sampling needs).
pub fn video_placeholder(
    tok: &Tokenizer,
    spec: &ToyWorldSpec,
) -> Result<TokenFragment, SynthError> {
    let zeros = Array4::<f32>::zeros((spec.frames, spec.height, spec.width, 3));
    Ok(tok.tokenize_pixels(&zeros, TokenKind::Video)?)
}

/// Video tokens (model range) back to pixels in `[0, 1]`.
pub fn decode_video(
    tok: &Tokenizer,
    spec: &ToyWorldSpec,
    features: &[f32],
) -> Result<VideoTensor, SynthError> {
    let shape = tok
        .codec()
        .config()
        .latent_shape([spec.frames, spec.height, spec.width, 3])?;
    let latent = untokenize_video(features, shape, tok.latent_patch())?;
    Ok(tok.codec().decode(&latent)?.mapv(from_model_range))
}

/// Samples one video per item (video features of the items are ignored).
pub fn generate_videos(
    params: &ModelParams,
    tok: &Tokenizer,
    spec: &ToyWorldSpec,
    items: &[ConditionedTokens],
    flow: &FlowConfig,
    seed: u64,
) -> Result<Vec<VideoTensor>, SynthError> {
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let seqs = items
        .iter()
        .map(|it| it.assemble(None))
        .collect::<Result<Vec<_>, _>>()?;
    let text: Vec<Vec<u32>> = items.iter().map(|it| it.text.clone()).collect();
    let out = sample_tokens(params, &seqs, &text, flow, seed)?;
    let per = out.len() / items.len();
    let flat: Vec<f32> = out.iter().map(|&v| v as f32).collect();
    flat.chunks(per)
        .map(|c| decode_video(tok, spec, c))
        .collect()
}
