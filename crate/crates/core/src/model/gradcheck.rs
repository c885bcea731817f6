//! Central finite-difference oracle for the autodiff gradients.

use candle_core::{Tensor, Var};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::forward::to_f64_vec;
use super::{
    model_forward, BatchContext, ModelConfig, ModelError, ModelInput, ModelParams, Precision,
};
use crate::geometry::{rot_x, rot_y, rot_z, CameraIntrinsics, CameraPose, Trajectory};
use crate::tokenizer::{
    assemble_sequence, CodecConfig, TokenKind, TokenSequence, Tokenizer, VideoTensor,
};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |g_analytic − g_fd| / max(|g_analytic|, |g_fd|, floor)`.
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: (String, usize),
    pub checked: usize,
}

/// Compares the reverse-mode gradient of `loss` with central differences of
/// step `eps` for every scalar parameter. Requires `f64` parameters.
pub fn gradient_check(
    params: &ModelParams,
    loss: impl Fn(&ModelParams) -> Result<Tensor, ModelError>,
    eps: f64,
    floor: f64,
) -> Result<GradCheckReport, ModelError> {
    if params.precision() != Precision::F64 {
        return Err(ModelError::Config(
            "gradient check needs f64 parameters".into(),
        ));
    }
    let grads = loss(params)?.backward()?;
    let eval = |p: &ModelParams| -> Result<f64, ModelError> {
        Ok(loss(p)?
            .to_dtype(candle_core::DType::F64)?
            .to_scalar::<f64>()?)
    };
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (String::new(), 0),
        checked: 0,
    };
    for (name, var) in params.vars() {
        let analytic = match grads.get(var.as_tensor()) {
            Some(g) => to_f64_vec(g)?,
            None => vec![0.0; var.elem_count()],
        };
        let original = to_f64_vec(var.as_tensor())?;
        let mut work = original.clone();
        for i in 0..original.len() {
            work[i] = original[i] + eps;
            set_flat(var, &work)?;
            let plus = eval(params)?;
            work[i] = original[i] - eps;
            set_flat(var, &work)?;
            let minus = eval(params)?;
            work[i] = original[i];
            let numeric = (plus - minus) / (2.0 * eps);
            let rel =
                (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(floor);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (name.clone(), i);
            }
            report.checked += 1;
        }
        set_flat(var, &original)?;
    }
    Ok(report)
}

fn set_flat(var: &Var, data: &[f64]) -> Result<(), ModelError> {
    let t = Tensor::from_slice(data, var.dims(), var.device())?;
    var.set(&t)?;
    Ok(())
}

/// A tiny model and a two-sample batch exercising camera, identity, depth and
/// text tokens (the second sample is camera-only and padded).
#[derive(Debug, Clone)]
pub struct GradCheckFixture {
    pub config: ModelConfig,
    pub sequences: Vec<TokenSequence>,
    pub x_t: Vec<f64>,
    pub target: Vec<f64>,
    pub t: Vec<f64>,
    pub text_ids: Vec<Vec<u32>>,
}

impl GradCheckFixture {
    pub fn new(seed: u64) -> Result<Self, ModelError> {
        let shape_err = |e: crate::tokenizer::TokenizerError| ModelError::Shape(e.to_string());
        let (h, w, n) = (4, 4, 2);
        let tok = Tokenizer::with_patches(CodecConfig::unit(), 2, 2).map_err(shape_err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let video = |rng: &mut ChaCha8Rng, frames: usize| {
            VideoTensor::from_shape_fn((frames, h, w, 3), |_| rng.random::<f32>())
        };
        let k = CameraIntrinsics::new(4.0, 4.0, 2.0, 2.0, w, h)
            .map_err(|e| ModelError::Shape(e.to_string()))?;
        let poses = (0..n).map(|_| {
            let r = rot_z(rng.random_range(-0.5..0.5))
                * rot_y(rng.random_range(-0.3..0.3))
                * rot_x(rng.random_range(-0.3..0.3));
            let t = nalgebra::Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            CameraPose::new(r, t).expect("rotation products are proper")
        });
        let traj = Trajectory::from_poses("fixture", k, poses.collect::<Vec<_>>())
            .map_err(|e| ModelError::Shape(e.to_string()))?;

        let clean = video(&mut rng, n);
        let v = tok
            .tokenize_pixels(&clean, TokenKind::Video)
            .map_err(shape_err)?;
        let cam = tok.tokenize_camera(&traj, n).map_err(shape_err)?;
        let ident: Array3<f32> = video(&mut rng, 1).index_axis_move(ndarray::Axis(0), 0);
        let id = tok.tokenize_identities(&[ident]).map_err(shape_err)?;
        let depth = tok.tokenize_depth(&video(&mut rng, n)).map_err(shape_err)?;
        let full = assemble_sequence(v.clone(), Some(cam.clone()), id, Some(depth), None)
            .map_err(shape_err)?;
        let cam_only = assemble_sequence(v.clone(), Some(cam), None, None, Some(full.len()))
            .map_err(shape_err)?;

        let config = ModelConfig {
            d_model: 8,
            n_heads: 1,
            n_layers: 2,
            d_ff: 16,
            text_vocab: 12,
            text_dim: 8,
            rope_base: 100.0,
            time_freq_dim: 8,
            video_token_dim: tok.latent_token_dim(),
            camera_token_dim: tok.camera_token_dim(),
        };
        let numel = 2 * v.features.len();
        let x_t = (0..numel).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target = (0..numel).map(|_| rng.random_range(-1.0..1.0)).collect();
        Ok(Self {
            config,
            sequences: vec![full, cam_only],
            x_t,
            target,
            t: vec![0.3, 0.8],
            text_ids: vec![vec![3, 8], vec![0, 0]],
        })
    }

    /// Parameters with every entry (gates and output projection included)
    /// drawn at random so that all paths carry gradient.
    pub fn params(&self, seed: u64) -> Result<ModelParams, ModelError> {
        let p = ModelParams::init(&self.config, Precision::F64, seed)?;
        p.randomize(0.4, seed.wrapping_add(1))?;
        Ok(p)
    }

    /// Mean squared error between the prediction and a fixed target.
    pub fn loss(&self, params: &ModelParams, ctx: &BatchContext) -> Result<Tensor, ModelError> {
        let lv = ctx.video_len();
        let dv = self.config.video_token_dim;
        let x = Tensor::from_slice(&self.x_t, (2, lv, dv), params.device())?
            .to_dtype(params.dtype())?;
        let target = Tensor::from_slice(&self.target, (2, lv, dv), params.device())?
            .to_dtype(params.dtype())?;
        let pred = model_forward(
            params,
            ModelInput {
                x_t: &x,
                t: &self.t,
                text_ids: &self.text_ids,
            },
            ctx,
        )?;
        Ok((pred - target)?.sqr()?.mean_all()?)
    }
}
