//! `sample`: one video from a checkpoint and any subset of conditions.

use std::path::Path;

use fulldit::formats::{load_checkpoint, save_tensor};
use fulldit::model::ModelParams;
use fulldit::synthbench::{encode_conditions, generate_videos, read_conditions};
use fulldit::tokenizer::{ConditionSet, VideoTensor};

use crate::config::RunConfig;
use crate::ppm::frame_grid_ppm;
use crate::{create_dir, CliError};

pub const VIDEO_FILE: &str = "video.tnsr";
pub const FRAMES_FILE: &str = "frames.ppm";

pub fn load_params(cfg: &RunConfig, checkpoint: &Path) -> Result<ModelParams, CliError> {
    let tok = cfg.tokenizer()?;
    Ok(ModelParams::from_named_tensors(
        &cfg.model_config(&tok),
        cfg.model.precision,
        &load_checkpoint(checkpoint)?,
    )?)
}

/// Generates from the conditions found in `conditions_dir` (see
/// [`read_conditions`]), restricted to `use_conditions` when given, and
/// writes `<out>/video.tnsr` and `<out>/frames.ppm`.
pub fn cmd_sample(
    cfg: &RunConfig,
    checkpoint: &Path,
    conditions_dir: &Path,
    use_conditions: Option<ConditionSet>,
    out: &Path,
) -> Result<VideoTensor, CliError> {
    cfg.validate()?;
    let params = load_params(cfg, checkpoint)?;
    let tok = cfg.tokenizer()?;
    let inputs = read_conditions(conditions_dir, &cfg.world)?;
    let available = inputs.available();
    let chosen = use_conditions.unwrap_or(available);
    for c in cfg.sample.required.iter().chain(chosen.iter()) {
        if !available.contains(c) || !chosen.contains(c) {
            return Err(CliError::MissingCondition(c));
        }
    }
    let item = encode_conditions(&tok, &cfg.world, &inputs, chosen)?;
    let video = generate_videos(&params, &tok, &cfg.world, &[item], &cfg.flow, cfg.seed)?
        .pop()
        .expect("one item in, one video out");
    create_dir(out)?;
    save_tensor(&out.join(VIDEO_FILE), &video.clone().into_dyn())?;
    let frames = out.join(FRAMES_FILE);
    std::fs::write(&frames, frame_grid_ppm(&video)).map_err(CliError::io(&frames))?;
    log::info!("sampled from {chosen} into {}", out.display());
    Ok(video)
}
