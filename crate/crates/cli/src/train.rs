//! `train`: runs the curriculum over a generated dataset.

use std::path::Path;

use fulldit::curriculum::{load_resume, train, TrainExample, TrainOptions, TrainOutcome};
use fulldit::model::ModelParams;
use fulldit::synthbench::{encode_sample, read_case};
use fulldit::tokenizer::ConditionSet;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::data::read_manifest;
use crate::{create_dir, CliError};

/// The resolved configuration, written next to the checkpoints.
pub const CONFIG_FILE: &str = "config.json";

/// Loads every manifest sample with all of its annotations.
pub fn load_dataset(cfg: &RunConfig, data_dir: &Path) -> Result<Vec<TrainExample>, CliError> {
    let manifest = read_manifest(data_dir)?;
    if manifest.spec != cfg.world {
        return Err(CliError::InvalidConfig(format!(
            "{} was generated for a different world than the configured one",
            data_dir.display()
        )));
    }
    let tok = cfg.tokenizer()?;
    manifest
        .samples
        .par_iter()
        .map(|e| {
            let (sample, _) = read_case(&data_dir.join(&e.id))?;
            Ok(TrainExample {
                tokens: encode_sample(&tok, &sample, ConditionSet::FULL)?,
                split: e.split.clone(),
            })
        })
        .collect()
}

/// Trains from scratch, or from `resume` (a `stage-<k>-step-<n>.fdit`
/// checkpoint written by an earlier run of the same configuration).
pub fn cmd_train(
    cfg: &RunConfig,
    data_dir: &Path,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let dataset = load_dataset(cfg, data_dir)?;
    let tok = cfg.tokenizer()?;
    let model_cfg = cfg.model_config(&tok);
    let (params, resume) = match resume {
        Some(ckpt) => {
            let (p, state) = load_resume(ckpt, &model_cfg, cfg.model.precision)?;
            (p, Some(state))
        }
        None => (
            ModelParams::init(&model_cfg, cfg.model.precision, cfg.seed)?,
            None,
        ),
    };
    create_dir(out_dir)?;
    cfg.save(&out_dir.join(CONFIG_FILE))?;
    log::info!(
        "training {} parameters on {} samples for {} steps",
        params.num_params(),
        dataset.len(),
        cfg.plan.total_steps()
    );
    let opts = TrainOptions {
        flow: cfg.flow,
        dropout: cfg.dropout,
        seed: cfg.seed,
        out_dir: Some(out_dir.to_path_buf()),
        checkpoint_every: cfg.train.checkpoint_every,
        resume,
    };
    Ok(train(&cfg.plan, &params, &dataset, &opts)?)
}
