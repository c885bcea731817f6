//! The training loop: stage walk, mixture sampling, dropout, flow-matching
//! loss on video tokens, Adam, per-step log records and stage checkpoints.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use candle_core::Tensor;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::dropout::{apply_dropout, DropoutPolicy};
use super::plan::{stage_schedule, TrainStagePlan};
use super::CurriculumError;
use crate::diffusion::{fm_loss_tensor, FlowConfig};
use crate::formats::{load_checkpoint, save_checkpoint};
use crate::model::{model_forward, BatchContext, ModelConfig, ModelInput, ModelParams, Precision};
use crate::synthbench::case_seed;
use crate::tokenizer::{ConditionSet, ConditionedTokens};

/// Name of the JSON-lines metrics log inside the output directory.
pub const LOG_FILE: &str = "train.jsonl";
const STEP_STREAM: u64 = 0x7472_6169_6e;

/// A training example: every annotated condition is present in `tokens`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub tokens: ConditionedTokens,
    pub split: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRecord {
    pub step: usize,
    pub stage: String,
    pub loss: f64,
    pub lr: f64,
    pub enabled_conditions: ConditionSet,
}

/// Where to pick up an interrupted run.
#[derive(Debug, Clone)]
pub struct ResumeState {
    /// Number of steps already taken.
    pub step: usize,
    pub adam: Adam,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub flow: FlowConfig,
    pub dropout: DropoutPolicy,
    pub seed: u64,
    /// Directory for the log and checkpoints; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    /// Extra checkpoint every this many steps (0: stage ends only).
    pub checkpoint_every: usize,
    pub resume: Option<ResumeState>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Records of the steps run by this call.
    pub records: Vec<TrainRecord>,
    pub checkpoints: Vec<PathBuf>,
    pub adam: Adam,
}

/// `stage-<k>-step-<n>.fdit` with 1-based stage `k` and `n` steps completed.
pub fn checkpoint_name(stage: usize, step: usize) -> String {
    format!("stage-{stage}-step-{step}.fdit")
}

/// Parses `(stage, step)` back out of a checkpoint file name.
pub fn parse_checkpoint_name(path: &Path) -> Option<(usize, usize)> {
    let name = path.file_name()?.to_str()?;
    let rest = name.strip_prefix("stage-")?.strip_suffix(".fdit")?;
    let (k, n) = rest.split_once("-step-")?;
    Some((k.parse().ok()?, n.parse().ok()?))
}

fn optimizer_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("adam.fdit")
}

/// Loads a checkpoint written by [`train`] and its optimizer state.
pub fn load_resume(
    ckpt: &Path,
    cfg: &ModelConfig,
    precision: Precision,
) -> Result<(ModelParams, ResumeState), CurriculumError> {
    let (_, step) = parse_checkpoint_name(ckpt).ok_or_else(|| {
        CurriculumError::InvalidPlan(format!(
            "{} is not named stage-<k>-step-<n>.fdit",
            ckpt.display()
        ))
    })?;
    let params = ModelParams::from_named_tensors(cfg, precision, &load_checkpoint(ckpt)?)?;
    let opt = optimizer_path(ckpt);
    let adam = if opt.exists() {
        Adam::from_named_tensors(&load_checkpoint(&opt)?, &params)?
    } else {
        log::warn!(
            "no optimizer state next to {}; moments restart from zero",
            ckpt.display()
        );
        Adam::default()
    };
    Ok((params, ResumeState { step, adam }))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CurriculumError + '_ {
    move |e| CurriculumError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Opens the log for this run: truncated on a fresh start, cut back to the
/// records before the resume step otherwise.
fn open_log(dir: &Path, start: usize) -> Result<fs::File, CurriculumError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(LOG_FILE);
    let mut kept = Vec::new();
    if start > 0 && path.exists() {
        let f = fs::File::open(&path).map_err(io_err(&path))?;
        for line in BufReader::new(f).lines() {
            let line = line.map_err(io_err(&path))?;
            if let Ok(r) = serde_json::from_str::<TrainRecord>(&line) {
                if r.step < start {
                    kept.push(line);
                }
            }
        }
    }
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    for line in kept {
        writeln!(f, "{line}").map_err(io_err(&path))?;
    }
    Ok(f)
}

/// Reads a metrics log back.
pub fn read_log(path: &Path) -> Result<Vec<TrainRecord>, CurriculumError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    BufReader::new(f)
        .lines()
        .map(|l| {
            let l = l.map_err(io_err(path))?;
            serde_json::from_str(&l).map_err(|e| CurriculumError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Draws a flow-matching batch: `(x_t, target, t)` with stratified `t`.
fn flow_batch(
    x1: &[f32],
    batch: usize,
    flow: &FlowConfig,
    rng: &mut impl Rng,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let per = x1.len() / batch;
    let t: Vec<f64> = (0..batch)
        .map(|b| (b as f64 + rng.random::<f64>()) / batch as f64)
        .collect();
    let mut xt = Vec::with_capacity(x1.len());
    let mut target = Vec::with_capacity(x1.len());
    let keep = 1.0 - flow.sigma_min;
    for (i, &v) in x1.iter().enumerate() {
        let x0: f64 = StandardNormal.sample(rng);
        let tb = t[i / per];
        xt.push(tb * v as f64 + (1.0 - keep * tb) * x0);
        target.push(v as f64 - keep * x0);
    }
    (xt, target, t)
}

/// Runs (or continues) the plan, updating `params` in place.
pub fn train(
    plan: &TrainStagePlan,
    params: &ModelParams,
    dataset: &[TrainExample],
    opts: &TrainOptions,
) -> Result<TrainOutcome, CurriculumError> {
    plan.validate()?;
    opts.dropout.validate()?;
    opts.flow.validate()?;
    // Per-stage sampling distributions; starvation is detected before any step.
    let samplers = plan
        .stages
        .iter()
        .map(|s| {
            let w: Vec<f64> = dataset
                .iter()
                .map(|e| s.mixture.get(&e.split).copied().unwrap_or(0.0))
                .collect();
            WeightedIndex::new(&w).map_err(|_| CurriculumError::DataStarvation {
                stage: s.name.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let video_dim = params.config().video_token_dim;
    if let Some(bad) = dataset.iter().find(|e| e.tokens.video.dim != video_dim) {
        return Err(CurriculumError::InvalidPlan(format!(
            "dataset video tokens have dim {} but the model expects {video_dim}",
            bad.tokens.video.dim
        )));
    }

    let (start, mut adam) = match &opts.resume {
        Some(r) => (r.step, r.adam.clone()),
        None => (0, Adam::default()),
    };
    let mut log = match &opts.out_dir {
        Some(dir) => Some(open_log(dir, start)?),
        None => None,
    };
    let mut records = Vec::new();
    let mut checkpoints = Vec::new();
    let b = plan.batch_size;

    for (step, k, enabled) in stage_schedule(plan)?.skip(start) {
        let stage = &plan.stages[k];
        let lr = plan.learning_rate * stage.lr_scale;
        let mut rng = ChaCha8Rng::seed_from_u64(case_seed(opts.seed, STEP_STREAM, step as u64));
        let picked: Vec<ConditionedTokens> = (0..b)
            .map(|_| {
                dataset[samplers[k].sample(&mut rng)]
                    .tokens
                    .restricted(enabled)
            })
            .collect();
        let items = apply_dropout(&picked, &opts.dropout, &mut rng);
        let seqs = items
            .iter()
            .map(|it| it.assemble(None))
            .collect::<Result<Vec<_>, _>>()?;
        let ctx = BatchContext::new(&seqs, params)?;
        let x1: Vec<f32> = items
            .iter()
            .flat_map(|it| it.video.features.iter().copied())
            .collect();
        let (xt, target, t) = flow_batch(&x1, b, &opts.flow, &mut rng);
        let shape = (b, ctx.video_len(), video_dim);
        let dev = params.device();
        let xt = Tensor::from_vec(xt, shape, dev)?.to_dtype(params.dtype())?;
        let target = Tensor::from_vec(target, shape, dev)?.to_dtype(params.dtype())?;
        let text: Vec<Vec<u32>> = items.iter().map(|it| it.text.clone()).collect();
        let pred = model_forward(
            params,
            ModelInput {
                x_t: &xt,
                t: &t,
                text_ids: &text,
            },
            &ctx,
        )?;
        let loss_t = fm_loss_tensor(&pred, &target)?;
        let loss = loss_t
            .to_dtype(candle_core::DType::F64)?
            .to_scalar::<f64>()?;
        if !loss.is_finite() {
            return Err(CurriculumError::Diverged { step });
        }
        let grads = loss_t.backward()?;
        adam.step(params, &grads, lr)?;

        let record = TrainRecord {
            step,
            stage: stage.name.clone(),
            loss,
            lr,
            enabled_conditions: enabled,
        };
        log::debug!("step {step} stage {} loss {loss:.5}", stage.name);
        if let (Some(f), Some(dir)) = (log.as_mut(), &opts.out_dir) {
            let line = serde_json::to_string(&record).map_err(|e| CurriculumError::Io {
                path: dir.join(LOG_FILE).display().to_string(),
                message: e.to_string(),
            })?;
            writeln!(f, "{line}").map_err(io_err(&dir.join(LOG_FILE)))?;
        }
        records.push(record);

        let done = step + 1;
        let stage_end = done == plan.stage_start(k) + stage.steps;
        let periodic = opts.checkpoint_every > 0 && done % opts.checkpoint_every == 0;
        if let Some(dir) = &opts.out_dir {
            if stage_end || periodic {
                let path = dir.join(checkpoint_name(k + 1, done));
                save_checkpoint(&path, &params.to_named_tensors()?)?;
                save_checkpoint(&optimizer_path(&path), &adam.to_named_tensors()?)?;
                if let Some(f) = log.as_mut() {
                    f.flush().map_err(io_err(dir))?;
                }
                checkpoints.push(path);
            }
        }
    }
    Ok(TrainOutcome {
        records,
        checkpoints,
        adam,
    })
}
