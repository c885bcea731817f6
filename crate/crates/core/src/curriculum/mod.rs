//! Staged multi-condition training: the condition order, per-stage budgets
//! and data mixtures, condition dropout, and the optimizer loop.

mod adam;
mod dropout;
mod plan;
mod train;

pub use adam::Adam;
pub use dropout::{apply_dropout, DropoutPolicy};
pub use plan::{stage_schedule, Stage, TrainStagePlan, MAIN_SPLIT, QUALITY_SPLIT};
pub use train::{
    checkpoint_name, load_resume, parse_checkpoint_name, read_log, train, ResumeState,
    TrainExample, TrainOptions, TrainOutcome, TrainRecord, LOG_FILE,
};

use crate::diffusion::DiffusionError;
use crate::formats::FormatError;
use crate::model::ModelError;
use crate::tokenizer::TokenizerError;

#[derive(Debug, thiserror::Error)]
pub enum CurriculumError {
    #[error("stage plan has no stages")]
    EmptyPlan,
    #[error("invalid stage plan: {0}")]
    InvalidPlan(String),
    #[error("stage '{stage}' has no eligible samples in its mixture")]
    DataStarvation { stage: String },
    #[error("loss became non-finite at step {step}")]
    Diverged { step: usize },
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

impl From<candle_core::Error> for CurriculumError {
    fn from(e: candle_core::Error) -> Self {
        CurriculumError::Model(ModelError::Backend(e))
    }
}
