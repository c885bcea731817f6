//! A labeled synthetic world in which every condition determines pixels
//! analytically, plus a seven-category benchmark and its metric suite.

mod bench;
mod encode;
mod estimate;
mod io;
mod world;

pub use bench::{
    build_bench, case_seed, run_bench, score_case, BenchCase, BenchReport, BenchSuite, CaseScores,
    Category, CategoryReport, Generator, MetricMeans, ModelGenerator, OracleGenerator,
};
pub use encode::{
    decode_video, encode_conditions, encode_sample, from_model_range, generate_videos,
    to_model_range, video_placeholder, ConditionInputs,
};
pub use estimate::{
    dynamic_degree, estimate_square, eval_camera_toy, eval_depth_toy, eval_identity_toy,
    eval_quality_toy, smoothness, SquareEstimate,
};
pub use io::{
    read_case, read_conditions, read_suite, write_case, write_suite, CaseMeta, SuiteIndex,
};
pub use world::{
    project_anchor, render_frames, render_identity, render_sample, render_with_trajectory,
    sample_labels, sample_seeded, IdentityStyle, LabelRanges, Motion, Palette, ToyLabels,
    ToySample, ToyWorldSpec, NEUTRAL_GRAY, SQUARE_DEPTH, TEXT_WORDS,
};

use crate::diffusion::DiffusionError;
use crate::formats::FormatError;
use crate::geometry::GeometryError;
use crate::tokenizer::TokenizerError;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid world configuration: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("square center leaves the canvas in frame {frame}")]
    OutOfFrame { frame: usize },
    #[error("no square found in frame {frame}")]
    NotFound { frame: usize },
    #[error("metric needs at least two frames")]
    NeedTwoFrames,
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}
