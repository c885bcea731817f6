//! Pipeline commands over the desk-scale FullDiT: generate toy data, train
//! with the condition curriculum, sample, evaluate, and benchmark. Every
//! command is a library function so tests can drive it without a process.

pub mod bench;
pub mod config;
pub mod data;
pub mod eval;
pub mod ppm;
pub mod sample;
pub mod train;

use std::path::Path;

pub use bench::{cmd_bench, GeneratorChoice, BENCH_REPORT, VIDEOS_DIR};
pub use config::{
    ArchConfig, BenchConfig, DataConfig, PathsConfig, RunConfig, SampleConfig, TokenizerConfig,
    TrainConfig,
};
pub use data::{cmd_gen_data, read_manifest, DataManifest, ManifestEntry, MANIFEST_FILE};
pub use eval::{cmd_eval, EvalReport, EVAL_REPORT};
pub use ppm::frame_grid_ppm;
pub use sample::{cmd_sample, load_params, FRAMES_FILE, VIDEO_FILE};
pub use train::{cmd_train, load_dataset, CONFIG_FILE};

use fulldit::curriculum::CurriculumError;
use fulldit::diffusion::DiffusionError;
use fulldit::formats::FormatError;
use fulldit::model::ModelError;
use fulldit::synthbench::SynthError;
use fulldit::tokenizer::{Condition, TokenizerError};

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "FULLDIT_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("case '{id}' is in {present} but not in {missing}")]
    Pairing {
        id: String,
        present: String,
        missing: String,
    },
    #[error("condition '{}' is required but was not provided", .0.name())]
    MissingCondition(Condition),
    #[error(transparent)]
    Synth(SynthError),
    #[error(transparent)]
    Curriculum(CurriculumError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

impl CliError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |e| CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io { path, message } => CliError::Io { path, message },
            SynthError::Config(m) => CliError::InvalidConfig(m),
            other => CliError::Synth(other),
        }
    }
}

impl From<CurriculumError> for CliError {
    fn from(e: CurriculumError) -> Self {
        match e {
            CurriculumError::Io { path, message } => CliError::Io { path, message },
            CurriculumError::InvalidPlan(m) => CliError::InvalidConfig(m),
            CurriculumError::EmptyPlan => CliError::InvalidConfig(e.to_string()),
            other => CliError::Curriculum(other),
        }
    }
}

/// Parses a `FULLDIT_THREADS` value: unset or empty means no cap.
pub fn parse_threads(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::InvalidConfig(format!(
                "{THREADS_ENV}={v} is not a positive integer"
            ))),
        },
    }
}

/// Caps the global worker pool from `FULLDIT_THREADS`, if set.
pub fn init_threads() -> Result<Option<usize>, CliError> {
    let n = parse_threads(std::env::var(THREADS_ENV).ok().as_deref())?;
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::InvalidConfig(format!("{THREADS_ENV}: {e}")))?;
    }
    Ok(n)
}

pub(crate) fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))
}

pub(crate) fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub(crate) fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(CliError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_cap_parsing() {
        assert_eq!(parse_threads(None).unwrap(), None);
        assert_eq!(parse_threads(Some("")).unwrap(), None);
        assert_eq!(parse_threads(Some(" 3 ")).unwrap(), Some(3));
        assert!(parse_threads(Some("0")).is_err());
        assert!(parse_threads(Some("many")).is_err());
    }
}
