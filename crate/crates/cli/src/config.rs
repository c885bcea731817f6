//! The run configuration: one JSON document covering the world, tokenizer,
//! model, flow, curriculum, dropout, data, sampling, benchmark and paths.
//!
//! Every key is optional. A missing top-level section takes the default
//! listed on its field; inside a section, missing keys take that section
//! type's own defaults. Unknown keys are rejected at every level.

use std::fs;
use std::path::{Path, PathBuf};

use fulldit::curriculum::{DropoutPolicy, TrainStagePlan};
use fulldit::diffusion::FlowConfig;
use fulldit::model::{ModelConfig, Precision};
use fulldit::synthbench::ToyWorldSpec;
use fulldit::tokenizer::{CodecConfig, ConditionSet, Tokenizer};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed (default 0). Data, initialization, training and sampling
    /// streams all derive from it.
    pub seed: u64,
    /// Default: 16×16 frames, 3 frames, 4 px square.
    pub world: ToyWorldSpec,
    /// Default: the unit (identity) codec.
    pub codec: CodecConfig,
    pub tokenizer: TokenizerConfig,
    pub model: ArchConfig,
    /// Default: σ_min 1e-5, 50 Euler steps, guidance scale 5.
    pub flow: FlowConfig,
    /// Default: camera → +identity → +depth at 4:2:2 of 4000 steps, a
    /// quality stage of 250 steps at lr/10, learning rate 1e-5, batch 8.
    pub plan: TrainStagePlan,
    /// Default: 0.1 per condition and 0.1 null text.
    pub dropout: DropoutPolicy,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub sample: SampleConfig,
    pub bench: BenchConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            world: ToyWorldSpec::default(),
            codec: CodecConfig::unit(),
            tokenizer: TokenizerConfig::default(),
            model: ArchConfig::default(),
            flow: FlowConfig::default(),
            plan: TrainStagePlan::default_for(4000),
            dropout: DropoutPolicy::default(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            sample: SampleConfig::default(),
            bench: BenchConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

/// Patch sizes of the token grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerConfig {
    /// Spatial patch over the latent grid (default 4).
    pub latent_patch: usize,
    /// Spatial patch over the Plücker map (default 16: one token per frame).
    pub camera_patch: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            latent_patch: 4,
            camera_patch: 16,
        }
    }
}

/// Backbone shape. Token widths and the text vocabulary follow from the
/// world and tokenizer and are not configured here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    /// Default 64.
    pub d_model: usize,
    /// Default 4.
    pub n_heads: usize,
    /// Default 2.
    pub n_layers: usize,
    /// Default 256.
    pub d_ff: usize,
    /// Default 32.
    pub text_dim: usize,
    /// Default 100.
    pub rope_base: f64,
    /// Default 64.
    pub time_freq_dim: usize,
    /// Default f32.
    pub precision: Precision,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 256,
            text_dim: 32,
            rope_base: 100.0,
            time_freq_dim: 64,
            precision: Precision::F32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Samples written by gen-data (default 2000).
    pub samples: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { samples: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Extra checkpoint every this many steps; 0 (default) writes stage ends only.
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    /// Conditions the sample command refuses to run without (default none).
    pub required: ConditionSet,
    /// Videos generated per model batch (default 50).
    pub batch_size: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            required: ConditionSet::EMPTY,
            batch_size: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    /// Default 50.
    pub cases_per_category: usize,
    /// Seed of the held-out suite (default 1; distinct from the data streams).
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            cases_per_category: 50,
            seed: 1,
        }
    }
}

/// Locations used when a command is not given an explicit path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Default `data`.
    pub data_dir: PathBuf,
    /// Default `run`.
    pub run_dir: PathBuf,
    /// Default `suite`.
    pub suite_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            run_dir: "run".into(),
            suite_dir: "suite".into(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("configuration serializes");
        text.push('\n');
        text
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::InvalidConfig(m) => {
                CliError::InvalidConfig(format!("{}: {m}", path.display()))
            }
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.to_json()).map_err(CliError::io(path))
    }

    /// Checks every section and their mutual consistency.
    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |e: &dyn std::fmt::Display| CliError::InvalidConfig(e.to_string());
        self.world.validate().map_err(|e| invalid(&e))?;
        self.plan.validate().map_err(|e| invalid(&e))?;
        self.dropout.validate().map_err(|e| invalid(&e))?;
        self.flow.validate().map_err(|e| invalid(&e))?;
        let tok = self.tokenizer()?;
        self.model_config(&tok)
            .validate()
            .map_err(|e| invalid(&e))?;
        tok.codec()
            .config()
            .latent_shape([self.world.frames, self.world.height, self.world.width, 3])
            .map_err(|e| invalid(&e))?;
        let latent = tok.pixels_per_video_token();
        if !self.world.height.is_multiple_of(latent) || !self.world.width.is_multiple_of(latent) {
            return Err(CliError::InvalidConfig(format!(
                "{}x{} frames do not split into {latent}-pixel video tokens",
                self.world.height, self.world.width
            )));
        }
        let cp = self.tokenizer.camera_patch;
        if !self.world.height.is_multiple_of(cp) || !self.world.width.is_multiple_of(cp) {
            return Err(CliError::InvalidConfig(format!(
                "{}x{} frames do not split into camera patches of {cp}",
                self.world.height, self.world.width
            )));
        }
        if self.sample.batch_size == 0 {
            return Err(CliError::InvalidConfig(
                "sample.batch_size must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn tokenizer(&self) -> Result<Tokenizer, CliError> {
        Tokenizer::with_patches(
            self.codec,
            self.tokenizer.latent_patch,
            self.tokenizer.camera_patch,
        )
        .map_err(|e| CliError::InvalidConfig(e.to_string()))
    }

    /// The full model configuration for this world and tokenizer.
    pub fn model_config(&self, tok: &Tokenizer) -> ModelConfig {
        let a = &self.model;
        ModelConfig {
            d_model: a.d_model,
            n_heads: a.n_heads,
            n_layers: a.n_layers,
            d_ff: a.d_ff,
            text_vocab: self.world.text_vocab(),
            text_dim: a.text_dim,
            rope_base: a.rope_base,
            time_freq_dim: a.time_freq_dim,
            video_token_dim: tok.latent_token_dim(),
            camera_token_dim: tok.camera_token_dim(),
        }
    }
}
