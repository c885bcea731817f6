//! `gen-data`: toy training samples in the case layout plus a manifest.

use std::path::Path;

use fulldit::curriculum::{MAIN_SPLIT, QUALITY_SPLIT};
use fulldit::synthbench::{
    case_seed, sample_seeded, write_case, CaseMeta, IdentityStyle, ToySample, ToyWorldSpec,
};
use fulldit::tokenizer::ConditionSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{create_dir, read_json, write_json, CliError};

pub const MANIFEST_FILE: &str = "manifest.json";
const DATA_STREAM: u64 = 0x6461_7461;

/// `manifest.json` of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataManifest {
    pub spec: ToyWorldSpec,
    pub seed: u64,
    pub samples: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub seed: u64,
    /// Training split: segmented identity references form the quality split.
    pub split: String,
}

pub fn split_of(sample: &ToySample) -> &'static str {
    match sample.labels.identity_style {
        IdentityStyle::Segmented => QUALITY_SPLIT,
        IdentityStyle::Raw => MAIN_SPLIT,
    }
}

/// Writes `cfg.data.samples` samples to `<out>/<id>/` and `<out>/manifest.json`.
pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<DataManifest, CliError> {
    cfg.validate()?;
    create_dir(out)?;
    let entries = (0..cfg.data.samples)
        .into_par_iter()
        .map(|i| {
            let seed = case_seed(cfg.seed, DATA_STREAM, i as u64);
            let sample = sample_seeded(&cfg.world, seed)?;
            let id = format!("sample-{i:05}");
            let meta = CaseMeta {
                id: id.clone(),
                seed,
                conditions: ConditionSet::FULL,
                labels: sample.labels.clone(),
                centers: sample.centers.clone(),
                orientations: sample.orientations.clone(),
            };
            write_case(&out.join(&id), &sample, &meta)?;
            Ok(ManifestEntry {
                id,
                seed,
                split: split_of(&sample).to_string(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let manifest = DataManifest {
        spec: cfg.world.clone(),
        seed: cfg.seed,
        samples: entries,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    log::info!(
        "wrote {} samples to {}",
        manifest.samples.len(),
        out.display()
    );
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DataManifest, CliError> {
    read_json(&dir.join(MANIFEST_FILE))
}
