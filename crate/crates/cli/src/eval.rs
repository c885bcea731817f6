//! `eval`: scores generated videos against ground-truth cases paired by id.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fulldit::formats::load_tensor;
use fulldit::synthbench::{
    read_case, score_case, CaseScores, Category, CategoryReport, MetricMeans, SuiteIndex,
    ToyWorldSpec,
};
use ndarray::Ix4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataManifest, MANIFEST_FILE};
use crate::sample::VIDEO_FILE;
use crate::{create_dir, read_json, write_json, CliError};

pub const EVAL_REPORT: &str = "eval.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// One row per case, sorted by id.
    pub cases: Vec<CaseScores>,
    /// Per-category means when the ground truth is a benchmark suite.
    pub categories: Vec<CategoryReport>,
    pub overall: MetricMeans,
}

/// Case directories directly under `root` or one level down, keyed by
/// directory name, that contain `marker`.
fn find_cases(root: &Path, marker: &str) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let mut found = BTreeMap::new();
    let visit = |dir: &Path,
                 depth: usize,
                 found: &mut BTreeMap<String, PathBuf>|
     -> Result<Vec<PathBuf>, CliError> {
        let mut sub = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(CliError::io(dir))? {
            let path = entry.map_err(CliError::io(dir))?.path();
            if !path.is_dir() {
                continue;
            }
            if path.join(marker).is_file() {
                let id = path
                    .file_name()
                    .expect("directory entry has a name")
                    .to_string_lossy()
                    .into_owned();
                if let Some(prev) = found.insert(id.clone(), path.clone()) {
                    return Err(CliError::InvalidConfig(format!(
                        "case id '{id}' appears twice: {} and {}",
                        prev.display(),
                        path.display()
                    )));
                }
            } else if depth == 0 {
                sub.push(path);
            }
        }
        Ok(sub)
    };
    for dir in visit(root, 0, &mut found)? {
        visit(&dir, 1, &mut found)?;
    }
    Ok(found)
}

/// The world of a ground-truth directory: from its suite index or data
/// manifest, else the fallback.
fn world_of(
    gt_dir: &Path,
    fallback: &ToyWorldSpec,
) -> Result<(ToyWorldSpec, BTreeMap<String, Category>), CliError> {
    let suite = gt_dir.join("suite.json");
    if suite.is_file() {
        let index: SuiteIndex = read_json(&suite)?;
        let cats = index
            .categories
            .iter()
            .flat_map(|c| c.cases.iter().map(move |id| (id.clone(), c.category)))
            .collect();
        return Ok((index.spec, cats));
    }
    let manifest = gt_dir.join(MANIFEST_FILE);
    if manifest.is_file() {
        let m: DataManifest = read_json(&manifest)?;
        return Ok((m.spec, BTreeMap::new()));
    }
    Ok((fallback.clone(), BTreeMap::new()))
}

/// Pairs `<gen>/…/<id>/video.tnsr` with `<gt>/…/<id>/meta.json`, scores
/// every pair, and writes `<out>/eval.json` when `out` is given.
pub fn cmd_eval(
    world: &ToyWorldSpec,
    gen_dir: &Path,
    gt_dir: &Path,
    out: Option<&Path>,
) -> Result<EvalReport, CliError> {
    let (spec, categories) = world_of(gt_dir, world)?;
    let gen = find_cases(gen_dir, VIDEO_FILE)?;
    let gt = find_cases(gt_dir, "meta.json")?;
    let pairing = |id: &String, present: &Path, missing: &Path| CliError::Pairing {
        id: id.clone(),
        present: present.display().to_string(),
        missing: missing.display().to_string(),
    };
    if let Some(id) = gt.keys().find(|id| !gen.contains_key(*id)) {
        return Err(pairing(id, gt_dir, gen_dir));
    }
    if let Some(id) = gen.keys().find(|id| !gt.contains_key(*id)) {
        return Err(pairing(id, gen_dir, gt_dir));
    }
    let cases: Vec<CaseScores> = gt
        .par_iter()
        .map(|(id, gt_path)| {
            let (truth, _) = read_case(gt_path)?;
            let path = gen[id].join(VIDEO_FILE);
            let video = load_tensor(&path)?
                .into_dimensionality::<Ix4>()
                .map_err(|e| CliError::InvalidConfig(format!("{}: {e}", path.display())))?;
            Ok(score_case(
                &spec,
                id,
                categories.get(id).copied(),
                &video,
                &truth,
            )?)
        })
        .collect::<Result<_, CliError>>()?;
    let per_category = Category::ALL
        .iter()
        .filter_map(|&category| {
            let rows: Vec<&CaseScores> = cases
                .iter()
                .filter(|c| c.category == Some(category))
                .collect();
            (!rows.is_empty()).then(|| CategoryReport {
                category,
                conditions: category.conditions(),
                means: MetricMeans::of(rows),
            })
        })
        .collect();
    let report = EvalReport {
        overall: MetricMeans::of(&cases),
        categories: per_category,
        cases,
    };
    if let Some(out) = out {
        create_dir(out)?;
        write_json(&out.join(EVAL_REPORT), &report)?;
    }
    Ok(report)
}
