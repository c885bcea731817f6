//! On-disk layout of cases and suites:
//!
//! ```text
//! <suite>/suite.json
//! <suite>/<category>/<case-id>/{video.tnsr, depth.tnsr, identity-<j>.tnsr,
//!                               camera.txt, text.json, meta.json}
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array3, Array4, Ix3, Ix4};
use serde::{Deserialize, Serialize};

use super::bench::{BenchCase, BenchSuite, Category};
use super::encode::ConditionInputs;
use super::world::{ToyLabels, ToySample, ToyWorldSpec};
use super::SynthError;
use crate::formats::{load_tensor, save_tensor};
use crate::geometry::{parse_trajectory, serialize_trajectory, TrajectoryFormat};
use crate::tokenizer::ConditionSet;

/// `meta.json` of a case directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseMeta {
    pub id: String,
    pub seed: u64,
    /// Conditions the case is meant to be generated from.
    pub conditions: ConditionSet,
    pub labels: ToyLabels,
    pub centers: Vec<[f64; 2]>,
    pub orientations: Vec<f64>,
}

/// `suite.json` at the suite root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteIndex {
    pub spec: ToyWorldSpec,
    pub seed: u64,
    pub cases_per_category: usize,
    pub categories: Vec<SuiteCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteCategory {
    pub category: Category,
    pub conditions: ConditionSet,
    pub cases: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |e| SynthError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<(), SynthError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| SynthError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SynthError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| SynthError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Writes every annotation of a sample into `dir` (created if needed).
pub fn write_case(dir: &Path, sample: &ToySample, meta: &CaseMeta) -> Result<(), SynthError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    save_tensor(&dir.join("video.tnsr"), &sample.video.clone().into_dyn())?;
    save_tensor(&dir.join("depth.tnsr"), &sample.depth.clone().into_dyn())?;
    for (j, img) in sample.identities.iter().enumerate() {
        save_tensor(
            &dir.join(format!("identity-{j}.tnsr")),
            &img.clone().into_dyn(),
        )?;
    }
    let format = TrajectoryFormat::pixels(sample.trajectory.width(), sample.trajectory.height());
    let cam = dir.join("camera.txt");
    fs::write(&cam, serialize_trajectory(&sample.trajectory, format)).map_err(io_err(&cam))?;
    write_json(&dir.join("text.json"), &sample.text)?;
    write_json(&dir.join("meta.json"), meta)
}

fn video4(path: &Path) -> Result<Array4<f32>, SynthError> {
    load_tensor(path)?
        .into_dimensionality::<Ix4>()
        .map_err(|e| SynthError::Shape(format!("{}: {e}", path.display())))
}

fn read_identities(dir: &Path) -> Result<Vec<Array3<f32>>, SynthError> {
    let mut identities = Vec::new();
    loop {
        let p = dir.join(format!("identity-{}.tnsr", identities.len()));
        if !p.exists() {
            return Ok(identities);
        }
        let img: Array3<f32> = load_tensor(&p)?
            .into_dimensionality::<Ix3>()
            .map_err(|e| SynthError::Shape(format!("{}: {e}", p.display())))?;
        identities.push(img);
    }
}

pub fn read_case(dir: &Path) -> Result<(ToySample, CaseMeta), SynthError> {
    let meta: CaseMeta = read_json(&dir.join("meta.json"))?;
    let video = video4(&dir.join("video.tnsr"))?;
    let depth = video4(&dir.join("depth.tnsr"))?;
    let identities = read_identities(dir)?;
    let (_, h, w, _) = video.dim();
    let cam = dir.join("camera.txt");
    let text = fs::read_to_string(&cam).map_err(io_err(&cam))?;
    let trajectory = parse_trajectory(&text, TrajectoryFormat::pixels(w, h))?;
    let sample = ToySample {
        labels: meta.labels.clone(),
        video,
        trajectory,
        identities,
        depth,
        text: read_json(&dir.join("text.json"))?,
        centers: meta.centers.clone(),
        orientations: meta.orientations.clone(),
    };
    Ok((sample, meta))
}

/// Loads whichever condition files a directory holds (`camera.txt`,
/// `identity-<j>.tnsr`, `depth.tnsr`, `text.json`); absent files are simply
/// absent conditions.
pub fn read_conditions(dir: &Path, spec: &ToyWorldSpec) -> Result<ConditionInputs, SynthError> {
    if !dir.is_dir() {
        return Err(SynthError::Io {
            path: dir.display().to_string(),
            message: "not a directory".into(),
        });
    }
    let cam = dir.join("camera.txt");
    let trajectory = if cam.exists() {
        let text = fs::read_to_string(&cam).map_err(io_err(&cam))?;
        Some(parse_trajectory(
            &text,
            TrajectoryFormat::pixels(spec.width, spec.height),
        )?)
    } else {
        None
    };
    let depth_path = dir.join("depth.tnsr");
    let depth = if depth_path.exists() {
        Some(video4(&depth_path)?)
    } else {
        None
    };
    let text_path = dir.join("text.json");
    let text = if text_path.exists() {
        read_json(&text_path)?
    } else {
        Vec::new()
    };
    Ok(ConditionInputs {
        trajectory,
        identities: read_identities(dir)?,
        depth,
        text,
    })
}

pub fn write_suite(dir: &Path, suite: &BenchSuite) -> Result<(), SynthError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let categories = Category::ALL
        .iter()
        .map(|&category| SuiteCategory {
            category,
            conditions: category.conditions(),
            cases: suite
                .cases
                .iter()
                .filter(|c| c.category == category)
                .map(|c| c.id.clone())
                .collect(),
        })
        .collect();
    for case in &suite.cases {
        let meta = CaseMeta {
            id: case.id.clone(),
            seed: case.seed,
            conditions: case.category.conditions(),
            labels: case.sample.labels.clone(),
            centers: case.sample.centers.clone(),
            orientations: case.sample.orientations.clone(),
        };
        write_case(
            &dir.join(case.category.name()).join(&case.id),
            &case.sample,
            &meta,
        )?;
    }
    write_json(
        &dir.join("suite.json"),
        &SuiteIndex {
            spec: suite.spec.clone(),
            seed: suite.seed,
            cases_per_category: suite.cases_per_category,
            categories,
        },
    )
}

pub fn read_suite(dir: &Path) -> Result<BenchSuite, SynthError> {
    let index: SuiteIndex = read_json(&dir.join("suite.json"))?;
    let mut cases = Vec::new();
    for cat in &index.categories {
        for id in &cat.cases {
            let (sample, meta) = read_case(&dir.join(cat.category.name()).join(id))?;
            cases.push(BenchCase {
                id: id.clone(),
                category: cat.category,
                seed: meta.seed,
                sample,
            });
        }
    }
    Ok(BenchSuite {
        spec: index.spec,
        seed: index.seed,
        cases_per_category: index.cases_per_category,
        cases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthbench::build_bench;

    fn small() -> ToyWorldSpec {
        ToyWorldSpec {
            height: 16,
            width: 16,
            frames: 3,
            square_side: 4.0,
            focal: 16.0,
            identity_size: 8,
            ..ToyWorldSpec::default()
        }
    }

    #[test]
    fn suite_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let suite = build_bench(&small(), 2, 5).unwrap();
        write_suite(dir.path(), &suite).unwrap();
        let back = read_suite(dir.path()).unwrap();
        assert_eq!(back.spec, suite.spec);
        for (a, b) in back.cases.iter().zip(&suite.cases) {
            assert_eq!(a.sample.labels, b.sample.labels);
            assert_eq!(a.sample.video, b.sample.video);
            assert_eq!(a.sample.depth, b.sample.depth);
            assert_eq!(a.sample.identities, b.sample.identities);
            assert_eq!(a.sample.text, b.sample.text);
            assert_eq!(a.sample.centers, b.sample.centers);
            assert_eq!(a.sample.trajectory, b.sample.trajectory);
        }
        assert_eq!(back, suite);
        for c in Category::ALL {
            assert!(dir.path().join(c.name()).is_dir());
        }
        let case = dir.path().join("camera").join(&suite.cases[0].id);
        for f in [
            "video.tnsr",
            "depth.tnsr",
            "identity-0.tnsr",
            "camera.txt",
            "text.json",
            "meta.json",
        ] {
            assert!(case.join(f).is_file(), "{f}");
        }
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_suite(a.path(), &build_bench(&small(), 2, 11).unwrap()).unwrap();
        write_suite(b.path(), &build_bench(&small(), 2, 11).unwrap()).unwrap();
        let files = |root: &Path| {
            let mut v: Vec<(String, Vec<u8>)> = Vec::new();
            let mut stack = vec![root.to_path_buf()];
            while let Some(d) = stack.pop() {
                for e in fs::read_dir(&d).unwrap() {
                    let p = e.unwrap().path();
                    if p.is_dir() {
                        stack.push(p);
                    } else {
                        v.push((
                            p.strip_prefix(root).unwrap().display().to_string(),
                            fs::read(&p).unwrap(),
                        ));
                    }
                }
            }
            v.sort();
            v
        };
        assert_eq!(files(a.path()), files(b.path()));
    }

    #[test]
    fn missing_case_names_its_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_case(&dir.path().join("nope")).unwrap_err();
        assert!(err.to_string().contains("nope"), "{err}");
    }
}
