//! `bench`: builds the 7-category suite if needed and scores a generator.

use std::path::{Path, PathBuf};

use fulldit::formats::save_tensor;
use fulldit::synthbench::{
    build_bench, read_suite, run_bench, write_suite, BenchCase, BenchReport, Generator,
    ModelGenerator, OracleGenerator, SynthError, ToyWorldSpec,
};
use fulldit::tokenizer::{ConditionSet, VideoTensor};

use crate::config::RunConfig;
use crate::sample::{load_params, VIDEO_FILE};
use crate::{create_dir, write_json, CliError};

pub const BENCH_REPORT: &str = "bench.json";
/// Generated videos are kept under `<out>/videos/<id>/video.tnsr`.
pub const VIDEOS_DIR: &str = "videos";

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorChoice {
    /// Ground-truth renders: the harness self-test.
    Oracle,
    Checkpoint(PathBuf),
}

/// Passes generation through and keeps every video with its case id.
struct Recording<'a> {
    inner: &'a mut dyn Generator,
    videos: Vec<(String, VideoTensor)>,
}

impl Generator for Recording<'_> {
    fn generate(
        &mut self,
        spec: &ToyWorldSpec,
        cases: &[&BenchCase],
        conditions: ConditionSet,
    ) -> Result<Vec<VideoTensor>, SynthError> {
        let out = self.inner.generate(spec, cases, conditions)?;
        self.videos
            .extend(cases.iter().map(|c| c.id.clone()).zip(out.iter().cloned()));
        Ok(out)
    }
}

/// Runs the benchmark on the suite in `suite_dir` (built from the
/// configuration and written there first when `suite.json` is absent) and
/// writes `<out>/bench.json` plus the generated videos.
pub fn cmd_bench(
    cfg: &RunConfig,
    generator: &GeneratorChoice,
    suite_dir: &Path,
    out: &Path,
) -> Result<BenchReport, CliError> {
    cfg.validate()?;
    let suite = if suite_dir.join("suite.json").is_file() {
        read_suite(suite_dir)?
    } else {
        let suite = build_bench(&cfg.world, cfg.bench.cases_per_category, cfg.bench.seed)?;
        write_suite(suite_dir, &suite)?;
        log::info!(
            "built a {}-case suite in {}",
            suite.cases.len(),
            suite_dir.display()
        );
        suite
    };
    if suite.spec != cfg.world {
        return Err(CliError::InvalidConfig(format!(
            "suite {} was built for a different world than the configured one",
            suite_dir.display()
        )));
    }
    let mut oracle = OracleGenerator;
    let params;
    let mut model;
    let inner: &mut dyn Generator = match generator {
        GeneratorChoice::Oracle => &mut oracle,
        GeneratorChoice::Checkpoint(path) => {
            params = load_params(cfg, path)?;
            model = ModelGenerator {
                params: &params,
                tokenizer: cfg.tokenizer()?,
                flow: cfg.flow,
                seed: cfg.seed,
                batch_size: cfg.sample.batch_size,
            };
            &mut model
        }
    };
    let mut recording = Recording {
        inner,
        videos: Vec::new(),
    };
    let report = run_bench(&suite, &mut recording)?;
    create_dir(out)?;
    for (id, video) in &recording.videos {
        let dir = out.join(VIDEOS_DIR).join(id);
        create_dir(&dir)?;
        save_tensor(&dir.join(VIDEO_FILE), &video.clone().into_dyn())?;
    }
    write_json(&out.join(BENCH_REPORT), &report)?;
    Ok(report)
}
