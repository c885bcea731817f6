//! Every command driven through the library on a tiny world.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use fulldit::curriculum::{read_log, Stage, TrainStagePlan, LOG_FILE, QUALITY_SPLIT};
use fulldit::formats::{load_tensor, save_tensor};
use fulldit::synthbench::{Category, ToyWorldSpec};
use fulldit::tokenizer::{Condition, ConditionSet};
use fulldit_cli::*;

fn tiny() -> RunConfig {
    let mut cfg = RunConfig {
        seed: 3,
        world: ToyWorldSpec {
            height: 8,
            width: 8,
            frames: 2,
            square_side: 3.0,
            focal: 8.0,
            identity_size: 4,
            supersample: 2,
            ..ToyWorldSpec::default()
        },
        ..RunConfig::default()
    };
    cfg.tokenizer = TokenizerConfig {
        latent_patch: 4,
        camera_patch: 8,
    };
    cfg.model = ArchConfig {
        d_model: 16,
        n_heads: 2,
        n_layers: 1,
        d_ff: 32,
        text_dim: 8,
        time_freq_dim: 16,
        ..ArchConfig::default()
    };
    cfg.plan = plan(&[12, 6, 4, 2], 1e-3);
    cfg.data.samples = 12;
    cfg.flow.n_steps = 4;
    cfg.bench.cases_per_category = 2;
    cfg
}

/// The default four-stage shape with the given stage lengths.
fn plan(steps: &[usize; 4], lr: f64) -> TrainStagePlan {
    let mut p = TrainStagePlan::default_for(8);
    for (stage, &n) in p.stages.iter_mut().zip(steps) {
        stage.steps = n;
    }
    p.learning_rate = lr;
    p.batch_size = 4;
    p
}

/// Every file under `dir` with its bytes, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn trained(cfg: &RunConfig, root: &Path) -> PathBuf {
    let data = root.join("data");
    cmd_gen_data(cfg, &data).unwrap();
    let outcome = cmd_train(cfg, &data, &root.join("run"), None).unwrap();
    outcome.checkpoints.last().unwrap().clone()
}

#[test]
fn gen_data_writes_samples_and_manifest() {
    let cfg = RunConfig {
        data: DataConfig { samples: 10 },
        ..tiny()
    };
    let dir = tempfile::tempdir().unwrap();
    let manifest = cmd_gen_data(&cfg, &dir.path().join("a")).unwrap();
    assert_eq!(manifest.samples.len(), 10);
    let dirs = fs::read_dir(dir.path().join("a"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().is_dir())
        .count();
    assert_eq!(dirs, 10);
    assert_eq!(read_manifest(&dir.path().join("a")).unwrap(), manifest);
    let seeds: std::collections::BTreeSet<u64> = manifest.samples.iter().map(|s| s.seed).collect();
    assert_eq!(seeds.len(), 10);

    cmd_gen_data(&cfg, &dir.path().join("b")).unwrap();
    assert_eq!(
        snapshot(&dir.path().join("a")),
        snapshot(&dir.path().join("b"))
    );
}

#[test]
fn gen_data_reports_the_unwritable_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, b"a file, not a directory").unwrap();
    let target = blocker.join("data");
    match cmd_gen_data(&tiny(), &target) {
        Err(CliError::Io { path, .. }) => assert!(path.contains("blocker"), "{path}"),
        other => panic!("expected an I/O error, got {other:?}"),
    }
}

#[test]
fn train_runs_the_plan_and_logs_every_step() {
    let mut cfg = tiny();
    cfg.plan = plan(&[100, 50, 40, 10], 1e-3);
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let manifest = cmd_gen_data(&cfg, &data).unwrap();
    assert!(manifest.samples.iter().any(|s| s.split == QUALITY_SPLIT));
    let run = dir.path().join("run");
    let outcome = cmd_train(&cfg, &data, &run, None).unwrap();
    assert_eq!(outcome.records.len(), 200);
    assert_eq!(read_log(&run.join(LOG_FILE)).unwrap().len(), 200);
    let last = outcome.checkpoints.last().unwrap();
    assert_eq!(last.file_name().unwrap(), "stage-4-step-200.fdit");
    assert!(last.exists());
    assert_eq!(RunConfig::load(&run.join(CONFIG_FILE)).unwrap(), cfg);
}

#[test]
fn train_resumes_where_it_stopped() {
    let mut cfg = tiny();
    cfg.plan = plan(&[40, 20, 16, 4], 3e-3);
    cfg.train.checkpoint_every = 20;
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    cmd_gen_data(&cfg, &data).unwrap();
    let full = cmd_train(&cfg, &data, &dir.path().join("full"), None).unwrap();

    // A run interrupted after step 40: its directory holds what was written by then.
    let partial = dir.path().join("partial");
    let mut short = cfg.clone();
    short.plan.stages.truncate(1);
    cmd_train(&short, &data, &partial, None).unwrap();
    let resumed = cmd_train(
        &cfg,
        &data,
        &partial,
        Some(&partial.join("stage-1-step-40.fdit")),
    )
    .unwrap();

    assert_eq!(resumed.records, full.records[40..]);
    assert_eq!(read_log(&partial.join(LOG_FILE)).unwrap(), full.records);
    let mean = |r: &[fulldit::curriculum::TrainRecord]| {
        r.iter().map(|r| r.loss).sum::<f64>() / r.len() as f64
    };
    let (before, after) = (mean(&full.records[30..40]), mean(&resumed.records[..10]));
    assert!(
        (after - before).abs() <= 0.1 * before,
        "{before} -> {after}"
    );
}

#[test]
fn non_monotone_plan_fails_before_any_step() {
    let mut cfg = tiny();
    cfg.plan = TrainStagePlan {
        stages: vec![
            Stage::new("all", ConditionSet::FULL, 4),
            Stage::new("camera", ConditionSet::of(&[Condition::Camera]), 4),
        ],
        ..cfg.plan
    };
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_train(
        &cfg,
        &dir.path().join("nodata"),
        &dir.path().join("run"),
        None,
    )
    .unwrap_err();
    assert!(matches!(err, CliError::InvalidConfig(_)), "{err}");
    assert!(!dir.path().join("run").exists());
}

#[test]
fn sample_accepts_any_condition_subset() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(&cfg, dir.path());
    let case = dir.path().join("data/sample-00000");

    // Text only.
    let text_only = dir.path().join("text-only");
    fs::create_dir(&text_only).unwrap();
    fs::copy(case.join("text.json"), text_only.join("text.json")).unwrap();
    let out = dir.path().join("s1");
    let video = cmd_sample(&cfg, &ckpt, &text_only, None, &out).unwrap();
    assert_eq!(video.dim(), (2, 8, 8, 3));
    assert!(video.iter().all(|v| (0.0..=1.0).contains(v)));
    let frames = fs::read(out.join(FRAMES_FILE)).unwrap();
    assert!(frames.starts_with(b"P6\n16 8\n255\n"));
    assert_eq!(
        load_tensor(&out.join(VIDEO_FILE)).unwrap(),
        video.clone().into_dyn()
    );

    // A subset never seen jointly in a stage on its own: camera + identity only.
    let subset = ConditionSet::of(&[Condition::Camera, Condition::Identity]);
    let a = dir.path().join("s2");
    let b = dir.path().join("s3");
    cmd_sample(&cfg, &ckpt, &case, Some(subset), &a).unwrap();
    cmd_sample(&cfg, &ckpt, &case, Some(subset), &b).unwrap();
    assert_eq!(snapshot(&a), snapshot(&b));
    assert_ne!(
        fs::read(a.join(VIDEO_FILE)).unwrap(),
        fs::read(out.join(VIDEO_FILE)).unwrap()
    );
}

#[test]
fn sample_enforces_required_conditions() {
    let mut cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(&cfg, dir.path());
    let text_only = dir.path().join("text-only");
    fs::create_dir(&text_only).unwrap();
    fs::copy(
        dir.path().join("data/sample-00000/text.json"),
        text_only.join("text.json"),
    )
    .unwrap();
    cfg.sample.required = ConditionSet::of(&[Condition::Depth]);
    let err = cmd_sample(&cfg, &ckpt, &text_only, None, &dir.path().join("out")).unwrap_err();
    assert!(
        matches!(err, CliError::MissingCondition(Condition::Depth)),
        "{err}"
    );
    // Asking for a condition the directory lacks is an error too.
    cfg.sample.required = ConditionSet::EMPTY;
    let err = cmd_sample(
        &cfg,
        &ckpt,
        &text_only,
        Some(ConditionSet::of(&[Condition::Camera])),
        &dir.path().join("out"),
    )
    .unwrap_err();
    assert!(
        matches!(err, CliError::MissingCondition(Condition::Camera)),
        "{err}"
    );
}

#[test]
fn eval_of_ground_truth_copies_is_ideal() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    cmd_gen_data(&cfg, &data).unwrap();
    let gen = dir.path().join("gen");
    for e in read_manifest(&data).unwrap().samples {
        let d = gen.join(&e.id);
        fs::create_dir_all(&d).unwrap();
        save_tensor(
            &d.join(VIDEO_FILE),
            &load_tensor(&data.join(&e.id).join("video.tnsr")).unwrap(),
        )
        .unwrap();
    }
    let out = dir.path().join("report");
    let report = cmd_eval(&cfg.world, &gen, &data, Some(&out)).unwrap();
    assert_eq!(report.cases.len(), 12);
    assert!(report.categories.is_empty());
    for c in &report.cases {
        assert!(
            c.detected && c.center_err <= 0.5 && c.identity_sim >= 0.99 && c.depth_mae == 0.0,
            "{c:?}"
        );
    }
    assert_eq!(report.overall.cases, 12);
    let on_disk: EvalReport =
        serde_json::from_str(&fs::read_to_string(out.join(EVAL_REPORT)).unwrap()).unwrap();
    assert_eq!(on_disk, report);

    fs::remove_dir_all(gen.join("sample-00007")).unwrap();
    match cmd_eval(&cfg.world, &gen, &data, None) {
        Err(CliError::Pairing { id, .. }) => assert_eq!(id, "sample-00007"),
        other => panic!("expected a pairing error, got {other:?}"),
    }
}

#[test]
fn bench_with_the_oracle_is_near_ideal() {
    let mut cfg = tiny();
    cfg.bench.cases_per_category = 5;
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    let report = cmd_bench(
        &cfg,
        &GeneratorChoice::Oracle,
        &suite,
        &dir.path().join("out"),
    )
    .unwrap();
    assert_eq!(report.categories.len(), 7);
    assert_eq!(report.cases.len(), 35);
    for c in &report.categories {
        assert!(
            c.means.center_err <= 0.5 && c.means.identity_sim >= 0.99 && c.means.depth_mae <= 0.01,
            "{c:?}"
        );
    }
    assert!(suite.join("suite.json").exists());
    // The second run reads the suite back and reproduces the report.
    let again = cmd_bench(
        &cfg,
        &GeneratorChoice::Oracle,
        &suite,
        &dir.path().join("out2"),
    )
    .unwrap();
    assert_eq!(again, report);
}

#[test]
fn bench_with_a_checkpoint_is_reproducible_and_re_scorable() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(&cfg, dir.path());
    let suite = dir.path().join("suite");
    let choice = GeneratorChoice::Checkpoint(ckpt);
    let a = cmd_bench(&cfg, &choice, &suite, &dir.path().join("a")).unwrap();
    let b = cmd_bench(&cfg, &choice, &suite, &dir.path().join("b")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.cases.len(), 14);
    assert_eq!(
        fs::read(dir.path().join("a").join(BENCH_REPORT)).unwrap(),
        fs::read(dir.path().join("b").join(BENCH_REPORT)).unwrap()
    );
    let eval = cmd_eval(
        &cfg.world,
        &dir.path().join("a").join(VIDEOS_DIR),
        &suite,
        None,
    )
    .unwrap();
    assert_eq!(eval.categories.len(), 7);
    let by_id = |v: &[fulldit::synthbench::CaseScores]| {
        v.iter()
            .map(|c| (c.id.clone(), c.clone()))
            .collect::<BTreeMap<_, _>>()
    };
    assert_eq!(by_id(&eval.cases), by_id(&a.cases));
    assert_eq!(eval.categories[0].category, Category::Camera);
}

#[test]
fn binary_runs_with_a_config_file_and_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    tiny().save(&config).unwrap();
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_fulldit"))
            .args(args)
            .env("FULLDIT_THREADS", "1")
            .env("RUST_LOG", "warn")
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    };
    let cfg = config.to_str().unwrap();
    let data = dir.path().join("data");
    let stdout = run(&[
        "gen-data",
        "--config",
        cfg,
        "--n",
        "4",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(stdout.contains("wrote 4 samples"), "{stdout}");
    let suite = dir.path().join("suite");
    let out = dir.path().join("bench");
    let stdout = run(&[
        "bench",
        "--oracle",
        "--config",
        cfg,
        "--suite",
        suite.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(stdout.lines().count(), 7, "{stdout}");
    assert!(out.join(BENCH_REPORT).exists());

    let bad = Command::new(env!("CARGO_BIN_EXE_fulldit"))
        .args(["gen-data", "--config", cfg, "--out", data.to_str().unwrap()])
        .env("FULLDIT_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("FULLDIT_THREADS"));
}
