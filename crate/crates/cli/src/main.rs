use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fulldit::tokenizer::{Condition, ConditionSet};
use fulldit_cli::{
    cmd_bench, cmd_eval, cmd_gen_data, cmd_sample, cmd_train, init_threads, GeneratorChoice,
    RunConfig,
};

/// Desk-scale FullDiT: toy data, curriculum training, sampling, evaluation
/// and benchmarking. Set FULLDIT_THREADS to cap worker threads.
#[derive(Parser)]
#[command(name = "fulldit", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (defaults depend on the command).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render toy samples and a manifest.
    GenData {
        /// Number of samples (overrides data.samples).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train with the configured stage plan.
    Train {
        /// Dataset written by gen-data (default: paths.data_dir).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from a stage-<k>-step-<n>.fdit checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Generate one video from a checkpoint and a conditions directory.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory with any of camera.txt, identity-<j>.tnsr, depth.tnsr, text.json.
        #[arg(long)]
        conditions: PathBuf,
        /// Comma-separated subset to use (camera, identity, depth); default: all found.
        #[arg(long = "use", value_delimiter = ',', value_parser = parse_condition)]
        use_conditions: Option<Vec<Condition>>,
    },
    /// Score generated videos against ground truth by case id.
    Eval {
        #[arg(long)]
        gen: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Run the 7-category benchmark (the suite is built when absent).
    Bench {
        #[arg(long, conflicts_with = "oracle", required_unless_present = "oracle")]
        checkpoint: Option<PathBuf>,
        /// Score ground-truth renders instead of a model (harness self-test).
        #[arg(long)]
        oracle: bool,
        /// Suite directory (default: paths.suite_dir).
        #[arg(long)]
        suite: Option<PathBuf>,
    },
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    Condition::ALL
        .into_iter()
        .find(|c| c.name() == s)
        .ok_or_else(|| format!("unknown condition '{s}' (expected camera, identity or depth)"))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    init_threads()?;
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    let out = cli.common.out;
    match cli.command {
        Command::GenData { n } => {
            if let Some(n) = n {
                cfg.data.samples = n;
            }
            let dir = out.unwrap_or_else(|| cfg.paths.data_dir.clone());
            let manifest = cmd_gen_data(&cfg, &dir)?;
            println!(
                "wrote {} samples to {}",
                manifest.samples.len(),
                dir.display()
            );
        }
        Command::Train { data, resume } => {
            let data = data.unwrap_or_else(|| cfg.paths.data_dir.clone());
            let dir = out.unwrap_or_else(|| cfg.paths.run_dir.clone());
            let outcome = cmd_train(&cfg, &data, &dir, resume.as_deref())?;
            if let Some(last) = outcome.records.last() {
                println!(
                    "step {} stage {} loss {:.5}",
                    last.step, last.stage, last.loss
                );
            }
            for ckpt in &outcome.checkpoints {
                println!("checkpoint {}", ckpt.display());
            }
        }
        Command::Sample {
            checkpoint,
            conditions,
            use_conditions,
        } => {
            let dir = out.context("sample needs --out")?;
            let chosen = use_conditions.map(|list| ConditionSet::of(&list));
            let video = cmd_sample(&cfg, &checkpoint, &conditions, chosen, &dir)?;
            println!("wrote a {:?} video to {}", video.dim(), dir.display());
        }
        Command::Eval { gen, gt } => {
            let report = cmd_eval(&cfg.world, &gen, &gt, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report.overall)?);
        }
        Command::Bench {
            checkpoint,
            oracle,
            suite,
        } => {
            let generator = match checkpoint {
                Some(path) if !oracle => GeneratorChoice::Checkpoint(path),
                _ => GeneratorChoice::Oracle,
            };
            let suite = suite.unwrap_or_else(|| cfg.paths.suite_dir.clone());
            let dir = out.unwrap_or_else(|| cfg.paths.run_dir.join("bench"));
            let report = cmd_bench(&cfg, &generator, &suite, &dir)?;
            for c in &report.categories {
                let m = &c.means;
                println!(
                    "{:<24} center {:.3}  orient {:.3}  identity {:.3}  depth {:.4}  smooth {:.4}  dynamic {:.4}",
                    c.category.name(),
                    m.center_err,
                    m.orient_err,
                    m.identity_sim,
                    m.depth_mae,
                    m.smoothness,
                    m.dynamic
                );
            }
        }
    }
    Ok(())
}
