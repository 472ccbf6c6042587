use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use alsf::bench::BenchConfig;
use alsf::commands::{
    cmd_bench, cmd_classify, cmd_cv, cmd_eval, cmd_synth, cmd_train, exit_code, BenchShape,
    RunOptions,
};
use alsf::io::{atomic_write, load_toml, CvConfig, RuleConfig, SynthConfig};
use alsf::{Error, ExecPolicy, Result};

#[derive(Parser)]
#[command(name = "alsf", version, about = "Analysis-synthesis dictionary learning for patch-based image classification")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Overrides the seed from manifests and configs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Command config: hyperparameters (train), rule (classify),
    /// synthetic spec (synth) or grid (cv), as TOML.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a manifest.
    Train {
        manifest: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Classify an image or every PNG/TIFF in a directory; writes CSV.
    Classify {
        model: PathBuf,
        input: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Confusion matrix on a manifest's test images.
    Eval {
        model: PathBuf,
        manifest: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Time classification against an iterative sparse-coding baseline.
    Bench {
        /// Model file; a random model of dimension `--dim` is used otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 1300)]
        n_patches: usize,
        #[arg(long = "dim", default_value_t = 400)]
        d: usize,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, default_value_t = 26)]
        baseline_patches: usize,
    },
    /// Write a synthetic image dataset and its manifest.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Cross-validate a hyperparameter grid on a manifest's training patches.
    Cv {
        manifest: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => atomic_write(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn config<T: Default + serde::de::DeserializeOwned>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), load_toml)
}

fn run(cli: Cli) -> Result<()> {
    let policy = if cli.common.threads == Some(1) {
        ExecPolicy::Sequential
    } else {
        ExecPolicy::Parallel
    };
    alsf::par::configure_threads(cli.common.threads);
    let opts = RunOptions {
        seed: cli.common.seed,
        policy,
    };
    let cfg = cli.common.config.as_deref();
    match cli.command {
        Command::Train { manifest, out } => {
            let o = cmd_train(&manifest, cfg, &out, &opts)?;
            eprintln!(
                "trained in {} iterations; report at {}",
                o.report.iterations_run,
                o.report_path.display()
            );
        }
        Command::Classify { model, input, out } => {
            let rule: RuleConfig = config(cfg)?;
            let o = cmd_classify(&model, &input, &rule, &opts)?;
            emit(out.as_deref(), &o.csv)?;
            if o.failed > 0 {
                eprintln!("{} of {} images failed", o.failed, o.failed + o.succeeded);
            }
        }
        Command::Eval { model, manifest, out } => {
            let o = cmd_eval(&model, &manifest, &opts)?;
            emit(out.as_deref(), &o.report)?;
        }
        Command::Bench {
            model,
            n_patches,
            d,
            repetitions,
            baseline_patches,
        } => {
            let bench = BenchConfig {
                n_patches,
                repetitions,
                baseline_patches,
                seed: opts.seed.unwrap_or(0),
                ..BenchConfig::default()
            };
            let d = if model.is_some() { 0 } else { d };
            let report = cmd_bench(model.as_deref(), d, BenchShape::default(), &bench)?;
            print!("{}", report.render());
        }
        Command::Synth { out } => {
            let spec: SynthConfig = config(cfg)?;
            let o = cmd_synth(&spec, &out, &opts)?;
            eprintln!("wrote {} images and {}", o.images.len(), o.manifest.display());
        }
        Command::Cv { manifest, out } => {
            let grid: CvConfig = config(cfg)?;
            emit(out.as_deref(), &cmd_cv(&manifest, &grid, &opts)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code: Error = e;
            ExitCode::from(exit_code(&code) as u8)
        }
    }
}
