//! Command-line driver. Every command validates its configuration before any
//! compute, buffers its outputs and writes them only on success. Failures
//! print one line, `error: <category>: <message>`, and exit nonzero.

mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::inference::MethodSpec;

pub use commands::{load_models, prepare_data, EnsembleManifest, Prepared};
pub use config::{
    BenchConfig, CompareConfig, DataConfig, DataSource, EvalConfig, EvalSplit, GpSection, LossConfig, NetworkConfig,
    RunConfig, SweepConfig, TrainSection, DEFAULT_COMPARE_METHODS,
};
pub use output::sha256_hex;

/// Environment variable bounding the worker pool.
pub const WORKERS_ENV: &str = "UQNET_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "uqnet", version, about = "Train and evaluate uncertainty-aware dropout networks")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: `out` from the config, else ./uqnet-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate or load the dataset and write its splits.
    Gen,
    /// Train the network(s) a method needs and write a checkpoint.
    Train {
        #[arg(long, default_value = "rdeepsense")]
        method: MethodSpec,
    },
    /// Evaluate a checkpoint on the evaluation split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        method: Option<MethodSpec>,
    },
    /// Train every configured method plus the GP baseline and tabulate metrics.
    Compare,
    /// Time single-sample inference for several methods on one checkpoint.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated methods; defaults to `bench.methods`.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<MethodSpec>>,
    },
    /// Train one model per α and report validation calibration.
    SweepAlpha,
}

fn workers() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                // Fails only if a pool was already installed in this process.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                Ok(rayon::current_num_threads())
            }
            _ => Err(Error::Config(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

fn execute(cli: Cli) -> Result<()> {
    let config_path = cli
        .config
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(&config_path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = cli
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("uqnet-out"));
    let workers = workers()?;
    let ctx = commands::Context::new(cfg, out, cli.quiet, workers);
    match cli.command {
        Command::Gen => commands::cmd_gen(&ctx),
        Command::Train { method } => commands::cmd_train(&ctx, method),
        Command::Eval { checkpoint, method } => commands::cmd_eval(&ctx, &checkpoint, method),
        Command::Compare => commands::cmd_compare(&ctx),
        Command::Bench { checkpoint, methods } => commands::cmd_bench(&ctx, &checkpoint, methods),
        Command::SweepAlpha => commands::cmd_sweep_alpha(&ctx),
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return 2;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = config::one_line(&e.to_string());
            let prefix = format!("{}: ", e.category());
            eprintln!("error: {}: {}", e.category(), msg.strip_prefix(&prefix).unwrap_or(&msg));
            1
        }
    }
}
