//! `nsde`: data preparation, training, evaluation and stability
//! experiments for stable neural SDEs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{CommandFactory, Parser, Subcommand};
use serde_json::Value;

use commands::{Outcome, SplitChoice};

/// Exit code for bad input or configuration.
const EXIT_INVALID: u8 = 1;
/// Exit code for numerical aborts.
const EXIT_NUMERICAL: u8 = 2;

#[derive(Parser)]
#[command(name = "nsde", version, about = "Stable neural SDEs for irregular time series")]
#[command(after_help = "Any `--section.key=value` argument overrides a config field, e.g. --train.max_epochs=20")]
struct Cli {
    /// JSON config; fields left out take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; replaces the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth,
    /// Drop observations from a dataset, optionally onto a uniform grid.
    Corrupt {
        #[arg(long)]
        input: PathBuf,
    },
    /// Train a model and evaluate it on the test split.
    Train {
        /// Dataset CSV; replaces `data.csv` in the config.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Evaluate a trained run.
    Eval {
        /// Output directory of a `train` run.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitChoice,
    },
    /// Positivity, absorption and moment-bound checks.
    Stability,
    /// Wasserstein distance of perturbed outputs against depth.
    Robustness,
    /// Train one model per diffusion function.
    DiffusionCompare,
    /// Strong convergence order of the solvers.
    Convergence,
    /// Gradient checks through the solver.
    Gradcheck,
}

/// Splits `--key=value` overrides for config fields from the flags clap knows.
fn partition_args(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, Value)>)> {
    let cmd = Cli::command();
    let mut known: Vec<String> = cmd.get_arguments().filter_map(|a| a.get_long().map(str::to_owned)).collect();
    for sub in cmd.get_subcommands() {
        known.extend(sub.get_arguments().filter_map(|a| a.get_long().map(str::to_owned)));
    }
    known.extend(["help".to_string(), "version".to_string()]);
    let mut kept = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        let flag = a.strip_prefix("--").and_then(|rest| rest.split_once('=').map(|(k, _)| (k.to_string(), rest.to_string())));
        match flag {
            Some((key, rest)) if !known.contains(&key) => overrides.push(config::parse_override(&rest)?),
            _ => kept.push(a),
        }
    }
    Ok((kept, overrides))
}

fn run(cli: Cli, overrides: Vec<(String, Value)>) -> Result<Outcome> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let file = cli.config.as_deref();
    let (o, seed, out) = (&overrides, cli.seed, cli.out.as_path());
    match cli.command {
        Command::Synth => commands::synth_cmd(config::load(file, o, seed)?, out),
        Command::Corrupt { input } => commands::corrupt_cmd(config::load(file, o, seed)?, &input, out),
        Command::Train { input } => commands::train_cmd(config::load(file, o, seed)?, input, out),
        Command::Eval { run, input, split } => {
            if file.is_some() || !o.is_empty() || seed.is_some() {
                anyhow::bail!("eval takes its configuration from the run directory");
            }
            commands::eval_cmd(&run, input, split, out)
        }
        Command::Stability => commands::stability_cmd(config::load(file, o, seed)?, out),
        Command::Robustness => commands::robustness_cmd(config::load(file, o, seed)?, out),
        Command::DiffusionCompare => commands::diffusion_cmd(config::load(file, o, seed)?, out),
        Command::Convergence => commands::convergence_cmd(config::load(file, o, seed)?, out),
        Command::Gradcheck => commands::gradcheck_cmd(config::load(file, o, seed)?, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (args, overrides) = match partition_args(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_INVALID);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli, overrides) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed(why)) => {
            eprintln!("check failed: {why}");
            ExitCode::from(EXIT_INVALID)
        }
        Ok(Outcome::Aborted(why)) => {
            eprintln!("numerical abort: {why}");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e.chain().any(|c| c.downcast_ref::<nsde_core::error::Error>().is_some_and(|x| x.is_numerical()));
            ExitCode::from(if numerical { EXIT_NUMERICAL } else { EXIT_INVALID })
        }
    }
}
