use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use svafd::sigcrypto::BackendKind;
use svafd_cli::{
    attack_suite, render_attack_suite, render_round, render_table_error, render_timing, single_round, table_error,
    timing, ExperimentConfig, Overrides,
};

#[derive(Parser)]
#[command(name = "svafd", version, about = "Run co-aggregation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `mock` or `pairing`.
    #[arg(long, global = true)]
    backend: Option<BackendKind>,
    /// Repetitions per run.
    #[arg(long, global = true)]
    reps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Relative-error grid over (N, K, T).
    TableError,
    /// Per-role, per-stage wall times.
    Timing,
    /// Verdicts and filtration metrics under each configured attack.
    AttackSuite,
    /// One round: verdict table and line-delimited transcript.
    SingleRound,
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let base = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let overrides = Overrides { seed: cli.seed, out: cli.out, backend: cli.backend, reps: cli.reps };
    let cfg = base.with_overrides(&overrides);
    match cli.command {
        Command::TableError => {
            let text = render_table_error(&table_error(&cfg)?)?;
            print!("{text}");
            write(&cfg.out, "table_error.csv", &text)
        }
        Command::Timing => write(&cfg.out, "timing.csv", &render_timing(&timing(&cfg)?, true)?),
        Command::AttackSuite => {
            let text = render_attack_suite(&attack_suite(&cfg)?)?;
            print!("{text}");
            write(&cfg.out, "attack_suite.csv", &text)
        }
        Command::SingleRound => {
            let outcome = single_round(&cfg)?;
            let text = render_round(&outcome)?;
            print!("{text}");
            write(&cfg.out, "round.csv", &text)?;
            write(&cfg.out, "transcript.jsonl", &outcome.transcript.to_jsonl())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
