use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use entcut::{execute, Command, ExperimentConfig, RunError};

#[derive(Parser)]
#[command(name = "entcut", version, about = "Cutoff experiments on random stochastic matrices")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit with status 3 when the run's check fails.
    #[arg(long, global = true)]
    assert: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Distance to the reference along a time grid.
    Profile,
    /// Trajectory weight concentration.
    Concentrate,
    /// Size-biased picks against the Beta limit.
    Beta,
    /// Forward-tree builds and their bounds.
    Forward,
    /// Worst-case mixing times.
    Mix,
    /// Entropy diagnostics.
    Stats,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Profile => Command::Profile,
            Cmd::Concentrate => Command::Concentrate,
            Cmd::Beta => Command::Beta,
            Cmd::Forward => Command::Forward,
            Cmd::Mix => Command::Mix,
            Cmd::Stats => Command::Stats,
        }
    }
}

fn run(cli: &Cli) -> Result<bool, RunError> {
    let Some(path) = &cli.config else {
        return Err(entcut::ConfigError { line: None, message: "--config is required".into() }.into());
    };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let outcome = execute(cli.command.into(), &cfg)?;
    let target = cli.out.clone().or_else(|| cfg.out.as_ref().map(|o| cfg.base_dir.join(o)));
    match target {
        Some(p) => std::fs::write(p, &outcome.csv)?,
        None => print!("{}", outcome.csv),
    }
    if cli.assert {
        eprintln!("check {}: {}", if outcome.passed { "passed" } else { "FAILED" }, outcome.detail);
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { RunError::CONFIG_EXIT as u8 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) if cli.assert => ExitCode::from(RunError::ASSERT_EXIT as u8),
        Ok(false) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
