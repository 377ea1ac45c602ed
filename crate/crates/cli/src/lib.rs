//! Experiment harness for `entropic-cutoff`: config files, subcommand
//! runners and CSV output.

pub mod config;
pub mod run;

pub use config::{ConfigError, ExperimentConfig};
pub use run::{Outcome, RunError};

/// The six subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Profile,
    Concentrate,
    Beta,
    Forward,
    Mix,
    Stats,
}

pub fn execute(cmd: Command, cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    match cmd {
        Command::Profile => run::run_profile(cfg),
        Command::Concentrate => run::run_concentrate(cfg),
        Command::Beta => run::run_beta(cfg),
        Command::Forward => run::run_forward(cfg),
        Command::Mix => run::run_mix(cfg),
        Command::Stats => run::run_stats(cfg),
    }
}
