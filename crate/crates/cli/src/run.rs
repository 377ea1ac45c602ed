//! Subcommand runners. Each returns the CSV text and, for `--assert`, a
//! verdict.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use entropic_cutoff::beta_limit::BetaLimitReport;
use entropic_cutoff::dynamics::{
    distance_profile, lambda_grid, pi_hat, stationary, worst_mixing_time, DistVector, StationaryOptions,
};
use entropic_cutoff::ensembles::{h_alpha, ParetoRows};
use entropic_cutoff::env_model::compensated_sum;
use entropic_cutoff::forward::{build_forward, graph_tx, hbar_of};
use entropic_cutoff::stats::{self, EntropyReport};
use entropic_cutoff::walker::concentration_report;
use entropic_cutoff::{Error, LazyEnvironment, RowProfile, RowSource, StochasticMatrix};

use crate::config::{ConfigError, ExperimentConfig, Kind, Reference};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Model(#[from] Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub const CONFIG_EXIT: i32 = 2;
    pub const ASSERT_EXIT: i32 = 3;

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => Self::CONFIG_EXIT,
            RunError::Model(e) if is_config_error(e) => Self::CONFIG_EXIT,
            _ => 1,
        }
    }
}

// Errors that reject the requested experiment rather than a numerical run.
fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidProfile { .. }
            | Error::DimensionMismatch { .. }
            | Error::OutOfRange { .. }
            | Error::DegenerateEntropy
            | Error::DegreeTooLarge { .. }
            | Error::AlphaOutOfRange(_)
            | Error::Domain { .. }
            | Error::Parse { .. }
            | Error::Infeasible { .. }
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub csv: String,
    pub passed: bool,
    pub detail: String,
}

/// SHA-256 of the canonical form of `cfg`.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    Sha256::digest(cfg.to_toml().as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn header(cfg: &ExperimentConfig, h: f64, t_ent: Option<f64>) -> String {
    let mut out = format!("# config-hash: {}\n# n: {}\n# H: {h}\n", config_hash(cfg), cfg.n);
    match t_ent {
        Some(t) => {
            let _ = writeln!(out, "# t_ent: {t}");
        }
        None => out.push_str("# t_ent: inf\n"),
    }
    if let (Kind::Pareto, Some(a)) = (cfg.ensemble.kind, cfg.ensemble.alpha) {
        if let Ok(h) = h_alpha(a) {
            let _ = writeln!(out, "# h_alpha: {h}");
        }
    }
    out
}

/// Ranked profiles seen as rows, for start selection.
struct ProfileRows<'a>(&'a [RowProfile]);

impl RowSource for ProfileRows<'_> {
    fn n(&self) -> usize {
        self.0.len()
    }

    fn fill_row(&self, i: usize, buf: &mut Vec<(usize, f64)>) {
        buf.clear();
        buf.extend(self.0[i].weights().iter().copied().enumerate());
    }
}

/// The realized matrix of the configured environment.
pub enum Chain {
    Matrix(StochasticMatrix),
    Pareto(ParetoRows),
}

/// Pareto chains up to this size are held in memory.
pub const MATERIALIZE_LIMIT: usize = 4096;

impl Chain {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self, RunError> {
        if cfg.ensemble.kind == Kind::Pareto {
            let rows = ParetoRows::new(cfg.n, cfg.ensemble.alpha.unwrap_or_default(), cfg.seed)?;
            return Ok(if cfg.n <= MATERIALIZE_LIMIT { Chain::Matrix(rows.materialize()) } else { Chain::Pareto(rows) });
        }
        let mut env = LazyEnvironment::new(cfg.profiles()?, cfg.seed)?;
        Ok(Chain::Matrix(env.realize()))
    }

    pub fn source(&self) -> &dyn RowSource {
        match self {
            Chain::Matrix(m) => m,
            Chain::Pareto(p) => p,
        }
    }
}

/// Average row entropy straight from the rows.
pub fn chain_entropy(src: &dyn RowSource) -> f64 {
    let mut buf = Vec::new();
    let rows = (0..src.n()).map(|i| {
        src.fill_row(i, &mut buf);
        -compensated_sum(buf.iter().map(|&(_, p)| if p > 0.0 { p * p.ln() } else { 0.0 }))
    });
    compensated_sum(rows.collect::<Vec<_>>()) / src.n() as f64
}

fn reference(cfg: &ExperimentConfig, src: &dyn RowSource, t_ent: f64) -> Result<DistVector, RunError> {
    Ok(match cfg.reference {
        Reference::PiHat => pi_hat(src, t_ent)?,
        Reference::Stationary => {
            stationary(src, StationaryOptions { seed: cfg.seed, ..StationaryOptions::default() })?.dist
        }
    })
}

const DEFAULT_LAMBDAS: [f64; 17] =
    [0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0, 1.125, 1.25, 1.375, 1.5, 1.625, 1.75, 1.875, 2.0];

fn t_ent_of(h: f64, n: usize) -> Result<f64, RunError> {
    if !(h > 0.0) {
        return Err(Error::DegenerateEntropy.into());
    }
    Ok((n as f64).ln() / h)
}

pub fn run_profile(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let chain = Chain::build(cfg)?;
    let src = chain.source();
    let h = chain_entropy(src);
    let t_ent = t_ent_of(h, cfg.n)?;
    let target = reference(cfg, src, t_ent)?;
    let starts = cfg.start_policy().resolve(src);
    let grid = match (&cfg.t_grid, &cfg.lambda_grid) {
        (Some(t), _) => t.clone(),
        (None, Some(l)) => lambda_grid(t_ent, l),
        (None, None) => lambda_grid(t_ent, &DEFAULT_LAMBDAS),
    };
    let profile = distance_profile(src, &starts, &grid, &target, t_ent)?;
    let c = &cfg.check;
    let probe = lambda_grid(t_ent, &[c.early_lambda, c.late_lambda]);
    let (early_t, late_t) = (probe[0], *probe.last().unwrap());
    let check = distance_profile(src, &starts, &[early_t, late_t], &target, t_ent)?;
    let (early, late) = (check.rows[0].tv_max, check.rows.last().unwrap().tv_max);
    let passed = early >= c.early_min && late <= c.late_max;
    let detail = format!(
        "tv_max(t={early_t}) = {early} (need >= {}), tv_max(t={late_t}) = {late} (need <= {})",
        c.early_min, c.late_max
    );
    let mut csv = header(cfg, h, Some(t_ent));
    let _ = writeln!(csv, "# starts: {}", starts.len());
    csv.push_str(&profile.to_csv());
    Ok(Outcome { csv, passed, detail })
}

pub fn run_mix(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let chain = Chain::build(cfg)?;
    let src = chain.source();
    let h = chain_entropy(src);
    let t_ent = t_ent_of(h, cfg.n)?;
    let target = reference(cfg, src, t_ent)?;
    let starts = cfg.start_policy().resolve(src);
    let horizon = cfg.horizon.unwrap_or((10.0 * t_ent).ceil() as usize + 10);
    let mut csv = header(cfg, h, Some(t_ent));
    csv.push_str("eps,t_mix,t_ent,ratio\n");
    let mut passed = true;
    let mut detail = String::new();
    for &eps in &cfg.mix_eps {
        match worst_mixing_time(src, &starts, eps, &target, horizon) {
            Ok(t) => {
                let _ = writeln!(csv, "{eps},{t},{t_ent},{}", t as f64 / t_ent);
            }
            Err(Error::HorizonExceeded { .. }) => {
                passed = false;
                let _ = writeln!(csv, "{eps},,{t_ent},");
                let _ = write!(detail, "eps {eps}: not mixed by t = {horizon}; ");
            }
            Err(e) => return Err(e.into()),
        }
    }
    if passed {
        detail = format!("mixed within t = {horizon}");
    }
    Ok(Outcome { csv, passed, detail })
}

pub fn run_stats(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let profiles = cfg.profiles()?;
    let report = EntropyReport::new(&profiles);
    let mut csv = header(cfg, report.h, report.t_ent);
    let _ = writeln!(csv, "{}", EntropyReport::CSV_HEADER);
    let _ = writeln!(csv, "{report}");
    let passed = report.t_ent.is_some();
    let detail = if passed { "H > 0".to_string() } else { "H = 0".to_string() };
    Ok(Outcome { csv, passed, detail })
}

pub fn run_concentrate(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let profiles = cfg.profiles()?;
    let h = stats::avg_row_entropy(&profiles);
    let t_ent = t_ent_of(h, cfg.n)?;
    let t = cfg.t.unwrap_or((t_ent.round() as usize).max(1));
    let starts = cfg.start_policy().resolve(&ProfileRows(&profiles));
    let mut env = LazyEnvironment::new(profiles, cfg.seed)?;
    let report = concentration_report(&mut env, &starts, t, cfg.eps, cfg.trials, cfg.mode.into(), cfg.seed)?;
    let within = report.pooled.frac_within();
    let mut csv = header(cfg, h, Some(t_ent));
    csv.push_str(&report.to_csv());
    let passed = within >= cfg.check.min_within;
    let detail = format!("pooled frac_within = {within} (need >= {})", cfg.check.min_within);
    Ok(Outcome { csv, passed, detail })
}

pub fn run_beta(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let alpha = match (cfg.ensemble.kind, cfg.ensemble.alpha) {
        (Kind::Pareto, Some(a)) => a,
        _ => return Err(ConfigError { line: None, message: "beta needs a pareto ensemble".into() }.into()),
    };
    let report = BetaLimitReport::sample(cfg.n, alpha, cfg.trials, cfg.seed)?;
    let mut csv = format!("# config-hash: {}\n# n: {}\n# h_alpha: {}\n", config_hash(cfg), cfg.n, report.target_h);
    let _ = writeln!(csv, "{}", BetaLimitReport::CSV_HEADER);
    let _ = writeln!(csv, "{report}");
    let gap = (report.neg_log_mean - report.target_h).abs();
    let passed = gap <= cfg.check.h_tol;
    let detail = format!("|E[-ln xi] - h| = {gap} (need <= {})", cfg.check.h_tol);
    Ok(Outcome { csv, passed, detail })
}

pub const FORWARD_HEADER: &str = "root,s,kappa,tx,n_nodes,kappa_bound,pass";

pub fn run_forward(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let profiles = cfg.profiles()?;
    let h = stats::avg_row_entropy(&profiles);
    let t_ent = t_ent_of(h, cfg.n)?;
    let s = cfg.forward.s.unwrap_or((t_ent.round() as usize).max(1));
    let roots = cfg.start_policy().resolve(&ProfileRows(&profiles));
    let mut env = LazyEnvironment::new(profiles, cfg.seed)?;
    let hbar = hbar_of(&env, cfg.forward.eps)?;
    let mut csv = header(cfg, h, Some(t_ent));
    let _ = writeln!(csv, "# hbar: {hbar}");
    let _ = writeln!(csv, "{FORWARD_HEADER}");
    let mut failed = 0;
    for &x in &roots {
        let tree = build_forward(&mut env, x, s, hbar)?;
        let pass = tree.check_bounds().all();
        failed += !pass as usize;
        let _ = writeln!(
            csv,
            "{},{s},{},{},{},{},{pass}",
            x + 1,
            tree.kappa,
            graph_tx(&tree),
            tree.nodes.len(),
            tree.kappa_limit()
        );
    }
    let detail = format!("{failed} of {} builds broke a bound", roots.len());
    Ok(Outcome { csv, passed: failed == 0, detail })
}
