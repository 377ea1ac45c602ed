//! Experiment configuration files.
//!
//! A config is a small TOML document:
//!
//! ```toml
//! seed = 7
//! n = 2000
//! lambda_grid = [0.5, 1.0, 1.5]
//! reference = "pi_hat"
//!
//! [ensemble]
//! kind = "pareto"
//! alpha = 0.5
//!
//! [starts]
//! policy = "sample"
//! m = 64
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use entropic_cutoff::dynamics::StartPolicy;
use entropic_cutoff::ensembles::{EnsembleKind, EnsembleSpec};
use entropic_cutoff::walker::Mode;
use entropic_cutoff::{io, RowProfile};

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    ROut,
    OutDegrees,
    Pareto,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_degrees: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Profile file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles_file: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    All,
    Sample,
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartsConfig {
    #[serde(default)]
    pub policy: Policy,
    #[serde(default = "default_m")]
    pub m: usize,
}

impl Default for StartsConfig {
    fn default() -> Self {
        Self { policy: Policy::Auto, m: default_m() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    #[default]
    PiHat,
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkMode {
    #[default]
    Quenched,
    Annealed,
}

impl From<WalkMode> for Mode {
    fn from(m: WalkMode) -> Self {
        match m {
            WalkMode::Quenched => Mode::Quenched,
            WalkMode::Annealed => Mode::Annealed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardConfig {
    /// Horizon; `round(t_ent)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default = "default_forward_eps")]
    pub eps: f64,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self { s: None, eps: default_forward_eps() }
    }
}

/// Thresholds used by `--assert`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default = "default_early_lambda")]
    pub early_lambda: f64,
    #[serde(default = "default_early_min")]
    pub early_min: f64,
    #[serde(default = "default_late_lambda")]
    pub late_lambda: f64,
    #[serde(default = "default_late_max")]
    pub late_max: f64,
    #[serde(default = "default_min_within")]
    pub min_within: f64,
    #[serde(default = "default_h_tol")]
    pub h_tol: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            early_lambda: default_early_lambda(),
            early_min: default_early_min(),
            late_lambda: default_late_lambda(),
            late_max: default_late_max(),
            min_within: default_min_within(),
            h_tol: default_h_tol(),
        }
    }
}

fn default_m() -> usize {
    StartPolicy::DEFAULT_SAMPLE
}
fn default_forward_eps() -> f64 {
    0.04
}
fn default_early_lambda() -> f64 {
    0.7
}
fn default_early_min() -> f64 {
    0.8
}
fn default_late_lambda() -> f64 {
    1.6
}
fn default_late_max() -> f64 {
    0.25
}
fn default_min_within() -> f64 {
    0.95
}
fn default_h_tol() -> f64 {
    0.05
}
fn default_trials() -> usize {
    1000
}
fn default_eps() -> f64 {
    0.25
}
fn default_mix_eps() -> Vec<f64> {
    vec![0.25]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub reference: Reference,
    /// Walks per start, or picks for `beta`.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Concentration window.
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Walk length; `round(t_ent)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(default)]
    pub mode: WalkMode,
    #[serde(default = "default_mix_eps")]
    pub mix_eps: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub starts: StartsConfig,
    #[serde(default)]
    pub forward: ForwardConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Line of `key` inside `[section]` (or the top level).
fn key_line(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (k, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            continue;
        }
        if current.as_deref() == section {
            if let Some((lhs, _)) = t.split_once('=') {
                if lhs.trim() == key {
                    return Some(k + 1);
                }
            }
        }
    }
    None
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate_against(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Re-checks a config built in code; errors carry no line.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_against("")
    }

    fn validate_against(&self, text: &str) -> Result<(), ConfigError> {
        let fail = |section: Option<&str>, key: &str, message: String| {
            Err(ConfigError { line: key_line(text, section, key), message })
        };
        if self.n == 0 {
            return fail(None, "n", "n must be at least 1".into());
        }
        if self.trials == 0 {
            return fail(None, "trials", "trials must be at least 1".into());
        }
        if self.t_grid.is_some() && self.lambda_grid.is_some() {
            return fail(None, "lambda_grid", "give either t_grid or lambda_grid, not both".into());
        }
        if let Some(l) = &self.lambda_grid {
            if l.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return fail(None, "lambda_grid", "lambda values must be finite and >= 0".into());
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return fail(None, "eps", format!("eps = {} must be positive", self.eps));
        }
        if self.t == Some(0) {
            return fail(None, "t", "t must be at least 1".into());
        }
        if self.mix_eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return fail(None, "mix_eps", "mix_eps values must lie in (0, 1)".into());
        }
        if self.starts.m == 0 {
            return fail(Some("starts"), "m", "m must be at least 1".into());
        }
        if self.forward.s == Some(0) {
            return fail(Some("forward"), "s", "s must be at least 1".into());
        }
        if !(self.forward.eps > 0.0 && self.forward.eps < 1.0) {
            return fail(Some("forward"), "eps", "forward eps must lie in (0, 1)".into());
        }
        let e = &self.ensemble;
        let sec = Some("ensemble");
        match e.kind {
            Kind::ROut => match e.r {
                None => return fail(sec, "kind", "r_out needs r".into()),
                Some(r) if r == 0 || r > self.n => return fail(sec, "r", format!("r = {r} must lie in 1..=n")),
                _ => {}
            },
            Kind::OutDegrees => match &e.out_degrees {
                None => return fail(sec, "kind", "out_degrees needs out_degrees".into()),
                Some(d) if d.is_empty() || d.iter().any(|&x| x == 0 || x > self.n) => {
                    return fail(sec, "out_degrees", "degrees must be non-empty and lie in 1..=n".into())
                }
                _ => {}
            },
            Kind::Pareto => match e.alpha {
                None => return fail(sec, "kind", "pareto needs alpha".into()),
                Some(a) if !(a > 0.0 && a < 1.0) => return fail(sec, "alpha", format!("alpha = {a} must lie in (0, 1)")),
                _ => {}
            },
            Kind::File => {
                if e.profiles_file.is_none() {
                    return fail(sec, "kind", "file needs profiles_file".into());
                }
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> Option<EnsembleSpec> {
        let e = &self.ensemble;
        let kind = match e.kind {
            Kind::ROut => EnsembleKind::OutDegrees(vec![e.r?]),
            Kind::OutDegrees => EnsembleKind::OutDegrees(e.out_degrees.clone()?),
            Kind::Pareto => EnsembleKind::Pareto { alpha: e.alpha? },
            Kind::File => return None,
        };
        Some(EnsembleSpec { kind, n: self.n, seed: self.seed })
    }

    /// Row profiles of the configured ensemble.
    pub fn profiles(&self) -> Result<Vec<RowProfile>, ConfigError> {
        let err = |message: String| ConfigError { line: None, message };
        match self.spec() {
            Some(spec) => spec.profiles().map_err(|e| err(e.to_string())),
            None => {
                let name = self.ensemble.profiles_file.as_deref().unwrap_or_default();
                let path = self.base_dir.join(name);
                let text =
                    std::fs::read_to_string(&path).map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
                let p = io::parse_profiles(&text).map_err(|e| err(format!("{}: {e}", path.display())))?;
                if p.len() != self.n {
                    return Err(err(format!("{} holds {} rows, config has n = {}", path.display(), p.len(), self.n)));
                }
                Ok(p)
            }
        }
    }

    pub fn start_policy(&self) -> StartPolicy {
        let (m, seed) = (self.starts.m, self.seed);
        match self.starts.policy {
            Policy::All => StartPolicy::All,
            Policy::Sample => StartPolicy::Sample { m, seed },
            Policy::Auto => StartPolicy::Auto { m, seed },
        }
    }
}
