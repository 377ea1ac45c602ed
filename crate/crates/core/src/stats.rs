//! Entropy and assumption diagnostics of a profile set.

use std::fmt;

use crate::env_model::{compensated_sum, RowProfile};
use crate::error::{Error, Result};

/// Average row entropy `H = -(1/n) sum_{i,j} p_ij ln p_ij`, in nats.
pub fn avg_row_entropy(profiles: &[RowProfile]) -> f64 {
    if profiles.is_empty() {
        return 0.0;
    }
    compensated_sum(profiles.iter().map(RowProfile::entropy)) / profiles.len() as f64
}

/// `t_ent = ln n / H`.
pub fn entropic_time(profiles: &[RowProfile]) -> Result<f64> {
    let h = avg_row_entropy(profiles);
    if !(h > 0.0) {
        return Err(Error::DegenerateEntropy);
    }
    Ok((profiles.len() as f64).ln() / h)
}

/// `max_i sum_j p_ij (ln p_ij)^2`.
pub fn sparsity_stat(profiles: &[RowProfile]) -> f64 {
    profiles
        .iter()
        .map(|r| compensated_sum(r.weights().iter().map(|&p| p * p.ln() * p.ln())))
        .fold(0.0, f64::max)
}

/// `(1/n) #{(i, j) : p_ij > 1 - eps}`.
pub fn nondegeneracy_stat(profiles: &[RowProfile], eps: f64) -> f64 {
    if profiles.is_empty() {
        return 0.0;
    }
    let count: usize = profiles
        .iter()
        .map(|r| r.weights().iter().take_while(|&&p| p > 1.0 - eps).count())
        .sum();
    count as f64 / profiles.len() as f64
}

/// Everything above in one record.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub n: usize,
    pub h: f64,
    /// `None` when `H = 0`.
    pub t_ent: Option<f64>,
    pub sparsity_stat: f64,
    /// `(eps, nondegeneracy_stat)` pairs.
    pub nondeg: Vec<(f64, f64)>,
}

impl EntropyReport {
    pub const CSV_HEADER: &'static str = "n,H,t_ent,sparsity_stat,nondeg@0.1,nondeg@0.01";
    pub const DEFAULT_EPS: [f64; 2] = [0.1, 0.01];

    pub fn new(profiles: &[RowProfile]) -> Self {
        Self::with_eps(profiles, &Self::DEFAULT_EPS)
    }

    pub fn with_eps(profiles: &[RowProfile], eps: &[f64]) -> Self {
        Self {
            n: profiles.len(),
            h: avg_row_entropy(profiles),
            t_ent: entropic_time(profiles).ok(),
            sparsity_stat: sparsity_stat(profiles),
            nondeg: eps.iter().map(|&e| (e, nondegeneracy_stat(profiles, e))).collect(),
        }
    }

    pub fn csv_row(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for EntropyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.t_ent.map_or_else(|| "inf".to_string(), |t| t.to_string());
        write!(f, "{},{},{},{}", self.n, self.h, t, self.sparsity_stat)?;
        for (_, v) in &self.nondeg {
            write!(f, ",{v}")?;
        }
        Ok(())
    }
}
