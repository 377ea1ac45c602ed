//! Size-biased picks from Pareto rows and their Beta(1 - alpha, alpha) limit.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::ensembles::{check_alpha, h_alpha, pareto_masses};
use crate::env_model::{compensated_sum, exact_sum, RowProfile};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::rng::{self, Domain};
use crate::special::{beta_cdf, beta_moment, beta_pdf};

/// Draws one Pareto(alpha) row of length `n`, picks an entry with
/// probability equal to itself and returns it.
pub fn size_biased_pick<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Result<f64> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(Error::Domain { name: "n", value: 0.0, domain: "n >= 1" });
    }
    let row = pareto_masses(n, alpha, rng);
    let j = rng::pick_weighted(rng, &row, compensated_sum(row.iter().copied()));
    Ok(row[j])
}

/// `samples` independent picks; pick `k` uses its own trial stream.
pub fn sample_picks(n: usize, alpha: f64, samples: usize, seed: u64) -> Result<Vec<f64>> {
    (0..samples)
        .into_par_iter()
        .map(|k| size_biased_pick(n, alpha, &mut rng::substream(seed, Domain::Trial, k as u64)))
        .collect()
}

/// The Beta(1 - alpha, alpha) density
/// `(1 - u)^(alpha - 1) u^-alpha / (Gamma(alpha) Gamma(1 - alpha))`.
pub fn beta_density(u: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain { name: "u", value: u, domain: "0 < u < 1" });
    }
    Ok(beta_pdf(u, 1.0 - alpha, alpha))
}

/// `E[-ln xi]` for `xi ~ Beta(1 - alpha, alpha)`, i.e. `h(alpha)`.
pub fn beta_log_moment(alpha: f64) -> Result<f64> {
    h_alpha(alpha)
}

/// `int_0^1 (-ln u) f(u) du` by quadrature.
pub fn beta_log_moment_quadrature(alpha: f64, tol: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let norm = (PI * alpha).sin() / PI;
    let f = move |u: f64, left: f64, right: f64| -> f64 {
        let _ = u;
        -left.ln() * right.powf(alpha - 1.0) * left.powf(-alpha) * norm
    };
    quadrature::tanh_sinh(f, 0.0, 1.0, 0.1 * tol)
}

/// `sum_j p_j^beta`.
pub fn power_sum_stat(row: &RowProfile, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain { name: "beta", value: beta, domain: "0 < beta <= 1" });
    }
    Ok(exact_sum(row.weights().iter().map(|p| p.powf(beta))))
}

/// Kolmogorov–Smirnov distance between `samples` and Beta(1 - alpha, alpha).
pub fn ks_distance(samples: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = beta_cdf(x, 1.0 - alpha, alpha);
            (f - i as f64 / m).max((i + 1) as f64 / m - f)
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaLimitReport {
    pub alpha: f64,
    pub n: usize,
    pub samples: usize,
    /// `E[xi_n^p]`, `p = 1, 2, 3`.
    pub moments: [f64; 3],
    pub moment_stderr: [f64; 3],
    pub neg_log_mean: f64,
    pub neg_log_stderr: f64,
    pub target_moments: [f64; 3],
    pub target_h: f64,
}

fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone, m: f64) -> (f64, f64) {
    let mean = compensated_sum(values.clone()) / m;
    let var = compensated_sum(values.map(|v| (v - mean) * (v - mean))) / (m - 1.0).max(1.0);
    (mean, (var / m).sqrt())
}

impl BetaLimitReport {
    pub const CSV_HEADER: &'static str =
        "alpha,n,samples,m1,m2,m3,neg_log_mean,target_m1,target_m2,target_m3,target_h";

    pub fn from_picks(n: usize, alpha: f64, picks: &[f64]) -> Result<Self> {
        check_alpha(alpha)?;
        if picks.is_empty() {
            return Err(Error::Domain { name: "samples", value: 0.0, domain: "samples >= 1" });
        }
        let m = picks.len() as f64;
        let mut moments = [0.0; 3];
        let mut moment_stderr = [0.0; 3];
        for p in 0..3 {
            (moments[p], moment_stderr[p]) = mean_and_stderr(picks.iter().map(|x| x.powi(p as i32 + 1)), m);
        }
        let (neg_log_mean, neg_log_stderr) = mean_and_stderr(picks.iter().map(|x| -x.ln()), m);
        let (a, b) = (1.0 - alpha, alpha);
        Ok(Self {
            alpha,
            n,
            samples: picks.len(),
            moments,
            moment_stderr,
            neg_log_mean,
            neg_log_stderr,
            target_moments: [beta_moment(a, b, 1), beta_moment(a, b, 2), beta_moment(a, b, 3)],
            target_h: h_alpha(alpha)?,
        })
    }

    pub fn sample(n: usize, alpha: f64, samples: usize, seed: u64) -> Result<Self> {
        Self::from_picks(n, alpha, &sample_picks(n, alpha, samples, seed)?)
    }
}

impl fmt::Display for BetaLimitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [m1, m2, m3] = self.moments;
        let [t1, t2, t3] = self.target_moments;
        write!(
            f,
            "{},{},{},{m1},{m2},{m3},{},{t1},{t2},{t3},{}",
            self.alpha, self.n, self.samples, self.neg_log_mean, self.target_h
        )
    }
}
