//! Named instances: uniform out-degree rows and heavy-tailed Pareto rows,
//! plus `h(alpha)`, the entropy rate of the Pareto model.

use rand::Rng;

use crate::env_model::{compensated_sum, exact_sum, RowProfile, RowSource, StochasticMatrix};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::rng::{self, Domain};
use crate::special::digamma;

/// Which rows to generate.
#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleKind {
    /// Row `i` is uniform on `d_i` slots. A list shorter than `n` is cycled.
    OutDegrees(Vec<usize>),
    /// Row entries are i.i.d. Pareto(alpha) masses, normalized.
    Pareto { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn out_degrees(n: usize, degrees: Vec<usize>, seed: u64) -> Self {
        Self { kind: EnsembleKind::OutDegrees(degrees), n, seed }
    }

    /// Every row uniform on `r` slots.
    pub fn r_out(n: usize, r: usize, seed: u64) -> Self {
        Self::out_degrees(n, vec![r], seed)
    }

    pub fn pareto(n: usize, alpha: f64, seed: u64) -> Self {
        Self { kind: EnsembleKind::Pareto { alpha }, n, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Domain { name: "n", value: 0.0, domain: "n >= 1" });
        }
        match &self.kind {
            EnsembleKind::OutDegrees(d) => {
                if d.is_empty() {
                    return Err(Error::Domain { name: "out_degrees", value: 0.0, domain: "nonempty list" });
                }
                for (row, &degree) in d.iter().enumerate() {
                    if degree == 0 || degree > self.n {
                        return Err(Error::DegreeTooLarge { row, degree, n: self.n });
                    }
                }
                Ok(())
            }
            EnsembleKind::Pareto { alpha } => check_alpha(*alpha),
        }
    }

    /// The ranked profiles of all `n` rows.
    pub fn profiles(&self) -> Result<Vec<RowProfile>> {
        self.validate()?;
        match &self.kind {
            EnsembleKind::OutDegrees(_) => out_degree_profiles(self),
            EnsembleKind::Pareto { alpha } => ParetoRows::new(self.n, *alpha, self.seed)?.profiles(),
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

/// Rows uniform on `d_i` slots.
pub fn out_degree_profiles(spec: &EnsembleSpec) -> Result<Vec<RowProfile>> {
    let EnsembleKind::OutDegrees(degrees) = &spec.kind else {
        return Err(Error::Domain { name: "kind", value: f64::NAN, domain: "out_degrees" });
    };
    if degrees.is_empty() {
        return Err(Error::Domain { name: "out_degrees", value: 0.0, domain: "nonempty list" });
    }
    (0..spec.n)
        .map(|i| RowProfile::uniform(i, degrees[i % degrees.len()], spec.n))
        .collect()
}

/// One raw Pareto(alpha) mass, `P(omega > t) = min(1, t^-alpha)`.
pub fn pareto_omega<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    rng::open_unit(rng).powf(-1.0 / alpha)
}

// Normalized masses in draw order. Works in log space so tiny alpha cannot
// overflow the row sum.
pub(crate) fn pareto_masses<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = (0..n).map(|_| -rng::open_unit(rng).ln() / alpha).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total = compensated_sum(raw.iter().copied());
    let mut out: Vec<f64> = raw.into_iter().map(|w| w / total).collect();
    // Fold the rounding residual into the top mass.
    if let Some(k) = out.iter().position(|&w| w == 1.0 / total) {
        for _ in 0..3 {
            let r = 1.0 - exact_sum(out.iter().copied());
            if r == 0.0 {
                break;
            }
            out[k] += r;
        }
    }
    out
}

/// A row of `n` normalized Pareto(alpha) masses, ranked.
pub fn pareto_row<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Result<RowProfile> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(Error::Domain { name: "n", value: 0.0, domain: "n >= 1" });
    }
    RowProfile::from_unsorted(0, pareto_masses(n, alpha, rng), n)
}

/// The dense Pareto matrix, each row regenerated from its own substream.
///
/// Entries are i.i.d. within a row, so column order is already exchangeable
/// and no extra permutation is applied. Memory is `O(n)` per row touched.
#[derive(Debug, Clone)]
pub struct ParetoRows {
    n: usize,
    alpha: f64,
    seed: u64,
}

impl ParetoRows {
    pub fn new(n: usize, alpha: f64, seed: u64) -> Result<Self> {
        check_alpha(alpha)?;
        if n == 0 {
            return Err(Error::Domain { name: "n", value: 0.0, domain: "n >= 1" });
        }
        Ok(Self { n, alpha, seed })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn masses(&self, i: usize) -> Vec<f64> {
        let mut stream = rng::substream(self.seed, Domain::Pareto, i as u64);
        pareto_masses(self.n, self.alpha, &mut stream)
    }

    /// Ranked profile of row `i`; same draws as [`RowSource::fill_row`].
    pub fn profile(&self, i: usize) -> Result<RowProfile> {
        RowProfile::from_unsorted(i, self.masses(i), self.n)
    }

    pub fn profiles(&self) -> Result<Vec<RowProfile>> {
        (0..self.n).map(|i| self.profile(i)).collect()
    }

    pub fn materialize(&self) -> StochasticMatrix {
        let rows = (0..self.n)
            .map(|i| self.masses(i).into_iter().enumerate().filter(|&(_, p)| p > 0.0).collect())
            .collect();
        StochasticMatrix::from_rows_unchecked(self.n, rows)
    }
}

impl RowSource for ParetoRows {
    fn n(&self) -> usize {
        self.n
    }

    fn fill_row(&self, i: usize, buf: &mut Vec<(usize, f64)>) {
        buf.clear();
        buf.extend(self.masses(i).into_iter().enumerate().filter(|&(_, p)| p > 0.0));
    }
}

/// `h(alpha) = psi(1) - psi(1 - alpha)`.
pub fn h_alpha(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(digamma(1.0)? - digamma(1.0 - alpha)?)
}

/// `h(alpha)` as `int_0^inf (e^{alpha t} - 1) / (e^t - 1) dt`.
pub fn h_alpha_integral(alpha: f64, tol: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(tol > 0.0) {
        return Err(Error::Domain { name: "tol", value: tol, domain: "tol > 0" });
    }
    let f = move |t: f64| {
        if t == 0.0 {
            alpha
        } else if t < 1.0 {
            (alpha * t).exp_m1() / t.exp_m1()
        } else {
            ((alpha - 1.0) * t).exp() * (-(-alpha * t).exp_m1()) / (-(-t).exp_m1())
        }
    };
    // Leave headroom between the level-difference estimate and the true error.
    quadrature::exp_sinh(f, 0.0, 0.1 * tol)
}
