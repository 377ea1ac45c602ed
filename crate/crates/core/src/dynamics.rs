//! Exact evolution of distributions, references, distances and mixing times.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::env_model::{compensated_sum, LazyEnvironment, RowProfile, RowSource};
use crate::error::{Error, Result};
use crate::rng::{self, Domain};
use crate::walker;

/// Tolerance on the total mass of a [`DistVector`].
pub const MASS_TOL: f64 = 1e-10;
const RENORM_EVERY: usize = 64;
const RENORM_DRIFT: f64 = 1e-12;

/// A probability vector over `[n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistVector {
    values: Vec<f64>,
}

impl DistVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((k, &v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidProfile { row: k, reason: format!("probability {v}") });
        }
        let sum = compensated_sum(values.iter().copied());
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidProfile { row: 0, reason: format!("mass {sum}") });
        }
        Ok(Self { values })
    }

    pub fn uniform(n: usize) -> Self {
        Self { values: vec![1.0 / n as f64; n] }
    }

    pub fn delta(n: usize, i: usize) -> Self {
        let mut values = vec![0.0; n];
        values[i] = 1.0;
        Self { values }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn mass(&self) -> f64 {
        compensated_sum(self.values.iter().copied())
    }

    /// `sum_j mu(j)^2`.
    pub fn collision(&self) -> f64 {
        compensated_sum(self.values.iter().map(|v| v * v))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

/// `sum_j [nu(j) - mu(j)]_+`.
///
/// # Panics
/// If the dimensions differ.
pub fn tv_distance(mu: &DistVector, nu: &DistVector) -> f64 {
    tv_slices(&mu.values, &nu.values)
}

fn tv_slices(mu: &[f64], nu: &[f64]) -> f64 {
    assert_eq!(mu.len(), nu.len(), "tv between vectors of different dimension");
    compensated_sum(mu.iter().zip(nu).map(|(m, v)| (v - m).max(0.0))).clamp(0.0, 1.0)
}

// out = mu P, pushing mass along the rows of `src`.
fn step_into<S: RowSource + ?Sized>(src: &S, mu: &[f64], out: &mut [f64], buf: &mut Vec<(usize, f64)>) {
    out.fill(0.0);
    let matrix = src.as_matrix();
    for (i, &m) in mu.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        if let Some(mat) = matrix {
            let (cols, vals) = mat.row(i);
            for (&c, &p) in cols.iter().zip(vals) {
                out[c] += m * p;
            }
        } else {
            src.fill_row(i, buf);
            for &(c, p) in buf.iter() {
                out[c] += m * p;
            }
        }
    }
}

fn renormalize(values: &mut [f64]) {
    let sum = compensated_sum(values.iter().copied());
    if (sum - 1.0).abs() > RENORM_DRIFT && sum > 0.0 {
        values.iter_mut().for_each(|v| *v /= sum);
    }
}

/// `mu P^t`.
pub fn propagate<S: RowSource + ?Sized>(src: &S, mu: &DistVector, t: usize) -> Result<DistVector> {
    if mu.n() != src.n() {
        return Err(Error::DimensionMismatch { expected: src.n(), found: mu.n() });
    }
    let mut cur = mu.values.clone();
    let mut next = vec![0.0; cur.len()];
    let mut buf = Vec::new();
    for s in 1..=t {
        step_into(src, &cur, &mut next, &mut buf);
        std::mem::swap(&mut cur, &mut next);
        if s % RENORM_EVERY == 0 {
            renormalize(&mut cur);
        }
    }
    Ok(DistVector { values: cur })
}

/// Evolves `delta_i` for every start and records `visit(P^t(i, .))` at every
/// `t` in `times` (ascending). Materialized matrices run one start
/// per task; streamed rows are generated once per step for all starts.
fn evolve_starts<S, F, R>(src: &S, starts: &[usize], times: &[usize], visit: F) -> Vec<Vec<R>>
where
    S: RowSource + ?Sized,
    F: Fn(&[f64]) -> R + Sync,
    R: Send,
{
    let n = src.n();
    let t_max = times.last().copied().unwrap_or(0);
    if src.as_matrix().is_some() {
        return starts
            .par_iter()
            .map(|&i| {
                let mut cur = DistVector::delta(n, i).values;
                let mut next = vec![0.0; n];
                let mut buf = Vec::new();
                let mut out = Vec::with_capacity(times.len());
                let mut k = 0;
                for s in 0..=t_max {
                    if s > 0 {
                        step_into(src, &cur, &mut next, &mut buf);
                        std::mem::swap(&mut cur, &mut next);
                        if s % RENORM_EVERY == 0 {
                            renormalize(&mut cur);
                        }
                    }
                    while k < times.len() && times[k] == s {
                        out.push(visit(&cur));
                        k += 1;
                    }
                }
                out
            })
            .collect();
    }
    let mut cur: Vec<Vec<f64>> = starts.iter().map(|&i| DistVector::delta(n, i).values).collect();
    let mut next: Vec<Vec<f64>> = vec![vec![0.0; n]; starts.len()];
    let mut out: Vec<Vec<R>> = starts.iter().map(|_| Vec::with_capacity(times.len())).collect();
    let mut buf = Vec::new();
    let mut k = 0;
    for s in 0..=t_max {
        if s > 0 {
            next.iter_mut().for_each(|v| v.fill(0.0));
            for i in 0..n {
                if cur.iter().all(|v| v[i] == 0.0) {
                    continue;
                }
                src.fill_row(i, &mut buf);
                for (c, nx) in cur.iter().zip(next.iter_mut()) {
                    let m = c[i];
                    if m != 0.0 {
                        for &(col, p) in &buf {
                            nx[col] += m * p;
                        }
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
            if s % RENORM_EVERY == 0 {
                cur.iter_mut().for_each(|v| renormalize(v));
            }
        }
        while k < times.len() && times[k] == s {
            let vals: Vec<R> = cur.par_iter().map(|v| visit(v)).collect();
            for (o, v) in out.iter_mut().zip(vals) {
                o.push(v);
            }
            k += 1;
        }
    }
    out
}

/// `h = floor(t_ent / 10)`.
pub fn proxy_horizon(t_ent: f64) -> usize {
    (t_ent / 10.0).floor() as usize
}

/// `pi_hat = uniform P^h` with `h = floor(t_ent / 10)`.
pub fn pi_hat<S: RowSource + ?Sized>(src: &S, t_ent: f64) -> Result<DistVector> {
    if !(t_ent > 0.0 && t_ent.is_finite()) {
        return Err(Error::DegenerateEntropy);
    }
    pi_hat_at(src, proxy_horizon(t_ent))
}

/// `uniform P^h`.
pub fn pi_hat_at<S: RowSource + ?Sized>(src: &S, h: usize) -> Result<DistVector> {
    propagate(src, &DistVector::uniform(src.n()), h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Seeds the random delta starts of the uniqueness check.
    pub seed: u64,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stationary {
    pub dist: DistVector,
    pub iterations: usize,
    /// `tv(dist P, dist)`.
    pub residual: f64,
    /// Largest pairwise distance between the limits from the four starts.
    pub spread: f64,
}

fn iterate_to_fixed_point<S: RowSource + ?Sized>(
    src: &S,
    start: Vec<f64>,
    opts: &StationaryOptions,
) -> Result<(Vec<f64>, usize, f64)> {
    let mut cur = start;
    let mut next = vec![0.0; cur.len()];
    let mut buf = Vec::new();
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        step_into(src, &cur, &mut next, &mut buf);
        renormalize(&mut next);
        residual = tv_slices(&cur, &next);
        std::mem::swap(&mut cur, &mut next);
        if residual <= opts.tol {
            return Ok((cur, it, residual));
        }
    }
    Err(Error::MaxIterExceeded { max_iter: opts.max_iter, residual })
}

/// Power iteration from uniform, repeated from 3 random delta starts.
pub fn stationary<S: RowSource + ?Sized>(src: &S, opts: StationaryOptions) -> Result<Stationary> {
    if !(opts.tol > 0.0) {
        return Err(Error::Domain { name: "tol", value: opts.tol, domain: "tol > 0" });
    }
    let n = src.n();
    let (dist, iterations, residual) = iterate_to_fixed_point(src, DistVector::uniform(n).values, &opts)?;
    let mut rng = rng::substream(opts.seed, Domain::Starts, 0);
    let mut limits = vec![dist];
    for _ in 0..3 {
        let i = rng.random_range(0..n);
        limits.push(iterate_to_fixed_point(src, DistVector::delta(n, i).values, &opts)?.0);
    }
    let mut spread: f64 = 0.0;
    for a in 0..limits.len() {
        for b in a + 1..limits.len() {
            spread = spread.max(tv_slices(&limits[a], &limits[b]));
        }
    }
    if spread > 10.0 * opts.tol {
        return Err(Error::MultipleClasses { tv: spread });
    }
    let dist = DistVector { values: limits.swap_remove(0) };
    Ok(Stationary { dist, iterations, residual, spread })
}

/// First `t <= horizon` with `tv(P^t(i, .), reference) <= eps`.
pub fn mixing_time<S: RowSource + ?Sized>(
    src: &S,
    i: usize,
    eps: f64,
    reference: &DistVector,
    horizon: usize,
) -> Result<usize> {
    let n = src.n();
    if i >= n {
        return Err(Error::OutOfRange { index: i, n });
    }
    if reference.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: reference.n() });
    }
    let mut cur = DistVector::delta(n, i).values;
    let mut next = vec![0.0; n];
    let mut buf = Vec::new();
    for t in 0..=horizon {
        if t > 0 {
            step_into(src, &cur, &mut next, &mut buf);
            std::mem::swap(&mut cur, &mut next);
            if t % RENORM_EVERY == 0 {
                renormalize(&mut cur);
            }
        }
        if tv_slices(&cur, &reference.values) <= eps {
            return Ok(t);
        }
    }
    Err(Error::HorizonExceeded { horizon, eps })
}

/// `max_i t_mix^{(i)}(eps)` over `starts`, all computed in one sweep.
pub fn worst_mixing_time<S: RowSource + ?Sized>(
    src: &S,
    starts: &[usize],
    eps: f64,
    reference: &DistVector,
    horizon: usize,
) -> Result<usize> {
    let times: Vec<usize> = (0..=horizon).collect();
    let curves = evolve_starts(src, starts, &times, |v| tv_slices(v, &reference.values));
    let mut worst = 0;
    for curve in curves {
        match curve.iter().position(|&d| d <= eps) {
            Some(t) => worst = worst.max(t),
            None => return Err(Error::HorizonExceeded { horizon, eps }),
        }
    }
    Ok(worst)
}

/// Which start states enter the max over `i`.
#[derive(Debug, Clone, PartialEq)]
pub enum StartPolicy {
    All,
    /// `m` distinct states sampled from the seed, plus the rows of minimal
    /// and maximal entropy.
    Sample { m: usize, seed: u64 },
    /// `All` up to [`StartPolicy::EXHAUSTIVE_LIMIT`] states, `Sample` beyond.
    Auto { m: usize, seed: u64 },
    Explicit(Vec<usize>),
}

impl StartPolicy {
    pub const EXHAUSTIVE_LIMIT: usize = 2048;
    pub const DEFAULT_SAMPLE: usize = 64;

    /// Sorted, deduplicated start states.
    pub fn resolve<S: RowSource + ?Sized>(&self, src: &S) -> Vec<usize> {
        let n = src.n();
        let mut starts = match self {
            StartPolicy::All => (0..n).collect(),
            StartPolicy::Explicit(v) => v.iter().copied().filter(|&i| i < n).collect(),
            StartPolicy::Auto { .. } if n <= Self::EXHAUSTIVE_LIMIT => (0..n).collect(),
            StartPolicy::Sample { m, seed } | StartPolicy::Auto { m, seed } => {
                let mut rng = rng::substream(*seed, Domain::Starts, 1);
                let mut v = index::sample(&mut rng, n, (*m).min(n)).into_vec();
                let (lo, hi) = extremal_entropy_rows(src);
                v.push(lo);
                v.push(hi);
                v
            }
        };
        starts.sort_unstable();
        starts.dedup();
        starts
    }
}

/// Rows of minimal and maximal entropy (first index on ties).
pub fn extremal_entropy_rows<S: RowSource + ?Sized>(src: &S) -> (usize, usize) {
    let mut buf = Vec::new();
    let (mut lo, mut hi) = ((0, f64::INFINITY), (0, f64::NEG_INFINITY));
    for i in 0..src.n() {
        src.fill_row(i, &mut buf);
        let e = -compensated_sum(buf.iter().map(|&(_, p)| if p > 0.0 { p * p.ln() } else { 0.0 }));
        if e < lo.1 {
            lo = (i, e);
        }
        if e > hi.1 {
            hi = (i, e);
        }
    }
    (lo.0, hi.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub t: usize,
    pub lambda: f64,
    pub tv_min: f64,
    pub tv_mean: f64,
    pub tv_max: f64,
    pub n_starts: usize,
}

/// Distance to the reference along a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffProfile {
    pub t_ent: f64,
    pub starts: Vec<usize>,
    pub rows: Vec<ProfileRow>,
}

impl CutoffProfile {
    pub const CSV_HEADER: &'static str = "t,lambda,tv_min,tv_mean,tv_max,n_starts";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{},{}", r.t, r.lambda, r.tv_min, r.tv_mean, r.tv_max, r.n_starts);
        }
        out
    }

    pub fn at(&self, t: usize) -> Option<&ProfileRow> {
        self.rows.iter().find(|r| r.t == t)
    }
}

/// Time grid `round(lambda * t_ent)`, deduplicated in order.
pub fn lambda_grid(t_ent: f64, lambdas: &[f64]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for &l in lambdas {
        let t = (l * t_ent).round().max(0.0) as usize;
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// `tv(P^t(i, .), reference)` summarized over `starts`, one row per `t` in
/// `t_grid` (kept in the given order).
pub fn distance_profile<S: RowSource + ?Sized>(
    src: &S,
    starts: &[usize],
    t_grid: &[usize],
    reference: &DistVector,
    t_ent: f64,
) -> Result<CutoffProfile> {
    let n = src.n();
    if reference.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: reference.n() });
    }
    if let Some(&bad) = starts.iter().find(|&&i| i >= n) {
        return Err(Error::OutOfRange { index: bad, n });
    }
    let mut times = t_grid.to_vec();
    times.sort_unstable();
    times.dedup();
    let curves = evolve_starts(src, starts, &times, |v| tv_slices(v, &reference.values));
    let rows = t_grid
        .iter()
        .map(|&t| {
            let k = times.binary_search(&t).expect("grid time present");
            let col: Vec<f64> = curves.iter().map(|c| c[k]).collect();
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &d| (a.min(d), b.max(d)));
            let mean = compensated_sum(col.iter().copied()) / col.len().max(1) as f64;
            ProfileRow {
                t,
                lambda: t as f64 / t_ent,
                tv_min: if col.is_empty() { 0.0 } else { lo },
                tv_mean: mean.clamp(lo.min(mean), hi.max(mean)),
                tv_max: if col.is_empty() { 0.0 } else { hi },
                n_starts: col.len(),
            }
        })
        .collect();
    Ok(CutoffProfile { t_ent, starts: starts.to_vec(), rows })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundReport {
    /// Monte Carlo `Q_i(rho(t) > theta)`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `tv(nu, P^t(i, .)) + sqrt(sum_j nu(j)^2 / theta)`.
    pub rhs: f64,
    pub slack: f64,
    /// `lhs > rhs + 4 stderr`.
    pub violated: bool,
}

/// Compares the probability of following a heavy path with the distance
/// from `nu` plus a collision term. The environment is realized first so the
/// walks and the exact `P^t` see the same matrix.
pub fn lower_bound_check(
    env: &mut LazyEnvironment,
    i: usize,
    t: usize,
    theta: f64,
    nu: &DistVector,
    trials: usize,
    seed: u64,
) -> Result<LowerBoundReport> {
    if !(theta > 0.0) {
        return Err(Error::Domain { name: "theta", value: theta, domain: "theta > 0" });
    }
    let matrix = env.realize();
    let pt = propagate(&matrix, &DistVector::delta(env.n(), i), t)?;
    let rhs = tv_distance(&pt, nu) + (nu.collision() / theta).sqrt();
    let log_theta = theta.ln();
    let mut hits = 0usize;
    for k in 0..trials {
        let mut walk = rng::substream(seed, Domain::Walk, k as u64);
        let rec = walker::sample_path(env, i, t, &mut walk)?;
        hits += (rec.log_weight > log_theta) as usize;
    }
    let m = trials.max(1) as f64;
    let lhs = hits as f64 / m;
    let lhs_stderr = (lhs * (1.0 - lhs) / m).sqrt();
    Ok(LowerBoundReport { lhs, lhs_stderr, rhs, slack: rhs - lhs, violated: lhs > rhs + 4.0 * lhs_stderr })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionReport {
    pub h: usize,
    pub trials: usize,
    pub estimate: f64,
    pub stderr: f64,
    /// `2 (h + 1)^2 / n`.
    pub bound: f64,
}

impl CollisionReport {
    pub fn within_bound(&self, sigmas: f64) -> bool {
        self.estimate <= self.bound + sigmas * self.stderr
    }
}

/// Annealed `E[sum_j pi_hat(j)^2] = P(X_h = Y_h)` for two walks from uniform
/// starts in one fresh environment per trial. The last step of `Y` is
/// averaged out exactly given everything before it.
pub fn pi_hat_collision(profiles: Arc<[RowProfile]>, h: usize, trials: usize, seed: u64) -> Result<CollisionReport> {
    let n = profiles.len();
    if n == 0 {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    let bound = 2.0 * ((h + 1) as f64).powi(2) / n as f64;
    if h == 0 {
        return Ok(CollisionReport { h, trials, estimate: 1.0 / n as f64, stderr: 0.0, bound });
    }
    let mut env = LazyEnvironment::from_shared(profiles, seed)?;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for k in 0..trials {
        let value = {
            env.reset(rng::child_seed(seed, Domain::Trial, k as u64));
            let mut walk = rng::substream(seed, Domain::Walk, k as u64);
            let mut x = walk.random_range(0..n);
            for _ in 0..h {
                x = env.step(x, &mut walk).next;
            }
            let mut y = walk.random_range(0..n);
            for _ in 0..h - 1 {
                y = env.step(y, &mut walk).next;
            }
            let profile = env.profile(y).clone();
            let injection = env.injection(y);
            let used = injection.map_or(0, |s| s.range_len());
            let x_used = injection.is_some_and(|s| s.in_range(x));
            compensated_sum(profile.weights().iter().enumerate().map(|(slot, &p)| {
                match env.lookup(y, slot) {
                    Some(target) => p * (target == x) as u8 as f64,
                    None if !x_used && used < n => p / (n - used) as f64,
                    None => 0.0,
                }
            }))
        };
        sum += value;
        sum_sq += value * value;
    }
    let m = trials.max(1) as f64;
    let estimate = sum / m;
    let var = (sum_sq / m - estimate * estimate).max(0.0);
    Ok(CollisionReport { h, trials, estimate, stderr: (var / m).sqrt(), bound })
}
