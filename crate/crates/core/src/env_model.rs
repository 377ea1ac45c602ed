//! The random environment: ranked row profiles, lazily generated row
//! permutations, sequential stepping and full matrix realization.
//!
//! Row `i` of the random matrix puts mass `p_{i,j}` on state `sigma_i(j)`, where
//! `sigma_i` is a uniform permutation of the states. [`LazyEnvironment`] builds
//! each `sigma_i` one slot at a time, only when a walker or a forward
//! exploration first uses that slot.
//!
//! States and slots are 0-based throughout the crate; text formats are 1-based.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Domain, Stream};

/// Tolerance on row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Compensated (Neumaier) summation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Correctly rounded sum (Shewchuk's partials), independent of order.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut k = 0;
        for i in 0..partials.len() {
            let mut y = partials[i];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[k] = lo;
                k += 1;
            }
            x = hi;
        }
        partials.truncate(k);
        partials.push(x);
    }
    let mut hi = 0.0;
    while let Some(x) = partials.pop() {
        let y = hi;
        hi = x + y;
        let lo = x - (hi - y);
        if lo != 0.0 {
            // Round half-even across the remaining partials.
            if let Some(&next) = partials.last() {
                if (lo < 0.0 && next < 0.0) || (lo > 0.0 && next > 0.0) {
                    let y2 = lo * 2.0;
                    let x2 = hi + y2;
                    if y2 == x2 - hi {
                        hi = x2;
                    }
                }
            }
            break;
        }
    }
    hi
}

/// The ranked nonzero transition probabilities of one row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowProfile {
    row_id: usize,
    weights: Vec<f64>,
    n: usize,
}

impl RowProfile {
    /// Validates an already ranked list of nonzero weights.
    pub fn new(row_id: usize, weights: Vec<f64>, n: usize) -> Result<Self> {
        let bad = |reason: String| Error::InvalidProfile { row: row_id, reason };
        if weights.is_empty() {
            return Err(bad("no positive weight".into()));
        }
        if weights.len() > n {
            return Err(bad(format!("{} weights for n = {n}", weights.len())));
        }
        for (k, &w) in weights.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(bad(format!("weight {w} at rank {k} is not a positive number")));
            }
            if k > 0 && w > weights[k - 1] {
                return Err(bad(format!("weights not non-increasing at rank {k}")));
            }
        }
        let sum = compensated_sum(weights.iter().copied());
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(bad(format!("weights sum to {sum}")));
        }
        Ok(Self { row_id, weights, n })
    }

    /// Drops zeros and ranks the remaining entries before validating.
    pub fn from_unsorted(row_id: usize, mut weights: Vec<f64>, n: usize) -> Result<Self> {
        weights.retain(|&w| w != 0.0);
        weights.sort_by(|a, b| b.total_cmp(a));
        Self::new(row_id, weights, n)
    }

    /// Normalizes positive raw masses into a profile.
    pub fn normalized(row_id: usize, raw: &[f64], n: usize) -> Result<Self> {
        let total = compensated_sum(raw.iter().copied());
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidProfile {
                row: row_id,
                reason: format!("raw masses sum to {total}"),
            });
        }
        let weights = raw.iter().map(|w| w / total).collect();
        Self::from_unsorted(row_id, weights, n)
    }

    /// `d` equal weights `1/d`.
    pub fn uniform(row_id: usize, d: usize, n: usize) -> Result<Self> {
        if d == 0 || d > n {
            return Err(Error::DegreeTooLarge { row: row_id, degree: d, n });
        }
        Self::new(row_id, vec![1.0 / d as f64; d], n)
    }

    pub fn row_id(&self) -> usize {
        self.row_id
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Ranked weights, largest first.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of nonzero entries.
    pub fn support(&self) -> usize {
        self.weights.len()
    }

    /// Row entropy in nats.
    pub fn entropy(&self) -> f64 {
        -compensated_sum(self.weights.iter().map(|&p| p * p.ln()))
    }

    /// Weight of slot `j`; zero beyond the support.
    pub fn weight(&self, j: usize) -> f64 {
        self.weights.get(j).copied().unwrap_or(0.0)
    }

    /// Draw a slot with probability equal to its weight.
    pub fn sample_slot<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng::pick_weighted(rng, &self.weights, 1.0)
    }
}

/// Checks that a profile set is square: one row per state, all of the same `n`.
pub fn validate_profiles(profiles: &[RowProfile]) -> Result<usize> {
    let n = profiles.len();
    if n == 0 {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    for (i, p) in profiles.iter().enumerate() {
        if p.n != n {
            return Err(Error::DimensionMismatch { expected: n, found: p.n });
        }
        if p.row_id != i {
            return Err(Error::InvalidProfile {
                row: i,
                reason: format!("row id {} at position {i}", p.row_id),
            });
        }
    }
    Ok(n)
}

/// Partial injection `sigma_i` from slots to states.
#[derive(Debug, Clone, Default)]
pub struct PartialInjection {
    forward: HashMap<usize, usize>,
    range: HashSet<usize>,
    // Explicit list of unused states, maintained once the range passes n/2.
    complement: Option<Vec<usize>>,
}

impl PartialInjection {
    pub fn get(&self, slot: usize) -> Option<usize> {
        self.forward.get(&slot).copied()
    }

    pub fn domain_len(&self) -> usize {
        self.forward.len()
    }

    pub fn range_len(&self) -> usize {
        self.range.len()
    }

    pub fn in_range(&self, state: usize) -> bool {
        self.range.contains(&state)
    }

    /// The first target an untouched row would draw from `rng`.
    pub fn fresh_draw<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
        Self::default().draw_unused(n, rng)
    }

    /// Uniform draw from `[n] \ Ran`, by rejection while the range is at most
    /// half full and from an explicit complement afterwards.
    fn draw_unused<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R) -> usize {
        debug_assert!(self.range.len() < n);
        if self.complement.is_none() && 2 * self.range.len() > n {
            self.complement = Some((0..n).filter(|s| !self.range.contains(s)).collect());
        }
        match &mut self.complement {
            Some(free) => {
                let k = rng.random_range(0..free.len());
                free.swap_remove(k)
            }
            None => loop {
                let k = rng.random_range(0..n);
                if !self.range.contains(&k) {
                    return k;
                }
            },
        }
    }

    fn assign<R: Rng + ?Sized>(&mut self, slot: usize, n: usize, rng: &mut R) -> usize {
        if let Some(s) = self.get(slot) {
            return s;
        }
        let state = self.draw_unused(n, rng);
        self.forward.insert(slot, state);
        self.range.insert(state);
        state
    }
}

#[derive(Debug, Clone)]
struct RowState {
    sigma: PartialInjection,
    stream: Stream,
}

/// Outcome of one sequential-generation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next: usize,
    pub weight: f64,
    pub slot: usize,
}

/// The environment `sigma = (sigma_i)` generated on demand.
///
/// Target draws for row `i` come from the substream `(seed, Permutation, i)`,
/// so the realization of a row depends only on the order in which *its* slots
/// are resolved.
#[derive(Debug, Clone)]
pub struct LazyEnvironment {
    n: usize,
    seed: u64,
    profiles: Arc<[RowProfile]>,
    rows: HashMap<usize, RowState>,
}

impl LazyEnvironment {
    pub fn new(profiles: Vec<RowProfile>, seed: u64) -> Result<Self> {
        Self::from_shared(profiles.into(), seed)
    }

    /// Build on a shared profile set; cheap to repeat for annealed trials.
    pub fn from_shared(profiles: Arc<[RowProfile]>, seed: u64) -> Result<Self> {
        let n = validate_profiles(&profiles)?;
        Ok(Self { n, seed, profiles, rows: HashMap::new() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn profiles(&self) -> &[RowProfile] {
        &self.profiles
    }

    pub fn shared_profiles(&self) -> Arc<[RowProfile]> {
        Arc::clone(&self.profiles)
    }

    pub fn profile(&self, i: usize) -> &RowProfile {
        &self.profiles[i]
    }

    /// Forget every assignment and reseed. Used between annealed trials.
    pub fn reset(&mut self, seed: u64) {
        self.seed = seed;
        self.rows.clear();
    }

    /// `|Dom(sigma_i)|`.
    pub fn domain_len(&self, i: usize) -> usize {
        self.rows.get(&i).map_or(0, |r| r.sigma.domain_len())
    }

    /// `|Ran(sigma_i)|`.
    pub fn range_len(&self, i: usize) -> usize {
        self.rows.get(&i).map_or(0, |r| r.sigma.range_len())
    }

    /// The current partial injection of row `i`, if any slot is assigned.
    pub fn injection(&self, i: usize) -> Option<&PartialInjection> {
        self.rows.get(&i).map(|r| &r.sigma)
    }

    /// `sigma_i(j)` if already assigned.
    pub fn lookup(&self, i: usize, j: usize) -> Option<usize> {
        self.rows.get(&i).and_then(|r| r.sigma.get(j))
    }

    fn check(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.n {
            return Err(Error::OutOfRange { index: i, n: self.n });
        }
        if j >= self.n {
            return Err(Error::OutOfRange { index: j, n: self.n });
        }
        Ok(())
    }

    fn row_state(&mut self, i: usize) -> &mut RowState {
        let seed = self.seed;
        self.rows.entry(i).or_insert_with(|| RowState {
            sigma: PartialInjection::default(),
            stream: rng::substream(seed, Domain::Permutation, i as u64),
        })
    }

    /// `sigma_i(j)`, drawing it uniformly from the unused states on first access.
    pub fn resolve(&mut self, i: usize, j: usize) -> Result<usize> {
        self.check(i, j)?;
        let n = self.n;
        let row = self.row_state(i);
        let RowState { sigma, stream } = row;
        Ok(sigma.assign(j, n, stream))
    }

    /// Like [`resolve`](Self::resolve) but draws any new target from `targets`.
    pub fn resolve_with<R: Rng + ?Sized>(&mut self, i: usize, j: usize, targets: &mut R) -> Result<usize> {
        self.check(i, j)?;
        let n = self.n;
        Ok(self.row_state(i).sigma.assign(j, n, targets))
    }

    /// One step of sequential generation from state `i`: draw a slot by its
    /// weight, resolve it, move.
    pub fn step<R: Rng + ?Sized>(&mut self, i: usize, walk: &mut R) -> Step {
        let profile = &self.profiles[i];
        let slot = profile.sample_slot(walk);
        let weight = profile.weight(slot);
        let next = self.resolve(i, slot).expect("sampled slot lies within [n]");
        Step { next, weight, slot }
    }

    /// As [`step`](Self::step), with new targets drawn from `targets`.
    pub fn step_with<R1: Rng + ?Sized, R2: Rng + ?Sized>(
        &mut self,
        i: usize,
        walk: &mut R1,
        targets: &mut R2,
    ) -> Step {
        let profile = &self.profiles[i];
        let slot = profile.sample_slot(walk);
        let weight = profile.weight(slot);
        let next = self.resolve_with(i, slot, targets).expect("sampled slot lies within [n]");
        Step { next, weight, slot }
    }

    /// Resolve every nonzero slot (in slot order, keeping earlier assignments)
    /// and return the realized matrix.
    pub fn realize(&mut self) -> StochasticMatrix {
        let n = self.n;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let support = self.profiles[i].support();
            let mut entries = Vec::with_capacity(support);
            for j in 0..support {
                let target = self.resolve(i, j).expect("slot within [n]");
                entries.push((target, self.profiles[i].weights[j]));
            }
            rows.push(entries);
        }
        StochasticMatrix::from_rows_unchecked(n, rows)
    }
}

/// Read access to transition rows, materialized or regenerated on demand.
pub trait RowSource: Sync {
    fn n(&self) -> usize;

    /// Overwrite `buf` with the `(column, probability)` entries of row `i`.
    fn fill_row(&self, i: usize, buf: &mut Vec<(usize, f64)>);

    /// The stored matrix, when rows are materialized.
    fn as_matrix(&self) -> Option<&StochasticMatrix> {
        None
    }
}

/// Immutable sparse stochastic matrix in compressed row form.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl StochasticMatrix {
    /// Builds from per-row `(column, probability)` lists; zero entries are dropped.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: rows.len() });
        }
        for (i, row) in rows.iter().enumerate() {
            let mut seen = HashSet::new();
            for &(c, p) in row {
                if c >= n {
                    return Err(Error::OutOfRange { index: c, n });
                }
                if !(p >= 0.0 && p.is_finite()) {
                    return Err(Error::InvalidProfile { row: i, reason: format!("entry {p} at column {c}") });
                }
                if !seen.insert(c) {
                    return Err(Error::InvalidProfile { row: i, reason: format!("column {c} repeated") });
                }
            }
            let sum = compensated_sum(row.iter().map(|e| e.1));
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidProfile { row: i, reason: format!("row sums to {sum}") });
            }
        }
        Ok(Self::from_rows_unchecked(n, rows))
    }

    pub(crate) fn from_rows_unchecked(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nnz = rows.iter().map(Vec::len).sum();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        offsets.push(0);
        for mut row in rows {
            row.retain(|e| e.1 != 0.0);
            row.sort_by_key(|e| e.0);
            for (c, p) in row {
                cols.push(c);
                vals.push(p);
            }
            offsets.push(cols.len());
        }
        Self { n, offsets, cols, vals }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows_unchecked(n, (0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    /// Dense constructor, mainly for small fixtures.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let sparse = rows
            .iter()
            .map(|r| r.iter().copied().enumerate().filter(|e| e.1 != 0.0).collect())
            .collect();
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: r.len() });
            }
        }
        Self::from_rows(n, sparse)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Column indices and probabilities of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    /// `P(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    /// Sample the next state from row `i`.
    pub fn sample_next<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> (usize, f64) {
        let (cols, vals) = self.row(i);
        let k = rng::pick_weighted(rng, vals, 1.0);
        (cols[k], vals[k])
    }

    /// Entries of the matrix transpose, i.e. in-arrows per column.
    pub fn transpose_rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&c, &p) in cols.iter().zip(vals) {
                out[c].push((i, p));
            }
        }
        out
    }
}

impl RowSource for StochasticMatrix {
    fn n(&self) -> usize {
        self.n
    }

    fn fill_row(&self, i: usize, buf: &mut Vec<(usize, f64)>) {
        buf.clear();
        let (cols, vals) = self.row(i);
        buf.extend(cols.iter().copied().zip(vals.iter().copied()));
    }

    fn as_matrix(&self) -> Option<&StochasticMatrix> {
        Some(self)
    }
}

/// Draw a full environment and place the profile weights: `P(i, sigma_i(j)) = p_{i,j}`.
///
/// Agrees with a [`LazyEnvironment`] of the same seed whose rows are resolved
/// in slot order.
pub fn realize_matrix(profiles: Vec<RowProfile>, seed: u64) -> Result<StochasticMatrix> {
    Ok(LazyEnvironment::new(profiles, seed)?.realize())
}
