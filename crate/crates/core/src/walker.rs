//! Sampled trajectories: path weights, tree excess, first repeats, the
//! regenerated star process and the coupling between the two.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;

use crate::env_model::{LazyEnvironment, PartialInjection, RowProfile};
use crate::error::{Error, Result};
use crate::rng::{self, Domain, Stream};
use crate::stats;

/// Quenched trials share one environment; annealed trials redraw it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Quenched,
    Annealed,
}

/// One walk `X_0..X_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub states: Vec<usize>,
    /// `W_s = P(X_{s-1}, X_s)` for `s = 1..=t`.
    pub weights: Vec<f64>,
    /// `sum_s ln W_s`.
    pub log_weight: f64,
    pub tree_excess: usize,
    /// First `t` with `X_t` in `{X_0..X_{t-1}}`; `None` past the horizon.
    pub first_repeat: Option<usize>,
}

impl TrajectoryRecord {
    pub fn new(states: Vec<usize>, weights: Vec<f64>) -> Self {
        assert_eq!(states.len(), weights.len() + 1, "one weight per step");
        Self {
            log_weight: weights.iter().map(|w| w.ln()).sum(),
            tree_excess: tree_excess(&states),
            first_repeat: first_repeat_time(&states),
            states,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `rho(t) = prod W_s`.
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }

    pub fn end(&self) -> usize {
        *self.states.last().expect("records hold X_0")
    }

    /// `self` followed by `next`, which must start where `self` ends.
    pub fn concat(&self, next: &TrajectoryRecord) -> TrajectoryRecord {
        assert_eq!(self.end(), next.states[0], "paths do not join");
        let mut states = self.states.clone();
        states.extend_from_slice(&next.states[1..]);
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&next.weights);
        let mut out = TrajectoryRecord::new(states, weights);
        out.log_weight = self.log_weight + next.log_weight;
        out
    }
}

/// `1 + |E| - |V|` of the graph traced by `path`, edges counted once.
pub fn tree_excess(path: &[usize]) -> usize {
    if path.is_empty() {
        return 0;
    }
    let vertices: HashSet<usize> = path.iter().copied().collect();
    let edges: HashSet<(usize, usize)> = path.windows(2).map(|w| (w[0], w[1])).collect();
    1 + edges.len() - vertices.len()
}

/// Index of the first revisit.
pub fn first_repeat_time(path: &[usize]) -> Option<usize> {
    let mut seen = HashSet::with_capacity(path.len());
    path.iter().position(|s| !seen.insert(*s))
}

/// A `t`-step walk from `i` in `env`, resolving slots as needed.
pub fn sample_path<R: Rng + ?Sized>(env: &mut LazyEnvironment, i: usize, t: usize, rng: &mut R) -> Result<TrajectoryRecord> {
    if i >= env.n() {
        return Err(Error::OutOfRange { index: i, n: env.n() });
    }
    let mut states = Vec::with_capacity(t + 1);
    let mut weights = Vec::with_capacity(t);
    states.push(i);
    let mut x = i;
    for _ in 0..t {
        let step = env.step(x, rng);
        x = step.next;
        states.push(x);
        weights.push(step.weight);
    }
    Ok(TrajectoryRecord::new(states, weights))
}

/// `min_s W_s < n^-gamma`.
pub fn small_weight_flag(record: &TrajectoryRecord, gamma: f64, n: usize) -> bool {
    let cut = (n as f64).powf(-gamma);
    record.weights.iter().any(|&w| w < cut)
}

/// `t` i.i.d. pairs `(X*, W*)`: a uniform state and a slot weight of that
/// row drawn with probability equal to itself.
pub fn star_samples<R: Rng + ?Sized>(profiles: &[RowProfile], t: usize, rng: &mut R) -> Vec<(usize, f64)> {
    let n = profiles.len();
    (0..t)
        .map(|_| {
            let x = rng.random_range(0..n);
            let p = &profiles[x];
            (x, p.weight(p.sample_slot(rng)))
        })
        .collect()
}

fn trial_env(profiles: &Arc<[RowProfile]>, seed: u64, k: usize) -> Result<LazyEnvironment> {
    LazyEnvironment::from_shared(Arc::clone(profiles), rng::child_seed(seed, Domain::Trial, k as u64))
}

const TARGETS: Domain = Domain::Custom(0x7467);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CouplingReport {
    pub t: usize,
    pub trials: usize,
    /// Trials with `T >= t`.
    pub coupled: usize,
    /// Trials with `T >= t` on which the two processes differ.
    pub mismatches: usize,
    /// Trials with `T < t` on which they differ (allowed).
    pub diverged_after_repeat: usize,
}

impl CouplingReport {
    pub fn exact(&self) -> bool {
        self.mismatches == 0
    }
}

/// Runs the sequential walk and the walk whose row is regenerated afresh at
/// every step off the same slot and target streams, in a fresh environment
/// per trial.
pub fn coupling_check(profiles: Arc<[RowProfile]>, t: usize, trials: usize, seed: u64) -> Result<CouplingReport> {
    if t == 0 {
        return Err(Error::Domain { name: "t", value: 0.0, domain: "t >= 1" });
    }
    let n = profiles.len();
    let mut report = CouplingReport { t, trials, coupled: 0, mismatches: 0, diverged_after_repeat: 0 };
    for k in 0..trials {
        let mut env = trial_env(&profiles, seed, k)?;
        let walk = rng::substream(seed, Domain::Walk, k as u64);
        let targets = rng::substream(seed, TARGETS, k as u64);

        let (mut w, mut g) = (walk.clone(), targets.clone());
        let x0 = w.random_range(0..n);
        let mut seq = vec![x0];
        let mut seq_w = Vec::with_capacity(t);
        for _ in 0..t {
            let step = env.step_with(*seq.last().unwrap(), &mut w, &mut g);
            seq.push(step.next);
            seq_w.push(step.weight);
        }

        let (mut w, mut g): (Stream, Stream) = (walk, targets);
        let y0 = w.random_range(0..n);
        let mut fresh = vec![y0];
        let mut fresh_w = Vec::with_capacity(t);
        for _ in 0..t {
            let p = &profiles[*fresh.last().unwrap()];
            let slot = p.sample_slot(&mut w);
            let next = PartialInjection::fresh_draw(n, &mut g);
            fresh.push(next);
            fresh_w.push(p.weight(slot));
        }

        let same = seq == fresh && seq_w == fresh_w;
        match first_repeat_time(&seq) {
            Some(r) if r < t => report.diverged_after_repeat += !same as usize,
            _ => {
                report.coupled += 1;
                report.mismatches += !same as usize;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxReport {
    pub t: usize,
    pub trials: usize,
    pub rate_ge1: f64,
    pub stderr_ge1: f64,
    /// `t^2 / n`.
    pub bound_ge1: f64,
    pub rate_ge2: f64,
    pub stderr_ge2: f64,
    /// `t^4 / n^2`.
    pub bound_ge2: f64,
}

impl TxReport {
    pub fn pass_ge1(&self) -> bool {
        self.rate_ge1 <= self.bound_ge1 + 4.0 * self.stderr_ge1
    }

    pub fn pass_ge2(&self) -> bool {
        self.rate_ge2 <= self.bound_ge2 + 4.0 * self.stderr_ge2
    }
}

fn rate(hits: usize, trials: usize) -> (f64, f64) {
    let m = trials.max(1) as f64;
    let p = hits as f64 / m;
    (p, (p * (1.0 - p) / m).sqrt())
}

/// Annealed rates of `TX >= 1` and `TX >= 2` for `t`-step walks from a
/// uniform start.
pub fn tx_domination_check(profiles: Arc<[RowProfile]>, t: usize, trials: usize, seed: u64) -> Result<TxReport> {
    let n = profiles.len();
    let (mut ge1, mut ge2) = (0, 0);
    for k in 0..trials {
        let mut env = trial_env(&profiles, seed, k)?;
        let mut walk = rng::substream(seed, Domain::Walk, k as u64);
        let x0 = walk.random_range(0..n);
        let tx = sample_path(&mut env, x0, t, &mut walk)?.tree_excess;
        ge1 += (tx >= 1) as usize;
        ge2 += (tx >= 2) as usize;
    }
    let (rate_ge1, stderr_ge1) = rate(ge1, trials);
    let (rate_ge2, stderr_ge2) = rate(ge2, trials);
    let (tf, nf) = (t as f64, n as f64);
    Ok(TxReport {
        t,
        trials,
        rate_ge1,
        stderr_ge1,
        bound_ge1: tf * tf / nf,
        rate_ge2,
        stderr_ge2,
        bound_ge2: tf.powi(4) / (nf * nf),
    })
}

/// Band counts of `ln rho(t)` against `[-(1+eps)Ht, -(1-eps)Ht]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationRow {
    /// `None` for the pooled row.
    pub start: Option<usize>,
    pub t: usize,
    pub eps: f64,
    pub below: usize,
    pub within: usize,
    pub above: usize,
}

impl ConcentrationRow {
    pub fn trials(&self) -> usize {
        self.below + self.within + self.above
    }

    fn frac(&self, k: usize) -> f64 {
        k as f64 / self.trials().max(1) as f64
    }

    pub fn frac_below(&self) -> f64 {
        self.frac(self.below)
    }

    pub fn frac_within(&self) -> f64 {
        self.frac(self.within)
    }

    pub fn frac_above(&self) -> f64 {
        self.frac(self.above)
    }

    /// Binomial standard error of a fraction.
    pub fn stderr(&self, frac: f64) -> f64 {
        (frac * (1.0 - frac) / self.trials().max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub h: f64,
    pub mode: Mode,
    pub per_start: Vec<ConcentrationRow>,
    pub pooled: ConcentrationRow,
}

impl ConcentrationReport {
    pub const CSV_HEADER: &'static str = "start,t,eps,frac_below,frac_within,frac_above,trials";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in self.per_start.iter().chain(std::iter::once(&self.pooled)) {
            let start = r.start.map_or_else(|| "all".to_string(), |s| s.to_string());
            let _ = writeln!(
                out,
                "{start},{},{},{},{},{},{}",
                r.t,
                r.eps,
                r.frac_below(),
                r.frac_within(),
                r.frac_above(),
                r.trials()
            );
        }
        out
    }
}

/// `trials` walks of length `t` from each start. Quenched mode keeps `env`
/// (and what earlier walks revealed); annealed mode redraws it per walk.
pub fn concentration_report(
    env: &mut LazyEnvironment,
    starts: &[usize],
    t: usize,
    eps: f64,
    trials: usize,
    mode: Mode,
    seed: u64,
) -> Result<ConcentrationReport> {
    if t == 0 {
        return Err(Error::Domain { name: "t", value: 0.0, domain: "t >= 1" });
    }
    if !(eps > 0.0) {
        return Err(Error::Domain { name: "eps", value: eps, domain: "eps > 0" });
    }
    let h = stats::avg_row_entropy(env.profiles());
    if !(h > 0.0) {
        return Err(Error::DegenerateEntropy);
    }
    let lo = -(1.0 + eps) * h * t as f64;
    let hi = -(1.0 - eps) * h * t as f64;
    let mut pooled = ConcentrationRow { start: None, t, eps, below: 0, within: 0, above: 0 };
    let mut per_start = Vec::with_capacity(starts.len());
    let mut k = 0u64;
    for &x in starts {
        let mut row = ConcentrationRow { start: Some(x), ..pooled };
        row.below = 0;
        row.within = 0;
        row.above = 0;
        for _ in 0..trials {
            if mode == Mode::Annealed {
                env.reset(rng::child_seed(seed, Domain::Trial, k));
            }
            let mut walk = rng::substream(seed, Domain::Walk, k);
            k += 1;
            let lw = sample_path(env, x, t, &mut walk)?.log_weight;
            if lw < lo {
                row.below += 1;
            } else if lw > hi {
                row.above += 1;
            } else {
                row.within += 1;
            }
        }
        pooled.below += row.below;
        pooled.within += row.within;
        pooled.above += row.above;
        per_start.push(row);
    }
    Ok(ConcentrationReport { h, mode, per_start, pooled })
}

/// Per-start rate of walks with some step weight below `n^-gamma`.
pub fn small_weight_rates(
    env: &mut LazyEnvironment,
    starts: &[usize],
    t: usize,
    gamma: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    let n = env.n();
    let mut k = 0u64;
    starts
        .iter()
        .map(|&x| {
            let mut hits = 0;
            for _ in 0..trials {
                let mut walk = rng::substream(seed, Domain::Walk, k);
                k += 1;
                hits += small_weight_flag(&sample_path(env, x, t, &mut walk)?, gamma, n) as usize;
            }
            Ok((x, hits as f64 / trials.max(1) as f64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{propagate, DistVector};
    use crate::ensembles::{EnsembleSpec, ParetoRows};
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn shared(spec: EnsembleSpec) -> Arc<[RowProfile]> {
        spec.profiles().unwrap().into()
    }

    fn env(spec: EnsembleSpec, seed: u64) -> LazyEnvironment {
        LazyEnvironment::new(spec.profiles().unwrap(), seed).unwrap()
    }

    #[test]
    fn tree_excess_examples() {
        assert_eq!(tree_excess(&[1, 2, 3, 4]), 0);
        assert_eq!(tree_excess(&[1, 2, 3, 1, 2, 3, 1]), 1);
        assert_eq!(tree_excess(&[1, 2, 1, 3, 1]), 2);
        assert_eq!(tree_excess(&[5]), 0);
        assert_eq!(tree_excess(&[5, 5]), 1);
    }

    #[test]
    fn first_repeat_examples() {
        assert_eq!(first_repeat_time(&[1, 2, 3, 4]), None);
        assert_eq!(first_repeat_time(&[1, 1, 2]), Some(1));
        assert_eq!(first_repeat_time(&[1, 2, 1, 3]), Some(2));
    }

    #[test]
    fn deterministic_and_constant_degree_weights() {
        let mut e = env(EnsembleSpec::r_out(30, 1, 0), 3);
        let mut rng = rng::substream(1, Domain::Walk, 0);
        let rec = sample_path(&mut e, 4, 12, &mut rng).unwrap();
        assert_eq!(rec.log_weight, 0.0);
        assert!(rec.weights.iter().all(|&w| w == 1.0));
        assert!(!small_weight_flag(&rec, 0.3, 30));

        let mut e = env(EnsembleSpec::r_out(500, 4, 0), 3);
        let rec = sample_path(&mut e, 0, 9, &mut rng).unwrap();
        assert!((rec.log_weight + 9.0 * 4f64.ln()).abs() < 1e-12);
        assert!((rec.weight() - 4f64.powi(-9)).abs() < 1e-9 * 4f64.powi(-9));
        assert!(!small_weight_flag(&rec, 0.3, 500));
        assert!(small_weight_flag(&rec, 0.0, 500));
        assert!(sample_path(&mut e, 500, 1, &mut rng).is_err());
    }

    #[test]
    fn weights_belong_to_visited_rows() {
        let spec = EnsembleSpec::pareto(40, 0.5, 2);
        let mut e = env(spec, 1);
        let mut rng = rng::substream(3, Domain::Walk, 0);
        for _ in 0..20 {
            let rec = sample_path(&mut e, 0, 15, &mut rng).unwrap();
            for (s, &w) in rec.weights.iter().enumerate() {
                assert!(e.profile(rec.states[s]).weights().contains(&w));
            }
        }
    }

    #[test]
    fn later_paths_see_earlier_assignments() {
        let mut e = env(EnsembleSpec::r_out(1000, 2, 0), 8);
        let mut rng = rng::substream(3, Domain::Walk, 0);
        let a = sample_path(&mut e, 0, 30, &mut rng).unwrap();
        let before = (0..1000).map(|i| e.domain_len(i)).sum::<usize>();
        assert!(before > 0);
        let b = sample_path(&mut e, 0, 30, &mut rng).unwrap();
        for w in [&a, &b] {
            for s in 0..30 {
                let slot = (0..2).find(|&j| e.lookup(w.states[s], j) == Some(w.states[s + 1]));
                assert!(slot.is_some());
            }
        }
    }

    #[test]
    fn star_process_law() {
        let uniform = EnsembleSpec::r_out(20, 5, 0).profiles().unwrap();
        let mut rng = rng::substream(4, Domain::Trial, 0);
        assert!(star_samples(&uniform, 100, &mut rng).iter().all(|p| p.1 == 0.2));

        let profiles = EnsembleSpec::pareto(20, 0.5, 6).profiles().unwrap();
        let h = stats::avg_row_entropy(&profiles);
        let samples = star_samples(&profiles, 100_000, &mut rng);
        let vals: Vec<f64> = samples.iter().map(|p| -p.1.ln() / h).collect();
        let m = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / m;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * sd / m.sqrt(), "{mean}");

        let mut counts = [0f64; 20];
        samples.iter().for_each(|p| counts[p.0] += 1.0);
        let e = m / 20.0;
        let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
        let crit = ChiSquared::new(19.0).unwrap().inverse_cdf(0.99);
        assert!(chi2 < crit, "{chi2} >= {crit}");
    }

    #[test]
    fn coupling_is_exact_before_the_first_repeat() {
        let r = coupling_check(shared(EnsembleSpec::r_out(50, 3, 0)), 1, 500, 1).unwrap();
        assert_eq!((r.coupled, r.mismatches), (500 - r.diverged_after_repeat, 0));
        let r = coupling_check(shared(EnsembleSpec::out_degrees(30, vec![2, 5], 0)), 12, 2000, 2).unwrap();
        assert!(r.exact() && r.coupled > 0 && r.coupled < 2000, "{r:?}");
        // Self-loop chain: T = 1 always.
        let r = coupling_check(shared(EnsembleSpec::r_out(1, 1, 0)), 3, 50, 0).unwrap();
        assert_eq!(r.coupled, 0);
        assert!(coupling_check(shared(EnsembleSpec::r_out(5, 1, 0)), 0, 1, 0).is_err());
    }

    #[test]
    fn tree_excess_rates() {
        let p = shared(EnsembleSpec::r_out(200, 2, 0));
        let r = tx_domination_check(Arc::clone(&p), 0, 100, 1).unwrap();
        assert_eq!(r.rate_ge1, 0.0);
        let r = tx_domination_check(Arc::clone(&p), 1, 40_000, 1).unwrap();
        assert!((r.rate_ge1 - 1.0 / 200.0).abs() < 4.0 * (0.005f64 * 0.995 / 40_000.0).sqrt(), "{r:?}");
        let r = tx_domination_check(p, 8, 5000, 2).unwrap();
        assert!(r.pass_ge1() && r.pass_ge2(), "{r:?}");
    }

    #[test]
    fn concentration_examples() {
        let mut e = env(EnsembleSpec::r_out(300, 3, 0), 1);
        for mode in [Mode::Quenched, Mode::Annealed] {
            let r = concentration_report(&mut e, &[0, 5], 6, 0.01, 50, mode, 2).unwrap();
            assert_eq!(r.pooled.frac_within(), 1.0);
            assert_eq!(r.pooled.trials(), 100);
        }
        let r = concentration_report(&mut e, &[0], 6, 1.5, 20, Mode::Quenched, 2).unwrap();
        assert_eq!(r.pooled.frac_below(), 0.0);
        let csv = r.to_csv();
        assert!(csv.starts_with("start,t,eps,frac_below,frac_within,frac_above,trials\n0,6,1.5,0,1,0,20\n"));
        assert!(csv.ends_with("all,6,1.5,0,1,0,20\n"));
        let mut det = env(EnsembleSpec::r_out(10, 1, 0), 1);
        assert_eq!(concentration_report(&mut det, &[0], 3, 0.1, 5, Mode::Quenched, 0), Err(Error::DegenerateEntropy));
    }

    #[test]
    fn small_weight_rates_per_start() {
        let mut e = env(EnsembleSpec::r_out(100, 3, 0), 1);
        // 100^-0.3 < 1/3 < 100^-0.2.
        let r = small_weight_rates(&mut e, &[0, 1], 5, 0.3, 10, 0).unwrap();
        assert!(r.iter().all(|&(_, v)| v == 0.0));
        let r = small_weight_rates(&mut e, &[0], 5, 0.2, 10, 0).unwrap();
        assert_eq!(r[0].1, 1.0);
    }

    #[test]
    fn quenched_paths_match_exact_propagation() {
        let n = 16;
        let profiles = ParetoRows::new(n, 0.6, 3).unwrap().profiles().unwrap();
        let mut e = LazyEnvironment::new(profiles, 5).unwrap();
        let m = e.realize();
        let t = 4;
        let paths = 40_000;
        let mut counts = vec![0f64; n];
        let mut rng = rng::substream(2, Domain::Walk, 0);
        for _ in 0..paths {
            counts[sample_path(&mut e, 2, t, &mut rng).unwrap().end()] += 1.0;
        }
        let exact = propagate(&m, &DistVector::delta(n, 2), t).unwrap();
        for (j, c) in counts.iter().enumerate() {
            let p = exact.get(j);
            let sd = (p * (1.0 - p) / paths as f64).sqrt().max(1e-12);
            assert!((c / paths as f64 - p).abs() <= 4.5 * sd, "state {j}");
        }
    }

    proptest! {
        #[test]
        fn tree_excess_is_zero_iff_simple(path in prop::collection::vec(0usize..6, 1..12)) {
            let tx = tree_excess(&path);
            prop_assert_eq!(tx == 0, first_repeat_time(&path).is_none());
            let prefix_hits_one = (1..=path.len()).find(|&k| tree_excess(&path[..k]) == 1).map(|k| k - 1);
            prop_assert_eq!(prefix_hits_one, first_repeat_time(&path));
        }

        #[test]
        fn log_weights_add_under_concatenation(seed in 0u64..1000, a in 0usize..10, b in 0usize..10) {
            let mut e = env(EnsembleSpec::out_degrees(50, vec![1, 2, 3, 7], 0), seed);
            let mut rng = rng::substream(seed, Domain::Walk, 0);
            let first = sample_path(&mut e, 0, a, &mut rng).unwrap();
            let second = sample_path(&mut e, first.end(), b, &mut rng).unwrap();
            let joined = first.concat(&second);
            prop_assert!((joined.log_weight - first.log_weight - second.log_weight).abs() < 1e-12);
            prop_assert_eq!(joined.len(), a + b);
            let direct = TrajectoryRecord::new(joined.states.clone(), joined.weights.clone());
            prop_assert!((direct.log_weight - joined.log_weight).abs() < 1e-9);
            prop_assert!((direct.weight() - joined.weights.iter().product::<f64>()).abs() <= 1e-9 * direct.weight());
        }
    }
}
