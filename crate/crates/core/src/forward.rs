//! Forward graphs `G_x(s)` with spanning trees `T_x(s)`, grown by always
//! expanding the unexplored arrow of largest cumulative weight, and the
//! nice-path mass built on top of them.
//!
//! Arrow `(y, j)` of a node `y` has cumulative weight `w(path to y) * p_{y,j}`
//! along the tree. It is eligible while `y` sits at tree depth `<= s - 1` and
//! the cumulative weight is at least `exp(-hbar * s)`. Ties go to the smaller
//! `(state, slot)`. Targets come from [`LazyEnvironment::resolve`], so an arrow
//! already resolved by an earlier walk or build keeps its target.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt::Write as _;

use crate::env_model::{LazyEnvironment, StochasticMatrix};
use crate::error::{Error, Result};
use crate::stats;
use crate::walker::TrajectoryRecord;

/// Default `eps`.
pub const DEFAULT_EPS: f64 = 0.04;
/// Largest `n` for which the nice-path machinery runs by default.
pub const FEASIBLE_N: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardNode {
    pub state: usize,
    /// Index of the tree parent in [`ForwardTree::nodes`].
    pub parent: Option<usize>,
    /// Weight of the tree path from the root.
    pub weight: f64,
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardEdge {
    pub src: usize,
    pub dst: usize,
    pub slot: usize,
    pub weight: f64,
    pub tree: bool,
}

/// `G_x(s)` and `T_x(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTree {
    pub root: usize,
    pub s: usize,
    pub hbar: f64,
    pub threshold: f64,
    pub nodes: Vec<ForwardNode>,
    pub edges: Vec<ForwardEdge>,
    /// Expansion iterations, including arrows that hit an avoided state.
    pub kappa: usize,
    /// `w_hat` of each pick, in order.
    pub picked_weights: Vec<f64>,
    index: HashMap<usize, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundCheck {
    pub non_increasing: bool,
    /// `w_hat_l <= s / l` for every pick `l`.
    pub pick_bound: bool,
    /// `kappa <= s exp(hbar s)`.
    pub kappa_bound: bool,
}

impl BoundCheck {
    pub fn all(&self) -> bool {
        self.non_increasing && self.pick_bound && self.kappa_bound
    }
}

impl ForwardTree {
    pub fn node(&self, state: usize) -> Option<&ForwardNode> {
        self.index.get(&state).map(|&k| &self.nodes[k])
    }

    pub fn contains(&self, state: usize) -> bool {
        self.index.contains_key(&state)
    }

    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().map(|n| n.state)
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.edges.iter().any(|e| e.src == src && e.dst == dst)
    }

    pub fn is_tree_edge(&self, src: usize, dst: usize) -> bool {
        self.node(dst)
            .and_then(|n| n.parent)
            .is_some_and(|p| self.nodes[p].state == src && self.edges.iter().any(|e| e.tree && e.src == src && e.dst == dst))
    }

    /// `s exp(hbar s)`.
    pub fn kappa_limit(&self) -> f64 {
        self.s as f64 * (self.hbar * self.s as f64).exp()
    }

    pub fn check_bounds(&self) -> BoundCheck {
        let slack = 1.0 + 1e-12;
        BoundCheck {
            non_increasing: self.picked_weights.windows(2).all(|w| w[1] <= w[0]),
            pick_bound: self
                .picked_weights
                .iter()
                .enumerate()
                .all(|(l, &w)| w <= self.s as f64 / (l + 1) as f64 * slack),
            kappa_bound: self.kappa as f64 <= self.kappa_limit() * slack,
        }
    }

    /// Edge list `src dst weight tree_flag`, 1-based states.
    pub fn export_edges(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(out, "{} {} {} {}", e.src + 1, e.dst + 1, e.weight, e.tree as u8);
        }
        out
    }

    pub const SUMMARY_HEADER: &'static str = "root,s,kappa,tx,n_nodes";

    pub fn summary_line(&self) -> String {
        format!("{},{},{},{},{}", self.root + 1, self.s, self.kappa, graph_tx(self), self.nodes.len())
    }
}

/// `1 + |E| - |V|`.
pub fn graph_tx(tree: &ForwardTree) -> usize {
    1 + tree.edges.len() - tree.nodes.len()
}

#[derive(Debug, PartialEq)]
struct Candidate {
    w: f64,
    state: usize,
    slot: usize,
    node: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.w
            .total_cmp(&other.w)
            .then_with(|| other.state.cmp(&self.state))
            .then_with(|| other.slot.cmp(&self.slot))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn grow(
    env: &mut LazyEnvironment,
    root: usize,
    s: usize,
    hbar: f64,
    avoid: Option<&HashSet<usize>>,
) -> Result<ForwardTree> {
    let n = env.n();
    if root >= n {
        return Err(Error::OutOfRange { index: root, n });
    }
    if s == 0 {
        return Err(Error::Domain { name: "s", value: 0.0, domain: "s >= 1" });
    }
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::Domain { name: "hbar", value: hbar, domain: "hbar > 0" });
    }
    let profiles = env.shared_profiles();
    let threshold = (-hbar * s as f64).exp();
    let mut tree = ForwardTree {
        root,
        s,
        hbar,
        threshold,
        nodes: vec![ForwardNode { state: root, parent: None, weight: 1.0, depth: 0 }],
        edges: Vec::new(),
        kappa: 0,
        picked_weights: Vec::new(),
        index: HashMap::from([(root, 0)]),
    };
    let mut heap = BinaryHeap::new();
    let offer = |heap: &mut BinaryHeap<Candidate>, node: &ForwardNode, k: usize, slot: usize| {
        if node.depth + 1 > s {
            return;
        }
        let p = profiles[node.state].weight(slot);
        let w = node.weight * p;
        if p > 0.0 && w >= threshold {
            heap.push(Candidate { w, state: node.state, slot, node: k });
        }
    };
    offer(&mut heap, &tree.nodes[0], 0, 0);
    while let Some(c) = heap.pop() {
        tree.kappa += 1;
        tree.picked_weights.push(c.w);
        let parent = tree.nodes[c.node];
        offer(&mut heap, &parent, c.node, c.slot + 1);
        let z = env.resolve(c.state, c.slot)?;
        if avoid.is_some_and(|a| a.contains(&z)) {
            continue;
        }
        let p = profiles[c.state].weight(c.slot);
        let fresh = !tree.index.contains_key(&z);
        tree.edges.push(ForwardEdge { src: c.state, dst: z, slot: c.slot, weight: p, tree: fresh });
        if fresh {
            let k = tree.nodes.len();
            let node = ForwardNode { state: z, parent: Some(c.node), weight: c.w, depth: parent.depth + 1 };
            tree.nodes.push(node);
            tree.index.insert(z, k);
            offer(&mut heap, &node, k, 0);
        }
    }
    Ok(tree)
}

/// Grows `G_x(s)` and `T_x(s)` in `env` with threshold `exp(-hbar s)`.
pub fn build_forward(env: &mut LazyEnvironment, x: usize, s: usize, hbar: f64) -> Result<ForwardTree> {
    grow(env, x, s, hbar, None)
}

/// As [`build_forward`], discarding every arrow that lands in `avoid`.
pub fn build_forward_avoiding(
    env: &mut LazyEnvironment,
    x: usize,
    s: usize,
    hbar: f64,
    avoid: &HashSet<usize>,
) -> Result<ForwardTree> {
    grow(env, x, s, hbar, Some(avoid))
}

/// `hbar = H (1 + eps)` for the profiles of `env`.
pub fn hbar_of(env: &LazyEnvironment, eps: f64) -> Result<f64> {
    let h = stats::avg_row_entropy(env.profiles());
    if !(h > 0.0) {
        return Err(Error::DegenerateEntropy);
    }
    Ok(h * (1.0 + eps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoodStates {
    pub h: usize,
    /// `TX(G_x(2h)) <= 1`.
    pub s0: Vec<bool>,
    /// `TX(G_x(h)) = 0`.
    pub s_star: Vec<bool>,
}

impl GoodStates {
    pub fn s0_fraction(&self) -> f64 {
        self.s0.iter().filter(|&&b| b).count() as f64 / self.s0.len().max(1) as f64
    }

    pub fn s_star_fraction(&self) -> f64 {
        self.s_star.iter().filter(|&&b| b).count() as f64 / self.s_star.len().max(1) as f64
    }

    pub fn s0_is_everything(&self) -> bool {
        self.s0.iter().all(|&b| b)
    }
}

/// Membership of every state in `S_0` and `S_star`.
pub fn good_states(env: &mut LazyEnvironment, h: usize, hbar: f64) -> Result<GoodStates> {
    if h == 0 {
        return Err(Error::Domain { name: "h", value: 0.0, domain: "h >= 1" });
    }
    let n = env.n();
    let mut s0 = Vec::with_capacity(n);
    let mut s_star = Vec::with_capacity(n);
    for x in 0..n {
        s0.push(graph_tx(&build_forward(env, x, 2 * h, hbar)?) <= 1);
        s_star.push(graph_tx(&build_forward(env, x, h, hbar)?) == 0);
    }
    Ok(GoodStates { h, s0, s_star })
}

/// Horizons of the nice-path decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NiceParams {
    pub eps: f64,
    pub t: usize,
    pub h: usize,
    /// `t - h`.
    pub s: usize,
    pub hbar: f64,
    pub n: usize,
}

impl NiceParams {
    /// `t = round((1 + eps) t_ent)` and `h = max(1, floor(t_ent / 10))`.
    pub fn new(env: &LazyEnvironment, eps: f64) -> Result<Self> {
        let t_ent = stats::entropic_time(env.profiles())?;
        let t = ((1.0 + eps) * t_ent).round() as usize;
        let h = ((t_ent / 10.0).floor() as usize).max(1);
        Self::with_horizons(env, eps, t, h)
    }

    pub fn with_horizons(env: &LazyEnvironment, eps: f64, t: usize, h: usize) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain { name: "eps", value: eps, domain: "0 < eps < 1" });
        }
        if h == 0 || t <= h {
            return Err(Error::Domain { name: "t", value: t as f64, domain: "t > h >= 1" });
        }
        Ok(Self { eps, t, h, s: t - h, hbar: hbar_of(env, eps)?, n: env.n() })
    }

    /// `n^(-1 - eps/4)`.
    pub fn weight_cap(&self) -> f64 {
        (self.n as f64).powf(-1.0 - self.eps / 4.0)
    }

    /// `n^(-eps/8)`.
    pub fn heavy_step(&self) -> f64 {
        (self.n as f64).powf(-self.eps / 8.0)
    }
}

/// The forward structures of one start `x`, with tail graphs cached per
/// entry state.
#[derive(Debug, Clone)]
pub struct NiceContext {
    pub x: usize,
    pub params: NiceParams,
    pub tree: ForwardTree,
    avoid: HashSet<usize>,
    tails: HashMap<usize, ForwardTree>,
}

impl NiceContext {
    pub fn new(env: &mut LazyEnvironment, x: usize, params: NiceParams) -> Result<Self> {
        Self::with_limit(env, x, params, FEASIBLE_N)
    }

    pub fn with_limit(env: &mut LazyEnvironment, x: usize, params: NiceParams, limit: usize) -> Result<Self> {
        if env.n() > limit {
            return Err(Error::Infeasible { n: env.n(), limit });
        }
        let tree = build_forward(env, x, params.s, params.hbar)?;
        let avoid = tree.states().collect();
        Ok(Self { x, params, tree, avoid, tails: HashMap::new() })
    }

    /// `G_v^x(h)`, or `None` when `v` lies in `G_x(s)`.
    pub fn tail(&mut self, env: &mut LazyEnvironment, v: usize) -> Result<Option<&ForwardTree>> {
        if self.avoid.contains(&v) {
            return Ok(None);
        }
        if !self.tails.contains_key(&v) {
            let g = build_forward_avoiding(env, v, self.params.h, self.params.hbar, &self.avoid)?;
            self.tails.insert(v, g);
        }
        Ok(self.tails.get(&v))
    }

    /// `v` in `S_star^x`.
    pub fn is_good_entry(&mut self, env: &mut LazyEnvironment, v: usize) -> Result<bool> {
        Ok(self.tail(env, v)?.is_some_and(|g| graph_tx(g) == 0))
    }

    /// `P_0^t(x, .)`, summed leaf by leaf over the tree prefix, the heavy
    /// step, and the tail tree.
    pub fn mass(&mut self, env: &mut LazyEnvironment) -> Result<Vec<f64>> {
        let n = env.n();
        let profiles = env.shared_profiles();
        let (cap, heavy, h) = (self.params.weight_cap(), self.params.heavy_step(), self.params.h);
        let leaves: Vec<ForwardNode> = self.tree.nodes.iter().filter(|u| u.depth == self.params.s).copied().collect();
        let mut out = vec![0.0; n];
        for u in leaves {
            for (k, &p) in profiles[u.state].weights().iter().enumerate() {
                if p < heavy {
                    break;
                }
                let v = env.resolve(u.state, k)?;
                if !self.is_good_entry(env, v)? {
                    continue;
                }
                let g = self.tails.get(&v).expect("tail built");
                for y in g.nodes.iter().filter(|y| y.depth == h - 1) {
                    let w = u.weight * p * y.weight;
                    if w <= cap {
                        out[y.state] += w;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Whether a sampled `t`-step walk from `x` is nice.
    pub fn is_nice(&mut self, env: &mut LazyEnvironment, path: &TrajectoryRecord) -> Result<bool> {
        let NiceParams { t, s, .. } = self.params;
        let xs = &path.states;
        if path.len() != t || xs[0] != self.x {
            return Ok(false);
        }
        if path.log_weight > self.params.weight_cap().ln() {
            return Ok(false);
        }
        if !(0..s).all(|i| self.tree.is_tree_edge(xs[i], xs[i + 1])) {
            return Ok(false);
        }
        if path.weights[s] < self.params.heavy_step() {
            return Ok(false);
        }
        let v = xs[s + 1];
        if !self.is_good_entry(env, v)? {
            return Ok(false);
        }
        let g = self.tails.get(&v).expect("tail built");
        Ok((s + 1..t).all(|i| g.has_edge(xs[i], xs[i + 1])))
    }
}

/// `P_0^t(x, .)` for the default horizons.
pub fn nice_mass(env: &mut LazyEnvironment, x: usize, eps: f64) -> Result<Vec<f64>> {
    let params = NiceParams::new(env, eps)?;
    NiceContext::new(env, x, params)?.mass(env)
}

/// `q(x) = 1 - sum_y P_0^t(x, y)`.
pub fn escape_prob(env: &mut LazyEnvironment, x: usize, eps: f64) -> Result<f64> {
    let mass = nice_mass(env, x, eps)?;
    Ok((1.0 - mass.iter().sum::<f64>()).clamp(0.0, 1.0))
}

/// Reference answers by exhaustive path enumeration on a realized matrix.
pub mod enumerate {
    use super::*;

    /// Edges `(y, z)` used by some path from `x` with at most `s` edges and
    /// weight at least `threshold` that never visits `avoid`, returned as
    /// `(nodes, edges)`.
    pub fn forward_graph(
        m: &StochasticMatrix,
        x: usize,
        s: usize,
        threshold: f64,
        avoid: &HashSet<usize>,
    ) -> (HashSet<usize>, HashSet<(usize, usize)>) {
        let mut nodes = HashSet::from([x]);
        let mut edges = HashSet::new();
        // Best weight seen per (state, remaining budget) prunes dominated revisits.
        let mut best: HashMap<(usize, usize), f64> = HashMap::new();
        let mut stack = vec![(x, 0usize, 1.0f64)];
        while let Some((y, len, w)) = stack.pop() {
            if len == s {
                continue;
            }
            let (cols, vals) = m.row(y);
            for (&z, &p) in cols.iter().zip(vals) {
                let wz = w * p;
                if wz < threshold || avoid.contains(&z) {
                    continue;
                }
                edges.insert((y, z));
                nodes.insert(z);
                let key = (z, len + 1);
                if best.get(&key).is_some_and(|&b| b >= wz) {
                    continue;
                }
                best.insert(key, wz);
                stack.push((z, len + 1, wz));
            }
        }
        (nodes, edges)
    }

    /// `P_0^t(x, .)` by listing every `t`-step path from `x` in `m` and
    /// testing the four nice-path conditions one at a time against the
    /// forward graphs held by `ctx`.
    pub fn nice_mass(m: &StochasticMatrix, ctx: &mut NiceContext, env: &mut LazyEnvironment) -> Result<Vec<f64>> {
        let NiceParams { t, s, .. } = ctx.params;
        let mut paths = Vec::new();
        let mut stack = vec![(vec![ctx.x], Vec::<f64>::new())];
        while let Some((xs, ws)) = stack.pop() {
            if ws.len() == t {
                paths.push((xs, ws));
                continue;
            }
            let (cols, vals) = m.row(*xs.last().unwrap());
            for (&z, &p) in cols.iter().zip(vals) {
                let (mut xs, mut ws) = (xs.clone(), ws.clone());
                xs.push(z);
                ws.push(p);
                stack.push((xs, ws));
            }
        }
        let mut out = vec![0.0; m.n()];
        for (xs, ws) in paths {
            let w: f64 = ws.iter().product();
            let c1 = w <= ctx.params.weight_cap();
            let c2 = (0..s).all(|i| ctx.tree.is_tree_edge(xs[i], xs[i + 1]));
            let c3 = ws[s] >= ctx.params.heavy_step();
            let c4 = c1 && c2 && c3 && {
                let v = xs[s + 1];
                match ctx.tail(env, v)? {
                    Some(g) => graph_tx(g) == 0 && (s + 1..t).all(|i| g.has_edge(xs[i], xs[i + 1])),
                    None => false,
                }
            };
            if c4 {
                out[xs[t]] += w;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{pi_hat_at, propagate, DistVector};
    use crate::ensembles::{EnsembleSpec, ParetoRows};
    use crate::env_model::RowProfile;
    use crate::rng::{self, Domain};
    use crate::walker::sample_path;
    use proptest::prelude::*;

    fn env(spec: EnsembleSpec, seed: u64) -> LazyEnvironment {
        LazyEnvironment::new(spec.profiles().unwrap(), seed).unwrap()
    }

    fn cycle3() -> LazyEnvironment {
        // Single-slot rows; the seed below realizes 0 -> 1 -> 2 -> 0.
        let profiles: Vec<RowProfile> = (0..3).map(|i| RowProfile::uniform(i, 1, 3).unwrap()).collect();
        for seed in 0..1000 {
            let mut e = LazyEnvironment::new(profiles.clone(), seed).unwrap();
            if (0..3).all(|i| e.resolve(i, 0).unwrap() == (i + 1) % 3) {
                return e;
            }
        }
        unreachable!("no seed realizes the 3-cycle")
    }

    fn matches_enumeration(e: &mut LazyEnvironment, x: usize, s: usize, hbar: f64) -> bool {
        let m = e.realize();
        let tree = build_forward(e, x, s, hbar).unwrap();
        let (nodes, edges) = enumerate::forward_graph(&m, x, s, tree.threshold, &HashSet::new());
        let got_nodes: HashSet<usize> = tree.states().collect();
        let got_edges: HashSet<(usize, usize)> = tree.edges.iter().map(|e| (e.src, e.dst)).collect();
        got_nodes == nodes && got_edges == edges && tree.edges.len() == got_edges.len()
    }

    #[test]
    fn high_threshold_gives_root_only() {
        let mut e = env(EnsembleSpec::r_out(50, 2, 0), 1);
        let t = build_forward(&mut e, 3, 2, 0.01).unwrap();
        assert_eq!((t.nodes.len(), t.kappa, graph_tx(&t)), (1, 0, 0));
        assert_eq!(t.summary_line(), "4,2,0,0,1");
        assert!(build_forward(&mut e, 3, 0, 1.0).is_err());
        assert!(build_forward(&mut e, 50, 1, 1.0).is_err());
    }

    #[test]
    fn three_cycle() {
        let mut e = cycle3();
        let t = build_forward(&mut e, 0, 5, 0.1).unwrap();
        assert_eq!(t.nodes.len(), 3);
        assert_eq!(t.edges.len(), 3);
        assert_eq!(t.kappa, 3);
        assert_eq!(graph_tx(&t), 1);
        assert!(t.has_edge(2, 0) && !t.is_tree_edge(2, 0) && t.is_tree_edge(0, 1));
        assert!(matches_enumeration(&mut e, 0, 5, 0.1));
        assert_eq!(t.export_edges(), "1 2 1 1\n2 3 1 1\n3 1 1 0\n");
    }

    #[test]
    fn binary_tree_when_n_is_large() {
        let mut e = env(EnsembleSpec::r_out(100_000, 2, 0), 4);
        let t = build_forward(&mut e, 0, 3, 2f64.ln() * 1.04).unwrap();
        assert_eq!(t.edges.len(), 14);
        assert_eq!(graph_tx(&t), 0);
        assert!(t.check_bounds().all());
        let depths: Vec<usize> = t.nodes.iter().map(|n| n.depth).collect();
        assert_eq!(depths.iter().filter(|&&d| d == 3).count(), 8);
    }

    #[test]
    fn enumeration_agrees_on_small_instances() {
        for seed in 0..30 {
            let mut e = env(EnsembleSpec::r_out(64, 2, 0), seed);
            for x in [0, 17, 63] {
                assert!(matches_enumeration(&mut e, x, 6, 2f64.ln() * 1.04), "seed {seed} x {x}");
            }
        }
    }

    #[test]
    fn enumeration_can_differ_only_through_a_cycle() {
        let mut differ = 0;
        for seed in 0..10 {
            let mut e = env(EnsembleSpec::out_degrees(64, vec![1, 2, 3], 0), seed);
            let hbar = hbar_of(&e, DEFAULT_EPS).unwrap();
            for x in 0..64 {
                let s = 1 + x % 6;
                if !matches_enumeration(&mut e, x, s, hbar) {
                    differ += 1;
                    assert!(graph_tx(&build_forward(&mut e, x, s, hbar).unwrap()) > 0);
                }
            }
        }
        assert!(differ > 0);
    }

    #[test]
    fn arrows_into_avoided_states_are_dropped() {
        let mut e = env(EnsembleSpec::r_out(200, 3, 0), 2);
        let full = build_forward(&mut e, 5, 2, 3f64.ln() * 1.04).unwrap();
        let child = full.nodes[1].state;
        let avoid = HashSet::from([child]);
        let cut = build_forward_avoiding(&mut e, 5, 2, 3f64.ln() * 1.04, &avoid).unwrap();
        assert!(!cut.contains(child));
        assert_eq!(cut.kappa, full.kappa - 3);
        assert!(cut.states().all(|s| full.contains(s)));
    }

    #[test]
    fn good_states_of_an_acyclic_chain() {
        // Path 0 -> 1 -> ... -> 9 with an absorbing loop at 9: forward graphs
        // away from the loop are paths.
        let n = 40;
        let profiles = EnsembleSpec::r_out(n, 1, 0).profiles().unwrap();
        let mut e = LazyEnvironment::new(profiles, 3).unwrap();
        let g = good_states(&mut e, 1, 0.5).unwrap();
        for x in 0..n {
            let next = e.resolve(x, 0).unwrap();
            assert_eq!(g.s_star[x], next != x, "state {x}");
        }
        assert!(good_states(&mut e, 0, 0.5).is_err());
    }

    #[test]
    fn two_cycles_leave_s0() {
        // 0 -> {0, 1}, 1 -> {0, 1}: the 2h ball holds both loops and the back edge.
        let rows = vec![RowProfile::uniform(0, 2, 2).unwrap(), RowProfile::uniform(1, 2, 2).unwrap()];
        let mut e = LazyEnvironment::new(rows, 0).unwrap();
        let g = good_states(&mut e, 1, 0.7).unwrap();
        assert_eq!(g.s0, vec![false, false]);
        assert_eq!(g.s_star, vec![false, false]);
        assert!(!g.s0_is_everything());
    }

    fn mixed_fixture(seed: u64) -> (LazyEnvironment, NiceParams) {
        let e = env(EnsembleSpec::out_degrees(64, vec![1, 2, 3], 0), seed);
        let params = NiceParams::with_horizons(&e, DEFAULT_EPS, 9, 4).unwrap();
        (e, params)
    }

    #[test]
    fn nice_mass_defaults_on_the_small_binary_instance_are_empty() {
        let mut e = env(EnsembleSpec::r_out(64, 2, 0), 1);
        let p = NiceParams::new(&e, DEFAULT_EPS).unwrap();
        assert_eq!((p.t, p.h, p.s), (6, 1, 5));
        let mass = nice_mass(&mut e, 0, DEFAULT_EPS).unwrap();
        assert!(mass.iter().all(|&v| v == 0.0));
        assert_eq!(escape_prob(&mut e, 0, DEFAULT_EPS).unwrap(), 1.0);
    }

    #[test]
    fn nice_mass_matches_enumeration_and_bounds() {
        let mut nonzero = 0;
        for seed in 0..8 {
            let (mut e, params) = mixed_fixture(seed);
            let m = e.realize();
            for x in 0..64 {
                let mut ctx = NiceContext::new(&mut e, x, params).unwrap();
                let mass = ctx.mass(&mut e).unwrap();
                let oracle = enumerate::nice_mass(&m, &mut ctx, &mut e).unwrap();
                for (a, b) in mass.iter().zip(&oracle) {
                    assert!((a - b).abs() <= 1e-15, "seed {seed} x {x}: {a} vs {b}");
                }
                let pt = propagate(&m, &DistVector::delta(64, x), params.t).unwrap();
                assert!(mass.iter().zip(pt.values()).all(|(a, p)| *a <= p + 1e-15));
                nonzero += mass.iter().any(|&v| v > 0.0) as usize;
            }
        }
        assert!(nonzero > 0);
    }

    #[test]
    fn escape_probability_matches_path_classification() {
        let (mut e, params) = mixed_fixture(3);
        let masses: Vec<f64> = (0..64)
            .map(|x| NiceContext::new(&mut e, x, params).unwrap().mass(&mut e).unwrap().iter().sum())
            .collect();
        let x = (0..64).max_by(|&a, &b| masses[a].total_cmp(&masses[b])).unwrap();
        assert!(masses[x] > 0.0);
        let mut ctx = NiceContext::new(&mut e, x, params).unwrap();
        let q = 1.0 - ctx.mass(&mut e).unwrap().iter().sum::<f64>();
        let trials = 20_000;
        let mut rng = rng::substream(1, Domain::Walk, 0);
        let mut escaped = 0;
        for _ in 0..trials {
            let rec = sample_path(&mut e, x, params.t, &mut rng).unwrap();
            escaped += !ctx.is_nice(&mut e, &rec).unwrap() as usize;
        }
        let est = escaped as f64 / trials as f64;
        let sd = (q * (1.0 - q) / trials as f64).sqrt();
        assert!((est - q).abs() <= 4.0 * sd, "{est} vs {q}");
    }

    #[test]
    fn infeasible_size_is_guarded() {
        let mut e = env(EnsembleSpec::r_out(600, 2, 0), 1);
        assert!(matches!(nice_mass(&mut e, 0, DEFAULT_EPS), Err(Error::Infeasible { n: 600, .. })));
    }

    #[test]
    fn nice_mass_sits_below_the_proxy_on_binary_graphs() {
        let mut good_envs = 0;
        for seed in 0..10 {
            let mut e = env(EnsembleSpec::r_out(256, 2, 0), seed);
            let m = e.realize();
            let params = NiceParams::new(&e, DEFAULT_EPS).unwrap();
            let pi = pi_hat_at(&m, params.h).unwrap();
            let delta = 0.5;
            let mut ok = 0usize;
            for x in 0..256 {
                let mass = NiceContext::new(&mut e, x, params).unwrap().mass(&mut e).unwrap();
                ok += mass.iter().zip(pi.values()).filter(|(p0, p)| **p0 <= (1.0 + delta) * **p + delta / 256.0).count();
            }
            good_envs += (ok as f64 >= 0.99 * 256.0 * 256.0) as usize;
        }
        assert!(good_envs >= 9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn build_bounds_hold_on_every_build(seed in 0u64..10_000, x in 0usize..64, s in 1usize..7, pareto in any::<bool>()) {
            let mut e = if pareto {
                LazyEnvironment::new(ParetoRows::new(64, 0.5, seed).unwrap().profiles().unwrap(), seed).unwrap()
            } else {
                env(EnsembleSpec::out_degrees(64, vec![1, 2, 3, 5], 0), seed)
            };
            let hbar = hbar_of(&e, DEFAULT_EPS).unwrap();
            let s = if pareto { s.min(3) } else { s };
            let t = build_forward(&mut e, x, s, hbar).unwrap();
            prop_assert!(t.check_bounds().all());
            prop_assert_eq!(t.kappa, t.edges.len());
            prop_assert!(t.nodes.iter().all(|n| n.depth <= s && n.weight >= t.threshold));
            prop_assert_eq!(graph_tx(&t), 1 + t.edges.len() - t.nodes.len());
        }
    }
}
