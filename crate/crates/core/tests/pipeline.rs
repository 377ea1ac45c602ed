use std::collections::HashSet;

use entropic_cutoff::dynamics::{propagate, stationary, tv_distance, DistVector, StationaryOptions};
use entropic_cutoff::ensembles::{EnsembleSpec, ParetoRows};
use entropic_cutoff::env_model::realize_matrix;
use entropic_cutoff::forward::{build_forward, hbar_of};
use entropic_cutoff::io::{format_profiles, format_triplets, parse_profiles, parse_triplets};
use entropic_cutoff::rng::{self, Domain};
use entropic_cutoff::walker::sample_path;
use entropic_cutoff::{LazyEnvironment, RowSource};

#[test]
fn text_formats_round_trip_a_realized_environment() {
    let profiles = EnsembleSpec::out_degrees(40, vec![1, 3, 6], 0).profiles().unwrap();
    let again = parse_profiles(&format_profiles(&profiles)).unwrap();
    assert_eq!(profiles, again);
    let m = realize_matrix(profiles, 17).unwrap();
    let back = parse_triplets(&format_triplets(&m), 40).unwrap();
    for i in 0..40 {
        assert_eq!(m.row(i), back.row(i));
    }
}

#[test]
fn walks_and_builds_reveal_the_same_environment() {
    // Forward builds resolve each row in slot order, which is also the order
    // realize() uses, so building first changes nothing.
    let profiles = EnsembleSpec::r_out(500, 4, 0).profiles().unwrap();
    let mut a = LazyEnvironment::new(profiles.clone(), 3).unwrap();
    let mut b = LazyEnvironment::new(profiles, 3).unwrap();
    let hbar = hbar_of(&a, 0.04).unwrap();
    for x in [0, 10, 499] {
        build_forward(&mut a, x, 3, hbar).unwrap();
    }
    let (ma, mb) = (a.realize(), b.realize());
    for i in 0..500 {
        assert_eq!(ma.row(i), mb.row(i));
    }
}

#[test]
fn quenched_walks_follow_the_realized_matrix() {
    let profiles = EnsembleSpec::out_degrees(30, vec![2, 3], 0).profiles().unwrap();
    let mut env = LazyEnvironment::new(profiles, 8).unwrap();
    let m = env.realize();
    let mut walk = rng::substream(8, Domain::Walk, 0);
    for _ in 0..200 {
        let rec = sample_path(&mut env, 4, 12, &mut walk).unwrap();
        for (k, pair) in rec.states.windows(2).enumerate() {
            assert_eq!(m.get(pair[0], pair[1]), rec.weights[k]);
        }
    }
}

#[test]
fn pareto_chain_converges_to_its_stationary_law() {
    let rows = ParetoRows::new(300, 0.5, 2).unwrap();
    let m = rows.materialize();
    let pi = stationary(&m, StationaryOptions::default()).unwrap().dist;
    let far = propagate(&rows, &DistVector::delta(300, 7), 200).unwrap();
    let d = tv_distance(&far, &pi);
    assert!(d < 1e-8, "{d}");
    let mut buf = Vec::new();
    rows.fill_row(7, &mut buf);
    assert_eq!(buf.len(), 300);
}

#[test]
fn forward_graph_of_a_large_sparse_instance_is_a_tree() {
    let profiles = EnsembleSpec::r_out(1_000_000, 3, 0).profiles().unwrap();
    let mut env = LazyEnvironment::new(profiles, 1).unwrap();
    let hbar = hbar_of(&env, 0.04).unwrap();
    let tree = build_forward(&mut env, 12345, 4, hbar).unwrap();
    assert_eq!(tree.edges.len(), 3 + 9 + 27 + 81);
    assert!(tree.edges.iter().all(|e| e.tree));
    let states: HashSet<usize> = tree.states().collect();
    assert_eq!(states.len(), tree.nodes.len());
}
