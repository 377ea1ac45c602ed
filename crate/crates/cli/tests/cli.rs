use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use entropic_cutoff::ensembles::EnsembleSpec;
use entropic_cutoff::forward::{enumerate, hbar_of};
use entropic_cutoff::LazyEnvironment;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn entcut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entcut")).args(args).output().unwrap()
}

fn run_ok(cmd: &str, cfg: &Path) -> String {
    let out = entcut(&[cmd, "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const R_OUT: &str = "seed = 5\nn = 300\n[ensemble]\nkind = \"r_out\"\nr = 3\n";

#[test]
fn profile_is_deterministic_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("lambda_grid = [0.5, 1.0, 2.0]\n{R_OUT}"));
    let a = run_ok("profile", &cfg);
    assert_eq!(a, run_ok("profile", &cfg));
    assert!(a.starts_with("# config-hash: "));
    assert!(a.contains("# n: 300\n") && a.contains("# t_ent: "));
    assert!(a.contains("t,lambda,tv_min,tv_mean,tv_max,n_starts\n"));
    let out = dir.path().join("o.csv");
    let st = entcut(&["profile", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(st.status.success() && st.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(out).unwrap(), a);
}

#[test]
fn seed_override_changes_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("t_grid = [2]\n{R_OUT}"));
    let a = run_ok("profile", &cfg);
    let b = String::from_utf8(entcut(&["profile", "--config", cfg.to_str().unwrap(), "--seed", "6"]).stdout).unwrap();
    assert_ne!(a.lines().next(), b.lines().next());
}

#[test]
fn time_zero_is_distance_from_a_point_mass() {
    // With t_ent < 10 the proxy is uniform, so every start sits at 1 - 1/n.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("t_grid = [0, 1]\n{R_OUT}"));
    let r = rows(&run_ok("profile", &cfg));
    let expect = 1.0 - 1.0 / 300.0;
    for k in 2..5 {
        assert!((r[0][k].parse::<f64>().unwrap() - expect).abs() < 1e-12);
    }
    assert_eq!(r[0][5], "300");
}

#[test]
fn pareto_profile_decays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "seed = 2\nn = 2000\nlambda_grid = [0.75, 1.5]\n[ensemble]\nkind = \"pareto\"\nalpha = 0.5\n\
         [starts]\npolicy = \"sample\"\nm = 12\n",
    );
    let text = run_ok("profile", &cfg);
    assert!(text.contains("# h_alpha: 1.386"));
    let r = rows(&text);
    let early: f64 = r[0][4].parse().unwrap();
    let late: f64 = r[1][4].parse().unwrap();
    assert!(early > late, "{early} vs {late}");
}

#[test]
fn concentration_of_constant_degree_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("trials = 50\nt = 4\n{R_OUT}[starts]\npolicy = \"sample\"\nm = 3\n"));
    let text = run_ok("concentrate", &cfg);
    assert!(text.contains("start,t,eps,frac_below,frac_within,frac_above,trials\n"));
    let r = rows(&text);
    assert_eq!(r.last().unwrap()[0], "all");
    assert!(r.iter().all(|row| row[4] == "1"));
}

#[test]
fn deterministic_rows_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "seed = 1\nn = 20\n[ensemble]\nkind = \"r_out\"\nr = 1\n");
    let out = entcut(&["concentrate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    // stats still reports, but its check fails.
    assert!(entcut(&["stats", "--config", cfg.to_str().unwrap()]).status.success());
    let out = entcut(&["stats", "--config", cfg.to_str().unwrap(), "--assert"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains(",inf,"));
}

#[test]
fn beta_reports_targets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "seed = 1\nn = 5000\ntrials = 200\n[ensemble]\nkind = \"pareto\"\nalpha = 0.5\n");
    let text = run_ok("beta", &cfg);
    let r = rows(&text);
    assert_eq!(r[0][..3], ["0.5", "5000", "200"]);
    assert_eq!(r[0][7..10], ["0.5", "0.375", "0.3125"]);
    assert!((r[0][10].parse::<f64>().unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);

    let one = write(dir.path(), "one.toml", "seed = 1\nn = 1\ntrials = 10\n[ensemble]\nkind = \"pareto\"\nalpha = 0.5\n");
    assert_eq!(rows(&run_ok("beta", &one))[0][3], "1");

    let bad = write(dir.path(), "bad.toml", "seed = 1\nn = 10\n[ensemble]\nkind = \"pareto\"\nalpha = 1.2\n");
    let out = entcut(&["beta", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config line 5"));
}

#[test]
fn forward_rows_pass_and_match_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "seed = 4\nn = 64\n[ensemble]\nkind = \"r_out\"\nr = 2\n[forward]\ns = 5\n");
    let text = run_ok("forward", &cfg);
    assert!(text.contains("root,s,kappa,tx,n_nodes,kappa_bound,pass\n"));
    let r = rows(&text);
    assert_eq!(r.len(), 64);
    assert!(r.iter().all(|row| row[6] == "true"));

    let mut env = LazyEnvironment::new(EnsembleSpec::r_out(64, 2, 0).profiles().unwrap(), 4).unwrap();
    let hbar = hbar_of(&env, 0.04).unwrap();
    let m = env.realize();
    for row in &r {
        let x: usize = row[0].parse::<usize>().unwrap() - 1;
        let (nodes, _) = enumerate::forward_graph(&m, x, 5, (-hbar * 5.0).exp(), &HashSet::new());
        assert_eq!(row[4].parse::<usize>().unwrap(), nodes.len());
    }

    let root_only = write(dir.path(), "r.toml", "seed = 4\nn = 64\n[ensemble]\nkind = \"r_out\"\nr = 2\n[forward]\ns = 1\neps = 0.001\n");
    // exp(-hbar) sits just below 1/2, so only the two root arrows qualify.
    assert!(rows(&run_ok("forward", &root_only)).iter().all(|row| row[2] == "2"));
}

#[test]
fn mix_and_stats_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("reference = \"stationary\"\nmix_eps = [0.25, 0.1]\n{R_OUT}"));
    let text = run_ok("mix", &cfg);
    let r = rows(&text);
    assert_eq!(r.len(), 2);
    assert!(r[0][1].parse::<usize>().unwrap() <= r[1][1].parse::<usize>().unwrap());
    let stats = run_ok("stats", &cfg);
    assert!(stats.contains("n,H,t_ent,sparsity_stat,nondeg@0.1,nondeg@0.01\n300,"));
}

#[test]
fn profiles_file_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "rows.txt", "0.5 0.5\n0.5 0.5\n1\n");
    let cfg = write(dir.path(), "c.toml", "seed = 1\nn = 3\n[ensemble]\nkind = \"file\"\nprofiles_file = \"rows.txt\"\n");
    let text = run_ok("stats", &cfg);
    assert!(text.contains(&format!("3,{}", 2.0 * 2f64.ln() / 3.0)));
}

#[test]
fn config_failures_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "seed = 1\nn = = 3\n");
    let out = entcut(&["stats", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config line 2"));
    assert_eq!(entcut(&["stats"]).status.code(), Some(2));
    assert_eq!(entcut(&["stats", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    assert_eq!(entcut(&["bogus"]).status.code(), Some(2));
}

#[test]
fn assert_flag_maps_failed_checks_to_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("trials = 20\nt = 3\n{R_OUT}[starts]\npolicy = \"sample\"\nm = 2\n[check]\nmin_within = 1.5\n"));
    let p = cfg.to_str().unwrap();
    assert!(entcut(&["concentrate", "--config", p]).status.success());
    assert_eq!(entcut(&["concentrate", "--config", p, "--assert"]).status.code(), Some(3));
}
