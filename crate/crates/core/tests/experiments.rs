//! Small runs of every experiment kind through the library runner.

use std::fs;
use std::path::Path;

use sgld_lab::experiment::{run_experiment_with, ExperimentConfig, RunManifest};
use sha2::{Digest, Sha256};

fn run(toml: &str, out: &Path) -> RunManifest {
    let mut cfg = ExperimentConfig::from_toml_str(toml).unwrap();
    cfg.output_dir = out.to_path_buf();
    run_experiment_with(&cfg, Some(2)).unwrap()
}

fn assert_artifacts_listed(m: &RunManifest, out: &Path) {
    let mut on_disk: Vec<String> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let mut listed: Vec<String> = m.artifacts.iter().map(|a| a.file.clone()).collect();
    listed.sort();
    assert_eq!(on_disk, listed);
    for a in &m.artifacts {
        let bytes = fs::read(out.join(&a.file)).unwrap();
        assert_eq!(a.bytes, bytes.len() as u64);
        assert_eq!(a.sha256, hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn escape_has_one_summary_row_per_seed() {
    let toml = r#"
seeds = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20]
output_dir = "x"
[experiment.escape]
eta = 1e-3
k_max = 20000
xi_scan = [1.0, 4.0]
rho = 0.1
start = [0.5]
eval_stride = 100
sgld_min_hits = 1
sgd_max_hits = 0
objective = { name = "double_well", height = 1.0, well = 0.5, tilt = 0.3 }
space = { kind = "box", lo = [-1.0], hi = [1.0] }
"#;
    let dir = tempfile::tempdir().unwrap();
    let m = run(toml, dir.path());
    assert_eq!(m.summaries.len(), 20);
    assert!(m
        .summaries
        .iter()
        .all(|r| r.contains_key("sgd_hit_step") && r.contains_key("sgld_hit_step[xi=1]")));
    let frac = m.aggregate["sgd_escape_fraction"].as_f64().unwrap();
    assert_eq!(frac, 0.0);
    assert!(m.aggregate.contains_key("sgld_escape_fraction[xi=4]"));
    assert_artifacts_listed(&m, dir.path());
}

#[test]
fn small_runs_of_each_kind_pass() {
    let configs = [
        r#"
seeds = [1]
output_dir = "x"
[experiment.stationarity]
xi = 2.0
eta_tilde = 1e-2
k_steps = 1000000
bins = 20
grid_resolution = 400
burn_in = 1000
max_tv = 0.05
objective = { name = "quadratic", dim = 1 }
space = { kind = "box", lo = [-1.0], hi = [1.0] }
"#,
        r#"
seeds = [1]
output_dir = "x"
[[experiment.cheeger_table.cases]]
kind = "interval"
name = "uniform_interior"
resolution = 400
v = { kind = "interval", lo = 0.25, hi = 0.75 }
expected = 4.0
[[experiment.cheeger_table.cases]]
kind = "stability"
name = "shift"
objective = { name = "quadratic", dim = 1, scale = 3.0 }
space = { kind = "box", lo = [-1.0], hi = [1.0] }
v = { kind = "interval", lo = 0.3, hi = 1.0 }
perturbation = { kind = "shift", by = -2.5 }
resolution = 400
"#,
        r#"
seeds = [2]
output_dir = "x"
[experiment.conductance]
xi = 1.0
eta_tilde = 1e-4
n_states = 200
v = { kind = "interval", lo = 0.2, hi = 1.0 }
rho = 0.05
max_tv = 0.02
max_detailed_balance = 1e-6
objective = { name = "double_well", height = 0.3, well = 0.6, tilt = 0.1 }
space = { kind = "box", lo = [-1.0], hi = [1.0] }
"#,
        r#"
seeds = [3]
output_dir = "x"
[experiment.zeroone_learn.disagreement]
dim = 4
pairs = 5
samples = 200000
tolerance = 0.01
"#,
        r#"
seeds = [4]
output_dir = "x"
[[experiment.smoothing_checks.cases]]
name = "step"
loss = { kind = "step", thresholds = [-0.2, 0.3] }
space = { kind = "box", lo = [-1.0], hi = [1.0] }
sigma = 0.2
points = [[0.0]]
n_grad = 50000
m_fd = 50000
fd_step = 0.02
"#,
    ];
    for toml in configs {
        let dir = tempfile::tempdir().unwrap();
        let m = run(toml, dir.path());
        assert!(
            m.passed,
            "{}: {:?}",
            m.experiment,
            m.failed_checks().collect::<Vec<_>>()
        );
        assert!(m.error.is_none());
        assert_artifacts_listed(&m, dir.path());
    }
}

#[test]
fn mid_run_failure_leaves_a_partial_manifest() {
    let toml = r#"
seeds = [1]
output_dir = "x"
[[experiment.cheeger_table.cases]]
kind = "interval"
name = "uniform_boundary"
resolution = 200
v = { kind = "interval", lo = 0.0, hi = 0.5 }
expected = 2.0
[[experiment.cheeger_table.cases]]
kind = "saddle"
name = "no_hessian"
objective = { name = "norm", dim = 2 }
space = { kind = "ball", center = [0.0, 0.0], radius = 1.0 }
epsilon = 0.1
samples = 10
probes = 5
max_draws = 100
"#;
    let dir = tempfile::tempdir().unwrap();
    let m = run(toml, dir.path());
    assert!(!m.passed);
    assert!(m.error.as_deref().unwrap().contains("Hessian"));
    // Checks from the case that finished are kept.
    assert!(m.check("uniform_boundary.value").unwrap().passed);
    let on_disk: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk["passed"], false);
}

#[test]
fn grid_cases_reject_three_dimensions() {
    let toml = r#"
seeds = [1]
output_dir = "x"
[[experiment.cheeger_table.cases]]
kind = "stability"
name = "too_big"
objective = { name = "quadratic", dim = 3 }
space = { kind = "ball", center = [0.0, 0.0, 0.0], radius = 1.0 }
v = { kind = "whole" }
perturbation = { kind = "shift", by = 1.0 }
resolution = 10
"#;
    assert!(ExperimentConfig::from_toml_str(toml).is_err());
}
