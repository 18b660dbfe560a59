//! SGLD and the auxiliary chain's Gaussian-branch moves share one law.

use std::sync::Arc;

use sgld_lab::chain::{aux_run, MhConfig};
use sgld_lab::objective::{ExactGradient, Objective, ObjectiveSpec};
use sgld_lab::rng::rng_for;
use sgld_lab::sgld::{sgld_run, SgldConfig, TargetSet};
use sgld_lab::space::ParameterSpace;
use sgld_lab::stats::ks_two_sample;

const RUNS: u64 = 10_000;
const STEPS: usize = 40;

/// KS p-value between SGLD endpoints and auxiliary-chain endpoints after the
/// same number of Gaussian-branch draws, with the auxiliary step scaled.
fn endpoint_ks(aux_step_factor: f64) -> (f64, f64, f64) {
    let space = ParameterSpace::cube(-1.0, 1.0, 1).unwrap();
    let f: Arc<dyn Objective> = ObjectiveSpec::DoubleWell {
        height: 1.0,
        well: 0.5,
        tilt: 0.3,
    }
    .build_raw();
    let (xi, eta) = (5.0, 1e-3);
    let start = [0.05];
    // The target is never reached from the start within these horizons.
    let far = TargetSet::ball("far", vec![-0.95], 0.0, 0.01);
    let oracle = ExactGradient(f.clone());

    let mut sgld_end = Vec::new();
    let mut aux_end = Vec::new();
    for seed in 0..RUNS {
        let mut cfg = SgldConfig::new(xi, eta, STEPS);
        cfg.start = Some(start.to_vec());
        cfg.seed = seed;
        let mut rng = rng_for(seed, 9);
        let (_, trace) = sgld_run(&oracle, |x| f.value(x), &space, &cfg, &[], &mut rng).unwrap();
        sgld_end.push(trace.iterates[STEPS][0]);

        let mh = MhConfig::from_eta_tilde(aux_step_factor * eta / xi, xi, 8 * STEPS, seed);
        let run = aux_run(f.as_ref(), &space, &mh, &far, Some(&start)).unwrap();
        assert!(run.hit.is_none());
        let k = run
            .gaussian_branch
            .iter()
            .enumerate()
            .filter(|(_, g)| **g)
            .nth(STEPS - 1)
            .map(|(k, _)| k)
            .expect("enough Gaussian-branch steps");
        aux_end.push(run.samples.get(k + 1)[0]);
    }
    let (d, p) = ks_two_sample(&sgld_end, &aux_end);
    let mean = sgld_end.iter().sum::<f64>() / RUNS as f64;
    let var = sgld_end.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / RUNS as f64;
    (d, p, var.sqrt())
}

#[test]
fn sgld_matches_gaussian_branch_subsequence() {
    let (d, p, spread) = endpoint_ks(1.0);
    assert!(p > 0.01, "KS D = {d}, p = {p}");
    assert!(spread > 0.05, "spread {spread}");
}

#[test]
fn mismatched_step_is_detected() {
    let (d, p, _) = endpoint_ks(1.2);
    assert!(p < 0.01, "KS D = {d}, p = {p}");
}
