//! Langevin iterations with rejection, best-iterate selection and
//! hitting-time bookkeeping, plus the plain SGD baseline.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, dist};
use crate::objective::GradientOracle;
use crate::rng::{standard_normal_vec, SimRng};
use crate::space::ParameterSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgldConfig {
    pub xi: f64,
    pub eta: f64,
    pub k_max: usize,
    /// Rejection radius `r`; defaults to `4√(2ηd/ξ)`.
    #[serde(default)]
    pub dist_bound: Option<f64>,
    #[serde(default = "one")]
    pub eval_stride: usize,
    #[serde(default)]
    pub seed: u64,
    /// Start point; uniform on `K` when absent.
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    #[serde(default)]
    pub record_noise: bool,
}

fn one() -> usize {
    1
}

impl SgldConfig {
    pub fn new(xi: f64, eta: f64, k_max: usize) -> Self {
        Self {
            xi,
            eta,
            k_max,
            dist_bound: None,
            eval_stride: 1,
            seed: 0,
            start: None,
            record_noise: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::InvalidParameter(format!("xi must be positive, got {}", self.xi)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if self.eval_stride == 0 {
            return Err(Error::InvalidParameter("eval_stride must be at least 1".into()));
        }
        if let Some(r) = self.dist_bound {
            if !(r > 0.0) {
                return Err(Error::InvalidParameter(format!("dist_bound must be positive, got {r}")));
            }
        }
        Ok(())
    }

    pub fn radius(&self, d: usize) -> f64 {
        self.dist_bound
            .unwrap_or_else(|| 4.0 * (2.0 * self.eta * d as f64 / self.xi).sqrt())
    }
}

pub type DistanceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum TargetShape {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Whole,
    /// Euclidean distance to the set.
    Distance(DistanceFn),
}

/// A set `U` whose `ρ`-neighbourhood is watched for hits.
#[derive(Clone)]
pub struct TargetSet {
    pub name: String,
    pub shape: TargetShape,
    pub rho: f64,
}

impl TargetSet {
    pub fn ball(name: impl Into<String>, center: Vec<f64>, radius: f64, rho: f64) -> Self {
        Self {
            name: name.into(),
            shape: TargetShape::Ball { center, radius },
            rho,
        }
    }

    pub fn whole(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            shape: TargetShape::Whole,
            rho: 0.0,
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        match &self.shape {
            TargetShape::Ball { center, radius } => (dist(x, center) - radius).max(0.0),
            TargetShape::Whole => 0.0,
            TargetShape::Distance(f) => f(x),
        }
    }

    /// `d(x, U) ≤ ρ`.
    pub fn hit(&self, x: &[f64]) -> bool {
        self.distance(x) <= self.rho
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub eval_stride: usize,
    /// Iterates at `k = 0, s, 2s, …`.
    pub iterates: Vec<Vec<f64>>,
    pub f_values: Vec<f64>,
    /// Index into `iterates` of the first minimal `f` value.
    pub best_index: usize,
    pub hitting: BTreeMap<String, Option<usize>>,
    pub noise_draws: Option<Vec<Vec<f64>>>,
    pub accepted: usize,
    pub steps: usize,
}

impl Trace {
    pub fn best(&self) -> &[f64] {
        &self.iterates[self.best_index]
    }

    pub fn best_value(&self) -> f64 {
        self.f_values[self.best_index]
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            1.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }

    /// Writes columns `k, x_1..x_d, f, hit_<name>…`, where a hit flag is 1
    /// from the first hitting step on.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d = self.iterates.first().map_or(0, Vec::len);
        let mut header = vec!["k".to_string()];
        header.extend((1..=d).map(|i| format!("x_{i}")));
        header.push("f".into());
        header.extend(self.hitting.keys().map(|n| format!("hit_{n}")));
        writeln!(out, "{}", header.join(","))?;
        for (i, (x, f)) in self.iterates.iter().zip(&self.f_values).enumerate() {
            let k = i * self.eval_stride;
            let mut row = vec![k.to_string()];
            row.extend(x.iter().map(|v| format!("{v:e}")));
            row.push(format!("{f:e}"));
            row.extend(
                self.hitting
                    .values()
                    .map(|h| if h.is_some_and(|t| t <= k) { "1" } else { "0" }.to_string()),
            );
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sgld,
    Sgd,
}

fn check_finite(v: &[f64], what: &'static str, step: usize) -> Result<()> {
    if all_finite(v) {
        Ok(())
    } else {
        Err(Error::NonFinite { what, step })
    }
}

/// Proposal `y = x − ηg + √(2η/ξ)w`, accepted iff `y ∈ K` and `‖y − x‖ ≤ r`.
pub fn sgld_step(x: &[f64], g: &[f64], w: &[f64], cfg: &SgldConfig, space: &ParameterSpace) -> Result<Vec<f64>> {
    check_finite(g, "gradient", 0)?;
    check_finite(w, "noise", 0)?;
    let y = propose(Method::Sgld, x, g, w, cfg);
    Ok(if admissible(x, &y, cfg.radius(space.dim()), space) {
        y
    } else {
        x.to_vec()
    })
}

/// Proposal `y = x − η(g + w)` under the same rejection rule.
pub fn sgd_step(x: &[f64], g: &[f64], w: &[f64], cfg: &SgldConfig, space: &ParameterSpace) -> Result<Vec<f64>> {
    check_finite(g, "gradient", 0)?;
    check_finite(w, "noise", 0)?;
    let y = propose(Method::Sgd, x, g, w, cfg);
    Ok(if admissible(x, &y, cfg.radius(space.dim()), space) {
        y
    } else {
        x.to_vec()
    })
}

fn propose(method: Method, x: &[f64], g: &[f64], w: &[f64], cfg: &SgldConfig) -> Vec<f64> {
    match method {
        Method::Sgld => {
            let s = (2.0 * cfg.eta / cfg.xi).sqrt();
            x.iter()
                .zip(g)
                .zip(w)
                .map(|((xi, gi), wi)| xi - cfg.eta * gi + s * wi)
                .collect()
        }
        Method::Sgd => x
            .iter()
            .zip(g)
            .zip(w)
            .map(|((xi, gi), wi)| xi - cfg.eta * (gi + wi))
            .collect(),
    }
}

fn admissible(x: &[f64], y: &[f64], r: f64, space: &ParameterSpace) -> bool {
    space.contains_unchecked(y) && dist(x, y) <= r
}

pub fn sgld_run<F: Fn(&[f64]) -> f64>(
    oracle: &dyn GradientOracle,
    f_eval: F,
    space: &ParameterSpace,
    cfg: &SgldConfig,
    targets: &[TargetSet],
    rng: &mut SimRng,
) -> Result<(Vec<f64>, Trace)> {
    run(Method::Sgld, oracle, f_eval, space, cfg, targets, rng)
}

pub fn sgd_run<F: Fn(&[f64]) -> f64>(
    oracle: &dyn GradientOracle,
    f_eval: F,
    space: &ParameterSpace,
    cfg: &SgldConfig,
    targets: &[TargetSet],
    rng: &mut SimRng,
) -> Result<(Vec<f64>, Trace)> {
    run(Method::Sgd, oracle, f_eval, space, cfg, targets, rng)
}

pub fn run<F: Fn(&[f64]) -> f64>(
    method: Method,
    oracle: &dyn GradientOracle,
    f_eval: F,
    space: &ParameterSpace,
    cfg: &SgldConfig,
    targets: &[TargetSet],
    rng: &mut SimRng,
) -> Result<(Vec<f64>, Trace)> {
    cfg.validate()?;
    let d = space.dim();
    if oracle.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: oracle.dim(),
        });
    }
    let mut x = match &cfg.start {
        Some(s) => {
            if !space.contains(s)? {
                return Err(Error::OutsideSpace(s.clone()));
            }
            s.clone()
        }
        None => space.sample_uniform(rng),
    };
    let r = cfg.radius(d);
    let mut hitting: BTreeMap<String, Option<usize>> = targets.iter().map(|t| (t.name.clone(), None)).collect();
    let mark = |x: &[f64], k: usize, hitting: &mut BTreeMap<String, Option<usize>>| {
        for t in targets {
            let slot = hitting.get_mut(&t.name).expect("target registered");
            if slot.is_none() && t.hit(x) {
                *slot = Some(k);
            }
        }
    };
    mark(&x, 0, &mut hitting);

    let n_rec = cfg.k_max / cfg.eval_stride + 1;
    let mut iterates = Vec::with_capacity(n_rec);
    let mut f_values = Vec::with_capacity(n_rec);
    let mut noise_draws = cfg.record_noise.then(Vec::new);
    let mut best = (f_eval(&x), 0usize);
    iterates.push(x.clone());
    f_values.push(best.0);
    let mut accepted = 0;

    for k in 1..=cfg.k_max {
        let w = standard_normal_vec(rng, d);
        let g = oracle.sample(&x, rng).map_err(|e| Error::Oracle {
            step: k,
            source: Box::new(e),
        })?;
        check_finite(&g, "gradient", k)?;
        check_finite(&w, "noise", k)?;
        let y = propose(method, &x, &g, &w, cfg);
        if admissible(&x, &y, r, space) {
            x = y;
            accepted += 1;
        }
        if let Some(n) = noise_draws.as_mut() {
            n.push(w);
        }
        mark(&x, k, &mut hitting);
        if k % cfg.eval_stride == 0 {
            let f = f_eval(&x);
            if f < best.0 {
                best = (f, iterates.len());
            }
            iterates.push(x.clone());
            f_values.push(f);
        }
    }
    let trace = Trace {
        eval_stride: cfg.eval_stride,
        best_index: best.1,
        iterates,
        f_values,
        hitting,
        noise_draws,
        accepted,
        steps: cfg.k_max,
    };
    Ok((trace.best().to_vec(), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{ExactGradient, Objective, Quadratic, Scaled, ScaledOracle};
    use crate::rng::rng_for;
    use proptest::prelude::*;

    fn quad(d: usize) -> Arc<dyn Objective> {
        Arc::new(Quadratic {
            center: vec![0.0; d],
            scale: 1.0,
            offset: 0.0,
        })
    }

    #[test]
    fn zero_gradient_and_noise_is_a_fixed_point() {
        let space = ParameterSpace::unit_ball(2).unwrap();
        let cfg = SgldConfig::new(1.0, 0.1, 1);
        let x = [0.2, 0.1];
        assert_eq!(sgld_step(&x, &[0.0, 0.0], &[0.0, 0.0], &cfg, &space).unwrap(), x);
        assert_eq!(sgd_step(&x, &[0.0, 0.0], &[0.0, 0.0], &cfg, &space).unwrap(), x);
    }

    #[test]
    fn rejects_outside_space_and_beyond_radius() {
        let space = ParameterSpace::cube(0.0, 1.0, 1).unwrap();
        let mut cfg = SgldConfig::new(1.0, 0.01, 1);
        // y = 0.95 + 0.1 leaves K
        assert_eq!(sgld_step(&[0.95], &[-10.0], &[0.0], &cfg, &space).unwrap(), vec![0.95]);
        // y = 0.5 − 0.3 stays in K but travels more than r = 0.2
        cfg.dist_bound = Some(0.2);
        assert_eq!(sgld_step(&[0.5], &[30.0], &[0.0], &cfg, &space).unwrap(), vec![0.5]);
        let y = sgld_step(&[0.5], &[10.0], &[0.0], &cfg, &space).unwrap();
        assert!((y[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn default_radius() {
        let cfg = SgldConfig::new(2.0, 0.01, 1);
        assert!((cfg.radius(4) - 4.0 * 0.04f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn non_finite_inputs_are_errors() {
        let space = ParameterSpace::unit_ball(1).unwrap();
        let cfg = SgldConfig::new(1.0, 0.1, 1);
        assert!(matches!(
            sgld_step(&[0.0], &[f64::NAN], &[0.0], &cfg, &space),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            sgld_step(&[0.0], &[0.0], &[f64::INFINITY], &cfg, &space),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn whole_space_target_is_hit_at_start_and_empty_budget() {
        let space = ParameterSpace::unit_ball(2).unwrap();
        let f = quad(2);
        let cfg = SgldConfig::new(1.0, 0.01, 0);
        let mut rng = rng_for(1, 0);
        let (x, tr) = sgld_run(
            &ExactGradient(f.clone()),
            |p| f.value(p),
            &space,
            &cfg,
            &[TargetSet::whole("K")],
            &mut rng,
        )
        .unwrap();
        assert_eq!(tr.hitting["K"], Some(0));
        assert_eq!(tr.iterates.len(), 1);
        assert_eq!(x, tr.iterates[0]);
    }

    #[test]
    fn trace_length_and_best_index() {
        let space = ParameterSpace::unit_ball(2).unwrap();
        let f = quad(2);
        let mut cfg = SgldConfig::new(5.0, 0.01, 1003);
        cfg.eval_stride = 10;
        let mut rng = rng_for(2, 0);
        let (x, tr) = sgld_run(&ExactGradient(f.clone()), |p| f.value(p), &space, &cfg, &[], &mut rng).unwrap();
        assert_eq!(tr.iterates.len(), 1003 / 10 + 1);
        let min = tr.f_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let first = tr.f_values.iter().position(|&v| v == min).unwrap();
        assert_eq!(tr.best_index, first);
        assert_eq!(x, tr.iterates[first]);
    }

    #[test]
    fn sgd_converges_on_a_quadratic() {
        let space = ParameterSpace::unit_ball(2).unwrap();
        let f = quad(2);
        let mut cfg = SgldConfig::new(1.0, 1e-3, 20_000);
        cfg.start = Some(vec![0.6, -0.5]);
        let mut rng = rng_for(3, 0);
        let target = TargetSet::ball("min", vec![0.0, 0.0], 0.0, 1e-2);
        let (x, tr) = sgd_run(
            &ExactGradient(f.clone()),
            |p| f.value(p),
            &space,
            &cfg,
            &[target],
            &mut rng,
        )
        .unwrap();
        assert!(tr.hitting["min"].is_some());
        assert!(crate::linalg::norm(&x) < 1e-2);
    }

    #[test]
    fn temperature_rescaling_gives_the_same_trace() {
        let space = ParameterSpace::unit_ball(2).unwrap();
        let f = quad(2);
        let xi = 8.0;
        let mut a = SgldConfig::new(xi, 1e-3, 500);
        a.seed = 4;
        a.start = Some(vec![0.3, 0.3]);
        let mut b = a.clone();
        b.xi = 1.0;
        b.eta = a.eta / xi;
        b.dist_bound = Some(a.radius(2));
        let fx = Scaled {
            inner: f.clone(),
            factor: xi,
        };
        let (_, ta) = sgld_run(
            &ExactGradient(f.clone()),
            |p| f.value(p),
            &space,
            &a,
            &[],
            &mut rng_for(4, 0),
        )
        .unwrap();
        let oracle = ScaledOracle {
            inner: ExactGradient(f.clone()),
            factor: xi,
        };
        let (_, tb) = sgld_run(&oracle, |p| fx.value(p) / xi, &space, &b, &[], &mut rng_for(4, 0)).unwrap();
        assert_eq!(ta.accepted, tb.accepted);
        for (p, q) in ta.iterates.iter().zip(&tb.iterates) {
            assert!(dist(p, q) < 1e-12);
        }
    }

    #[test]
    fn oracle_failure_reports_step() {
        struct Bad;
        impl GradientOracle for Bad {
            fn dim(&self) -> usize {
                1
            }
            fn sample(&self, _x: &[f64], _rng: &mut SimRng) -> Result<Vec<f64>> {
                Ok(vec![f64::NAN])
            }
        }
        let space = ParameterSpace::unit_ball(1).unwrap();
        let cfg = SgldConfig::new(1.0, 0.01, 5);
        let err = sgld_run(&Bad, |_| 0.0, &space, &cfg, &[], &mut rng_for(5, 0)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 1, .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn iterates_stay_in_space_and_move_at_most_r(seed in 0u64..1000, xi in 0.5f64..20.0, eta in 1e-4f64..5e-2) {
            let space = ParameterSpace::annulus(0.5, 1.0, 2).unwrap();
            let f = quad(2);
            let cfg = SgldConfig::new(xi, eta, 300);
            let mut rng = rng_for(seed, 0);
            let (_, tr) = sgld_run(&ExactGradient(f.clone()), |p| f.value(p), &space, &cfg, &[], &mut rng).unwrap();
            let r = cfg.radius(2);
            for w in tr.iterates.windows(2) {
                prop_assert!(space.contains(&w[1]).unwrap());
                prop_assert!(dist(&w[0], &w[1]) <= r);
            }
            let (_, again) = sgld_run(&ExactGradient(f.clone()), |p| f.value(p), &space, &cfg, &[], &mut rng_for(seed, 0)).unwrap();
            prop_assert_eq!(tr, again);
        }
    }
}
