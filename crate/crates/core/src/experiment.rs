//! Config-driven experiment runner.
//!
//! A config is a TOML file naming one experiment, the seeds to run and an
//! output directory:
//!
//! ```toml
//! seeds = [1, 2, 3]
//! output_dir = "out/fig1"
//!
//! [experiment.fig1]
//! n = 5000
//! c0 = 0.5
//! ```
//!
//! Every experiment produces named pass/fail checks, per-seed summary rows
//! and CSV artifacts; [`run_experiment`] writes them together with a
//! `manifest.json` carrying the config hash and artifact digests.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::chain::{
    build_kernel_1d, chain_constants, closeness_bound, closeness_check, conductance_estimate, conductance_lower_bound,
    mh_run, MhConfig,
};
use crate::cheeger::{
    cheeger_bruteforce, default_eps, gradient_field, positivity_bound, saddle_field, stability_check,
    vectorfield_lower_bound, CellSet, CheegerEstimate, Divergence, Family, FieldFn, GridMeasure, SmoothnessProfile,
    VectorField,
};
use crate::error::{Error, Result};
use crate::linalg::{dist, dot, norm};
use crate::objective::{
    argmin_on, finite_difference_grad, range_on, subexponential_check, unbiasedness_check, ExactGradient,
    GradientOracle, LossFn, LossSampler, NoisyGradient, Objective, ObjectiveSpec, SmoothedObjective, SmoothingBase,
};
use crate::rng::{rng_for, standard_normal_vec};
use crate::sgld::{run, Method, SgldConfig, TargetSet};
use crate::space::ParameterSpace;
use crate::stats::{histogram, tv_distance, Estimate, RunningMean};
use crate::zeroone::{
    disagreement_mc, disagreement_probability, empirical_risk, fig1_tasks, population_risks_mc, sample_dataset,
    sample_features, uniform_gap, MassartModel,
};

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "SGLD_LAB_WORKERS";

pub const EXPERIMENTS: [(&str, &str); 7] = [
    ("fig1", "empirical vs population risk of the 1D threshold task"),
    ("escape", "SGLD vs SGD escape from a spurious basin"),
    (
        "stationarity",
        "Metropolis-Hastings histogram vs the grid Gibbs measure",
    ),
    (
        "cheeger_table",
        "restricted Cheeger constants, vector-field bounds, stability, saddle field",
    ),
    (
        "conductance",
        "discretized kernel checks, conductance vs Cheeger, closeness",
    ),
    (
        "zeroone_learn",
        "Massart halfspace learning, disagreement and Lipschitz checks",
    ),
    (
        "smoothing_checks",
        "unbiasedness, curvature and moment checks of the smoothed oracle",
    ),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Fig1(Fig1Params),
    Escape(EscapeParams),
    Stationarity(StationarityParams),
    CheegerTable(CheegerTableParams),
    Conductance(ConductanceParams),
    #[serde(rename = "zeroone_learn")]
    ZeroOneLearn(ZeroOneParams),
    SmoothingChecks(SmoothingParams),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Fig1(_) => "fig1",
            Experiment::Escape(_) => "escape",
            Experiment::Stationarity(_) => "stationarity",
            Experiment::CheegerTable(_) => "cheeger_table",
            Experiment::Conductance(_) => "conductance",
            Experiment::ZeroOneLearn(_) => "zeroone_learn",
            Experiment::SmoothingChecks(_) => "smoothing_checks",
        }
    }
}

fn default_c0() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig1Params {
    pub n: usize,
    #[serde(default = "default_c0")]
    pub c0: f64,
    pub grid_points: usize,
    pub max_sup_gap: f64,
    pub min_spurious: usize,
    /// Empirical minima closer than this to a population minimum are not
    /// counted as spurious.
    pub separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EscapeParams {
    pub objective: ObjectiveSpec,
    /// Smooth objective whose global minimizer defines the target; defaults
    /// to `objective`.
    #[serde(default)]
    pub population: Option<ObjectiveSpec>,
    pub space: ParameterSpace,
    pub eta: f64,
    pub k_max: usize,
    pub xi_scan: Vec<f64>,
    pub rho: f64,
    /// Starting point of every run, inside the spurious basin.
    pub start: Vec<f64>,
    #[serde(default)]
    pub grad_noise: f64,
    #[serde(default = "default_stride")]
    pub eval_stride: usize,
    pub sgld_min_hits: usize,
    pub sgd_max_hits: usize,
}

fn default_stride() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationarityParams {
    pub objective: ObjectiveSpec,
    pub space: ParameterSpace,
    pub xi: f64,
    pub eta_tilde: f64,
    pub k_steps: usize,
    pub bins: usize,
    pub grid_resolution: usize,
    #[serde(default)]
    pub burn_in: usize,
    pub max_tv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheegerTableParams {
    pub cases: Vec<CheegerCase>,
}

/// Candidate sets `V` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Whole,
    Interval { lo: f64, hi: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    OutsideBall { center: Vec<f64>, radius: f64 },
}

impl SetSpec {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            SetSpec::Whole => true,
            SetSpec::Interval { lo, hi } => x[0] >= *lo && x[0] <= *hi,
            SetSpec::Ball { center, radius } => dist(x, center) <= *radius,
            SetSpec::OutsideBall { center, radius } => dist(x, center) >= *radius,
        }
    }

    pub fn cells(&self, gm: &GridMeasure, name: &str) -> CellSet {
        gm.set_where(name, |x| self.contains(x))
    }
}

/// Vector fields for the lower-bound cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// `∇f / G`. `g` defaults to the scanned maximum of `‖∇f‖`.
    Gradient {
        #[serde(default)]
        g: Option<f64>,
        step_bound: f64,
    },
    /// `φ(x) = 1 − e^{−(x − lo)/length}` on a 1D box.
    ExpRamp { length: f64 },
    /// `φ(x) = −slope·(x − lo) + curvature·max(0, x − knot)²` on a 1D box.
    Hinge {
        slope: f64,
        knot: f64,
        curvature: f64,
        step_bound: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Perturbation {
    Shift { by: f64 },
    Ripple { amplitude: f64, frequency: f64 },
}

fn default_rel_tol() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheegerCase {
    /// Uniform measure on `[0, 1]` restricted to an interval `V`.
    Interval {
        name: String,
        resolution: usize,
        v: SetSpec,
        expected: f64,
        #[serde(default = "default_rel_tol")]
        rel_tol: f64,
    },
    /// Vector-field lower bound against the brute-force estimate of `C_{ξf}(V)`.
    Soundness {
        name: String,
        objective: ObjectiveSpec,
        space: ParameterSpace,
        xi: f64,
        v: SetSpec,
        field: FieldSpec,
        resolution: usize,
        #[serde(default = "default_rel_tol")]
        rel_tol: f64,
        /// Required minimum of the lower bound over grid points.
        #[serde(default)]
        floor: Option<f64>,
    },
    Stability {
        name: String,
        objective: ObjectiveSpec,
        space: ParameterSpace,
        v: SetSpec,
        perturbation: Perturbation,
        resolution: usize,
    },
    Saddle {
        name: String,
        objective: ObjectiveSpec,
        space: ParameterSpace,
        epsilon: f64,
        #[serde(default = "one")]
        margin: f64,
        samples: usize,
        probes: usize,
        max_draws: usize,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConductanceParams {
    pub objective: ObjectiveSpec,
    pub space: ParameterSpace,
    pub xi: f64,
    pub eta_tilde: f64,
    pub n_states: usize,
    pub v: SetSpec,
    pub rho: f64,
    pub max_tv: f64,
    pub max_detailed_balance: f64,
    #[serde(default)]
    pub closeness: Option<ClosenessParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosenessParams {
    pub objective: ObjectiveSpec,
    pub space: ParameterSpace,
    pub xi: f64,
    pub eta_tilde: f64,
    pub states: usize,
    pub proposals: usize,
    pub cells: usize,
    pub min_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroOneParams {
    #[serde(default)]
    pub learn: Option<LearnParams>,
    #[serde(default)]
    pub disagreement: Option<DisagreementParams>,
    #[serde(default)]
    pub lipschitz: Option<LipschitzParams>,
    #[serde(default)]
    pub gap: Option<GapParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnParams {
    pub dim: usize,
    #[serde(default = "default_c0")]
    pub c0: f64,
    pub n: usize,
    /// Smoothing width; when absent it is derived from `nu` and `rho_k`.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default = "default_rho_k")]
    pub rho_k: f64,
    pub xi: f64,
    pub eta: f64,
    pub k_max: usize,
    #[serde(default = "default_stride")]
    pub eval_stride: usize,
    pub population_mc: usize,
    pub slack: f64,
    pub min_success: usize,
}

fn default_rho_k() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisagreementParams {
    pub dim: usize,
    pub pairs: usize,
    pub samples: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzParams {
    pub dim: usize,
    #[serde(default = "default_c0")]
    pub c0: f64,
    pub pairs: usize,
    pub samples: usize,
    #[serde(default = "default_rho_k")]
    pub rho_k: f64,
    #[serde(default = "three")]
    pub constant: f64,
}

fn three() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapParams {
    pub dim: usize,
    #[serde(default = "default_c0")]
    pub c0: f64,
    pub n: usize,
    pub probes: usize,
    pub samples: usize,
    #[serde(default = "default_rho_k")]
    pub rho_k: f64,
    pub max_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingParams {
    pub cases: Vec<SmoothingCase>,
}

/// What the smoothing checks are run on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    /// `ℓ(x; a) = 1{x > a}` in one dimension.
    Step { thresholds: Vec<f64> },
    /// Halfspace zero-one loss on a Massart sample drawn from the seed.
    ZeroOne {
        dim: usize,
        n: usize,
        #[serde(default = "default_c0")]
        c0: f64,
    },
    /// A deterministic objective; its bound is its maximum over the space.
    Function { objective: ObjectiveSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingCase {
    pub name: String,
    pub loss: LossSpec,
    pub space: ParameterSpace,
    pub sigma: f64,
    pub points: Vec<Vec<f64>>,
    pub n_grad: usize,
    pub m_fd: usize,
    pub fd_step: f64,
    #[serde(default)]
    pub curvature_probes: usize,
    #[serde(default)]
    pub curvature_m: usize,
    #[serde(default)]
    pub moment_scales: Vec<f64>,
    #[serde(default)]
    pub moment_draws: usize,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn nonzero(name: &str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be at least 1")))
    }
}

fn space_ok(space: &ParameterSpace) -> Result<()> {
    space.validate().map_err(|e| invalid(e.to_string()))
}

fn grid_dim(space: &ParameterSpace) -> Result<()> {
    if space.dim() > 2 {
        return Err(invalid(format!(
            "grid estimates need dimension 1 or 2, got {}",
            space.dim()
        )));
    }
    Ok(())
}

fn objective_fits(spec: &ObjectiveSpec, space: &ParameterSpace) -> Result<()> {
    space_ok(space)?;
    let d = spec.build_raw().dim();
    if d != space.dim() {
        return Err(invalid(format!(
            "objective has dimension {d}, space has {}",
            space.dim()
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// SHA-256 of the canonical JSON form, independent of TOML layout and
    /// of where outputs are written.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&(&self.seeds, &self.experiment)).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(invalid("seeds must not be empty"));
        }
        match &self.experiment {
            Experiment::Fig1(p) => {
                nonzero("n", p.n)?;
                positive("c0", p.c0)?;
                if p.c0 > 1.0 {
                    return Err(invalid("c0 must be at most 1"));
                }
                if p.grid_points < 3 {
                    return Err(invalid("grid_points must be at least 3"));
                }
                positive("max_sup_gap", p.max_sup_gap)?;
                positive("separation", p.separation)?;
            }
            Experiment::Escape(p) => {
                objective_fits(&p.objective, &p.space)?;
                if let Some(pop) = &p.population {
                    objective_fits(pop, &p.space)?;
                }
                positive("eta", p.eta)?;
                positive("rho", p.rho)?;
                nonzero("eval_stride", p.eval_stride)?;
                if p.xi_scan.is_empty() {
                    return Err(invalid("xi_scan must not be empty"));
                }
                for &xi in &p.xi_scan {
                    positive("xi", xi)?;
                }
                if p.start.len() != p.space.dim() || !p.space.contains_unchecked(&p.start) {
                    return Err(invalid("start must be a point of the space"));
                }
                if p.grad_noise < 0.0 {
                    return Err(invalid("grad_noise must be nonnegative"));
                }
            }
            Experiment::Stationarity(p) => {
                objective_fits(&p.objective, &p.space)?;
                if p.space.dim() != 1 {
                    return Err(invalid("stationarity histograms need a 1D space"));
                }
                positive("xi", p.xi)?;
                positive("eta_tilde", p.eta_tilde)?;
                nonzero("bins", p.bins)?;
                nonzero("grid_resolution", p.grid_resolution)?;
                if p.burn_in >= p.k_steps {
                    return Err(invalid("burn_in must be below k_steps"));
                }
                positive("max_tv", p.max_tv)?;
            }
            Experiment::CheegerTable(p) => {
                if p.cases.is_empty() {
                    return Err(invalid("cheeger_table needs at least one case"));
                }
                for c in &p.cases {
                    match c {
                        CheegerCase::Interval {
                            resolution,
                            expected,
                            rel_tol,
                            ..
                        } => {
                            nonzero("resolution", *resolution)?;
                            positive("expected", *expected)?;
                            positive("rel_tol", *rel_tol)?;
                        }
                        CheegerCase::Soundness {
                            objective,
                            space,
                            xi,
                            resolution,
                            field,
                            ..
                        } => {
                            objective_fits(objective, space)?;
                            grid_dim(space)?;
                            positive("xi", *xi)?;
                            nonzero("resolution", *resolution)?;
                            if !matches!(field, FieldSpec::Gradient { .. }) && space.dim() != 1 {
                                return Err(invalid("exp_ramp and hinge fields are one-dimensional"));
                            }
                        }
                        CheegerCase::Stability {
                            objective,
                            space,
                            resolution,
                            ..
                        } => {
                            objective_fits(objective, space)?;
                            grid_dim(space)?;
                            nonzero("resolution", *resolution)?;
                        }
                        CheegerCase::Saddle {
                            objective,
                            space,
                            epsilon,
                            probes,
                            ..
                        } => {
                            objective_fits(objective, space)?;
                            positive("epsilon", *epsilon)?;
                            nonzero("probes", *probes)?;
                        }
                    }
                }
            }
            Experiment::Conductance(p) => {
                objective_fits(&p.objective, &p.space)?;
                if p.space.dim() != 1 {
                    return Err(invalid("kernel discretization needs a 1D space"));
                }
                positive("xi", p.xi)?;
                positive("eta_tilde", p.eta_tilde)?;
                if !(2..=2000).contains(&p.n_states) {
                    return Err(invalid("n_states must lie in [2, 2000]"));
                }
                positive("rho", p.rho)?;
                if let Some(c) = &p.closeness {
                    objective_fits(&c.objective, &c.space)?;
                    positive("closeness.xi", c.xi)?;
                    positive("closeness.eta_tilde", c.eta_tilde)?;
                    nonzero("closeness.cells", c.cells)?;
                }
            }
            Experiment::ZeroOneLearn(p) => {
                if p.learn.is_none() && p.disagreement.is_none() && p.lipschitz.is_none() && p.gap.is_none() {
                    return Err(invalid("zeroone_learn needs at least one block"));
                }
                if let Some(l) = &p.learn {
                    nonzero("dim", l.dim)?;
                    nonzero("n", l.n)?;
                    if l.sigma.is_none() && l.nu.is_none() {
                        return Err(invalid("learn needs sigma or nu"));
                    }
                    positive("xi", l.xi)?;
                    positive("eta", l.eta)?;
                    nonzero("eval_stride", l.eval_stride)?;
                }
                if let Some(d) = &p.disagreement {
                    nonzero("dim", d.dim)?;
                }
                if let Some(l) = &p.lipschitz {
                    nonzero("dim", l.dim)?;
                    if !(l.rho_k >= 0.0 && l.rho_k < 0.5) {
                        return Err(invalid("rho_k must lie in [0, 0.5)"));
                    }
                }
                if let Some(g) = &p.gap {
                    nonzero("dim", g.dim)?;
                    nonzero("n", g.n)?;
                    nonzero("probes", g.probes)?;
                }
            }
            Experiment::SmoothingChecks(p) => {
                if p.cases.is_empty() {
                    return Err(invalid("smoothing_checks needs at least one case"));
                }
                for c in &p.cases {
                    space_ok(&c.space)?;
                    positive("sigma", c.sigma)?;
                    positive("fd_step", c.fd_step)?;
                    let d = match &c.loss {
                        LossSpec::Step { thresholds } => {
                            if thresholds.is_empty() {
                                return Err(invalid("step loss needs thresholds"));
                            }
                            1
                        }
                        LossSpec::ZeroOne { dim, .. } => *dim,
                        LossSpec::Function { objective } => objective.build_raw().dim(),
                    };
                    if d != c.space.dim() || c.points.iter().any(|p| p.len() != d) {
                        return Err(invalid(format!("case {}: dimensions disagree", c.name)));
                    }
                    if c.points.is_empty() {
                        return Err(invalid(format!("case {}: needs at least one point", c.name)));
                    }
                    if c.curvature_probes > 0 {
                        grid_dim(&c.space)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Number of worker threads requested through [`WORKERS_ENV`].
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(invalid(format!("{WORKERS_ENV} must be a positive integer, got {s:?}"))),
        },
    }
}

/// A named pass/fail outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub checks: Vec<Check>,
    /// Per-seed summary rows.
    pub summaries: Vec<BTreeMap<String, Value>>,
    /// Statistics pooled over seeds.
    pub aggregate: BTreeMap<String, Value>,
    pub artifacts: Vec<Artifact>,
    pub error: Option<String>,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub workers: usize,
    pub passed: bool,
}

impl RunManifest {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Ctx {
    dir: PathBuf,
    checks: Vec<Check>,
    summaries: Vec<BTreeMap<String, Value>>,
    aggregate: BTreeMap<String, Value>,
    artifacts: Vec<String>,
}

impl Ctx {
    fn check(&mut self, name: impl Into<String>, passed: bool, value: f64, limit: f64, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            value,
            limit,
            detail: detail.into(),
        });
    }

    fn summary(&mut self, row: Value) {
        if let Value::Object(m) = row {
            self.summaries.push(m.into_iter().collect());
        }
    }

    fn csv(&mut self, file: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(file))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.artifacts.push(file.to_string());
        Ok(())
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// One plotted series over a shared x grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub series: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Writes curves as tidy CSV `(x, series, value)`; returns the row count.
pub fn emit_plot_data(curves: &[Curve], path: &Path) -> Result<usize> {
    let first = curves.first().ok_or(Error::Empty("curve list"))?;
    for c in curves {
        if c.x != first.x || c.y.len() != c.x.len() {
            return Err(Error::InvalidParameter(format!(
                "curve {} is not on the shared grid",
                c.series
            )));
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "series", "value"])?;
    let mut rows = 0;
    for c in curves {
        for (x, y) in c.x.iter().zip(&c.y) {
            w.write_record([num(*x), c.series.clone(), num(*y)])?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}

/// Runs with the worker count from [`WORKERS_ENV`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    run_experiment_with(cfg, workers_from_env()?)
}

/// Validates, runs every seed and writes artifacts plus `manifest.json`.
///
/// Configuration and setup problems are returned as errors before any
/// computation. A failure during the run is recorded in the manifest's
/// `error` field and marks the run as failed.
pub fn run_experiment_with(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<RunManifest> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| invalid(format!("cannot create {}: {e}", cfg.output_dir.display())))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| invalid(e.to_string()))?;
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let mut ctx = Ctx {
        dir: cfg.output_dir.clone(),
        checks: Vec::new(),
        summaries: Vec::new(),
        aggregate: BTreeMap::new(),
        artifacts: Vec::new(),
    };
    let outcome = pool.install(|| match &cfg.experiment {
        Experiment::Fig1(p) => fig1(p, &cfg.seeds, &mut ctx),
        Experiment::Escape(p) => escape(p, &cfg.seeds, &mut ctx),
        Experiment::Stationarity(p) => stationarity(p, &cfg.seeds, &mut ctx),
        Experiment::CheegerTable(p) => cheeger_table(p, &mut ctx),
        Experiment::Conductance(p) => conductance(p, &cfg.seeds, &mut ctx),
        Experiment::ZeroOneLearn(p) => zeroone_learn(p, &cfg.seeds, &mut ctx),
        Experiment::SmoothingChecks(p) => smoothing_checks(p, &cfg.seeds, &mut ctx),
    });
    let error = outcome.err().map(|e| e.to_string());
    let mut artifacts = Vec::new();
    for file in &ctx.artifacts {
        let bytes = fs::read(ctx.dir.join(file))?;
        artifacts.push(Artifact {
            file: file.clone(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
    }
    let manifest = RunManifest {
        experiment: cfg.experiment.name().to_string(),
        config_hash: cfg.hash(),
        seeds: cfg.seeds.clone(),
        passed: error.is_none() && !ctx.checks.is_empty() && ctx.checks.iter().all(|c| c.passed),
        checks: ctx.checks,
        summaries: ctx.summaries,
        aggregate: ctx.aggregate,
        artifacts,
        error,
        started_unix,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        workers: pool.current_num_threads(),
    };
    let mut f = fs::File::create(cfg.output_dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut f, &manifest).map_err(|e| Error::Io(e.into()))?;
    writeln!(f)?;
    Ok(manifest)
}

fn fig1(p: &Fig1Params, seeds: &[u64], ctx: &mut Ctx) -> Result<()> {
    let results = seeds
        .par_iter()
        .map(|&s| fig1_tasks(p.n, p.c0, p.grid_points, &mut rng_for(s, 0)))
        .collect::<Result<Vec<_>>>()?;
    for (&seed, curves) in seeds.iter().zip(&results) {
        let gap = curves.sup_gap();
        let spurious = curves.spurious_minima(p.separation);
        let worst = spurious
            .iter()
            .map(|&i| curves.empirical[i])
            .fold(f64::NEG_INFINITY, f64::max);
        ctx.check(
            format!("sup_gap[seed={seed}]"),
            gap <= p.max_sup_gap,
            gap,
            p.max_sup_gap,
            "",
        );
        ctx.check(
            format!("spurious_minima[seed={seed}]"),
            spurious.len() >= p.min_spurious,
            spurious.len() as f64,
            p.min_spurious as f64,
            format!("worst spurious empirical risk {worst:.4}"),
        );
        ctx.summary(json!({"seed": seed, "sup_gap": gap, "spurious_minima": spurious.len(), "worst_spurious": worst}));
        let file = format!("fig1_seed{seed}.csv");
        emit_plot_data(
            &[
                Curve {
                    series: "empirical".into(),
                    x: curves.grid.clone(),
                    y: curves.empirical.clone(),
                },
                Curve {
                    series: "population".into(),
                    x: curves.grid.clone(),
                    y: curves.population.clone(),
                },
            ],
            &ctx.dir.join(&file),
        )?;
        ctx.artifacts.push(file);
    }
    let gaps = results.iter().map(|c| c.sup_gap());
    ctx.aggregate
        .insert("max_sup_gap".into(), json!(gaps.fold(0.0f64, f64::max)));
    Ok(())
}

fn oracle_for(f: &Arc<dyn Objective>, noise: f64) -> Box<dyn GradientOracle> {
    if noise > 0.0 {
        Box::new(NoisyGradient {
            objective: f.clone(),
            std: noise,
        })
    } else {
        Box::new(ExactGradient(f.clone()))
    }
}

fn escape(p: &EscapeParams, seeds: &[u64], ctx: &mut Ctx) -> Result<()> {
    let f = p.objective.build(&p.space)?;
    let pop = match &p.population {
        Some(s) => s.build(&p.space)?,
        None => f.clone(),
    };
    let target_center = argmin_on(pop.as_ref(), &p.space, 20_000);
    let target = TargetSet::ball("global_min", target_center.clone(), 0.0, p.rho);
    let oracle = oracle_for(&f, p.grad_noise);
    let f_eval = |x: &[f64]| f.value(x);

    let mut jobs: Vec<(Method, usize, u64)> = Vec::new();
    for (k, _) in p.xi_scan.iter().enumerate() {
        jobs.extend(seeds.iter().map(|&s| (Method::Sgld, k, s)));
    }
    jobs.extend(seeds.iter().map(|&s| (Method::Sgd, usize::MAX, s)));
    let outcomes = jobs
        .par_iter()
        .map(|&(method, k, seed)| {
            let mut cfg = SgldConfig::new(if method == Method::Sgld { p.xi_scan[k] } else { 1.0 }, p.eta, p.k_max);
            cfg.seed = seed;
            cfg.eval_stride = p.eval_stride;
            cfg.start = Some(p.start.clone());
            let stream = match method {
                Method::Sgld => 1 + k as u64,
                Method::Sgd => 0,
            };
            let mut rng = rng_for(seed, stream);
            run(
                method,
                oracle.as_ref(),
                f_eval,
                &p.space,
                &cfg,
                std::slice::from_ref(&target),
                &mut rng,
            )
            .map(|(best, trace)| {
                (
                    best,
                    trace.best_value(),
                    trace.hitting["global_min"],
                    trace.acceptance_rate(),
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut hits_per_xi = vec![0usize; p.xi_scan.len()];
    let mut per_seed: BTreeMap<u64, BTreeMap<String, Value>> = BTreeMap::new();
    let mut sgd_hits = 0usize;
    for (&(method, k, seed), (best, best_f, hit, acc)) in jobs.iter().zip(&outcomes) {
        let (name, xi) = match method {
            Method::Sgld => ("sgld", p.xi_scan[k]),
            Method::Sgd => ("sgd", f64::NAN),
        };
        if hit.is_some() {
            match method {
                Method::Sgld => hits_per_xi[k] += 1,
                Method::Sgd => sgd_hits += 1,
            }
        }
        rows.push(vec![
            name.to_string(),
            num(xi),
            seed.to_string(),
            hit.map_or(String::new(), |h| h.to_string()),
            best.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" "),
            num(*best_f),
            num(*acc),
        ]);
        let row = per_seed.entry(seed).or_default();
        match method {
            Method::Sgld => {
                row.insert(format!("sgld_hit_step[xi={xi}]"), json!(hit));
            }
            Method::Sgd => {
                row.insert("sgd_hit_step".into(), json!(hit));
            }
        }
    }
    for (seed, mut row) in per_seed {
        row.insert("seed".into(), json!(seed));
        ctx.summaries.push(row);
    }
    let n = seeds.len() as f64;
    for (xi, h) in p.xi_scan.iter().zip(&hits_per_xi) {
        ctx.aggregate
            .insert(format!("sgld_escape_fraction[xi={xi}]"), json!(*h as f64 / n));
    }
    ctx.aggregate
        .insert("sgd_escape_fraction".into(), json!(sgd_hits as f64 / n));
    ctx.csv(
        "escape_runs.csv",
        &["method", "xi", "seed", "hit_step", "best_x", "best_f", "acceptance"],
        &rows,
    )?;
    let (best_k, best_hits) = hits_per_xi
        .iter()
        .enumerate()
        .fold((0, 0), |acc, (k, &h)| if h > acc.1 { (k, h) } else { acc });
    let scan = p
        .xi_scan
        .iter()
        .zip(&hits_per_xi)
        .map(|(xi, h)| format!("xi={xi}: {h}/{}", seeds.len()))
        .collect::<Vec<_>>()
        .join(", ");
    ctx.check(
        "sgld_escape",
        best_hits >= p.sgld_min_hits,
        best_hits as f64,
        p.sgld_min_hits as f64,
        format!("best xi {} ({scan}); target {:?}", p.xi_scan[best_k], target_center),
    );
    ctx.check(
        "sgd_stuck",
        sgd_hits <= p.sgd_max_hits,
        sgd_hits as f64,
        p.sgd_max_hits as f64,
        format!("both methods start at {:?}", p.start),
    );
    Ok(())
}

fn stationarity(p: &StationarityParams, seeds: &[u64], ctx: &mut Ctx) -> Result<()> {
    let f = p.objective.build(&p.space)?;
    let (lo, hi) = p.space.bounding_box();
    let xi = p.xi;
    let fc = f.clone();
    let gm = GridMeasure::build(&p.space, move |x| xi * fc.value(x), p.grid_resolution)?;
    let oracle = gm.bin_masses(lo[0], hi[0], p.bins)?;
    let hists = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = MhConfig::from_eta_tilde(p.eta_tilde, p.xi, p.k_steps, seed);
            let samples = mh_run(f.as_ref(), &p.space, &cfg, None)?;
            let xs = samples.coord(0);
            Ok(histogram(&xs[p.burn_in..], lo[0], hi[0], p.bins))
        })
        .collect::<Result<Vec<_>>>()?;
    for (&seed, h) in seeds.iter().zip(&hists) {
        let tv = tv_distance(h, &oracle);
        ctx.check(
            format!("tv[seed={seed}]"),
            tv <= p.max_tv,
            tv,
            p.max_tv,
            format!("{} bins", p.bins),
        );
        ctx.summary(json!({"seed": seed, "tv": tv}));
        let width = (hi[0] - lo[0]) / p.bins as f64;
        let rows: Vec<Vec<String>> = (0..p.bins)
            .map(|b| vec![num(lo[0] + (b as f64 + 0.5) * width), num(h[b]), num(oracle[b])])
            .collect();
        ctx.csv(
            &format!("stationarity_seed{seed}.csv"),
            &["bin_center", "empirical", "grid"],
            &rows,
        )?;
    }
    Ok(())
}

fn estimate_on(gm: &GridMeasure, v: &CellSet, dim: usize) -> Result<CheegerEstimate> {
    let family = Family::standard(dim);
    let candidates = family.materialize(gm, v)?;
    cheeger_bruteforce(gm, v, &candidates, &family.name(), &default_eps(gm.space()))
}

fn positivity(ctx: &mut Ctx, name: &str, gm: &GridMeasure, v: &CellSet, est: &CheegerEstimate) {
    let eps = est.eps.iter().cloned().fold(f64::INFINITY, f64::min);
    let bound = positivity_bound(gm, v, eps);
    ctx.check(
        format!("{name}.positivity"),
        est.value > 0.0 && est.value + est.residual >= bound,
        est.value,
        bound,
        format!("residual {:.3e}", est.residual),
    );
}

fn est_row(name: &str, est: &CheegerEstimate) -> Vec<Vec<String>> {
    est.eps
        .iter()
        .zip(&est.per_eps)
        .zip(&est.argmin)
        .map(|((e, r), a)| vec![name.to_string(), num(*e), num(*r), a.clone(), num(est.value)])
        .collect()
}

fn build_field(spec: &FieldSpec, f: &Arc<dyn Objective>, space: &ParameterSpace) -> Result<VectorField> {
    let lo = space.bounding_box().0[0];
    Ok(match spec {
        FieldSpec::Gradient { g, step_bound } => {
            let mut profile = SmoothnessProfile::estimate(f.as_ref(), space, 20_000, 1.0, 0.0, *step_bound)?;
            if let Some(g) = g {
                profile.g = *g;
            }
            gradient_field(f.clone(), &profile, space)?
        }
        FieldSpec::ExpRamp { length } => {
            let l = *length;
            let phi: FieldFn = Arc::new(move |x: &[f64]| vec![1.0 - (-(x[0] - lo) / l).exp()]);
            VectorField {
                phi,
                divergence: Divergence::Closed(Arc::new(move |x: &[f64]| (-(x[0] - lo) / l).exp() / l)),
                step_bound: l,
                space: space.clone(),
            }
        }
        FieldSpec::Hinge {
            slope,
            knot,
            curvature,
            step_bound,
        } => {
            let (s, k, c) = (*slope, *knot, *curvature);
            let phi: FieldFn = Arc::new(move |x: &[f64]| vec![-s * (x[0] - lo) + c * (x[0] - k).max(0.0).powi(2)]);
            VectorField {
                phi,
                divergence: Divergence::Closed(Arc::new(move |x: &[f64]| -s + 2.0 * c * (x[0] - k).max(0.0))),
                step_bound: *step_bound,
                space: space.clone(),
            }
        }
    })
}

fn scaled_objective(f: &Arc<dyn Objective>, xi: f64) -> impl Fn(&[f64]) -> f64 + Sync {
    let f = f.clone();
    move |x: &[f64]| xi * f.value(x)
}

fn cheeger_table(p: &CheegerTableParams, ctx: &mut Ctx) -> Result<()> {
    let mut rows = Vec::new();
    let mut bounds = Vec::new();
    for case in &p.cases {
        match case {
            CheegerCase::Interval {
                name,
                resolution,
                v,
                expected,
                rel_tol,
            } => {
                let space = ParameterSpace::cube(0.0, 1.0, 1)?;
                let gm = GridMeasure::build(&space, |_| 0.0, *resolution)?;
                let vset = v.cells(&gm, "V");
                let family = Family::Intervals { points: resolution + 1 };
                let candidates = family.materialize(&gm, &vset)?;
                let est = cheeger_bruteforce(&gm, &vset, &candidates, &family.name(), &default_eps(&space))?;
                let rel = (est.value - expected).abs() / expected;
                ctx.check(
                    format!("{name}.value"),
                    rel <= *rel_tol,
                    est.value,
                    *expected,
                    format!("relative error {rel:.4}"),
                );
                positivity(ctx, name, &gm, &vset, &est);
                rows.extend(est_row(name, &est));
            }
            CheegerCase::Soundness {
                name,
                objective,
                space,
                xi,
                v,
                field,
                resolution,
                rel_tol,
                floor,
            } => {
                let f = objective.build_raw();
                let gm = GridMeasure::build(space, scaled_objective(&f, *xi), *resolution)?;
                let vset = v.cells(&gm, "V");
                let est = estimate_on(&gm, &vset, space.dim())?;
                let field = build_field(field, &f, space)?;
                let pts: Vec<Vec<f64>> = (0..gm.len()).filter(|&i| vset.mask[i]).map(|i| gm.center(i)).collect();
                let fg = f.clone();
                let lb = vectorfield_lower_bound(
                    &field,
                    move |x| {
                        fg.grad(x)
                            .unwrap_or_else(|| finite_difference_grad(|y| fg.value(y), x, 1e-6))
                    },
                    *xi,
                    &pts,
                )?;
                let limit = est.value * (1.0 + rel_tol) + est.residual;
                ctx.check(
                    format!("{name}.sound"),
                    lb <= limit,
                    lb,
                    limit,
                    format!("brute force {:.4}", est.value),
                );
                if let Some(fl) = floor {
                    ctx.check(
                        format!("{name}.floor"),
                        lb >= fl - 1e-12,
                        lb,
                        *fl,
                        format!("{} grid points", pts.len()),
                    );
                }
                positivity(ctx, name, &gm, &vset, &est);
                bounds.push(vec![name.clone(), num(lb), num(est.value), num(est.residual)]);
                rows.extend(est_row(name, &est));
            }
            CheegerCase::Stability {
                name,
                objective,
                space,
                v,
                perturbation,
                resolution,
            } => {
                let f = objective.build_raw();
                let f1 = f.clone();
                let gm1 = GridMeasure::build(space, move |x| f1.value(x), *resolution)?;
                let f2 = f.clone();
                let pert = perturbation.clone();
                let gm2 = GridMeasure::build(
                    space,
                    move |x| {
                        f2.value(x)
                            + match pert {
                                Perturbation::Shift { by } => by,
                                Perturbation::Ripple { amplitude, frequency } => amplitude * (frequency * x[0]).sin(),
                            }
                    },
                    *resolution,
                )?;
                let vset = v.cells(&gm1, "V");
                let family = Family::standard(space.dim());
                let candidates = family.materialize(&gm1, &vset)?;
                let rep = stability_check(&gm1, &gm2, &vset, &candidates, &default_eps(space))?;
                match perturbation {
                    Perturbation::Shift { .. } => {
                        let diff = (rep.c1.value - rep.c2.value).abs();
                        let per = rep
                            .c1
                            .per_eps
                            .iter()
                            .zip(&rep.c2.per_eps)
                            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                        ctx.check(
                            format!("{name}.equal"),
                            diff.max(per) <= 1e-12,
                            diff.max(per),
                            1e-12,
                            "constant shift",
                        );
                    }
                    Perturbation::Ripple { .. } => {
                        ctx.check(
                            format!("{name}.sandwich"),
                            rep.holds,
                            rep.lower_margin.min(rep.upper_margin),
                            -rep.tolerance,
                            format!("nu {:.4}, C1 {:.4}, C2 {:.4}", rep.nu, rep.c1.value, rep.c2.value),
                        );
                    }
                }
                positivity(ctx, name, &gm1, &vset, &rep.c1);
                rows.extend(est_row(&format!("{name}.f1"), &rep.c1));
                rows.extend(est_row(&format!("{name}.f2"), &rep.c2));
            }
            CheegerCase::Saddle {
                name,
                objective,
                space,
                epsilon,
                margin,
                samples,
                probes,
                max_draws,
            } => {
                let f = objective.build_raw();
                let profile = SmoothnessProfile::estimate(f.as_ref(), space, 40_000, *margin, 0.0, 0.0)?;
                let field = saddle_field(f.clone(), *epsilon, None, &profile, space)?;
                let mut rng = rng_for(0x5add1e, 0);
                let max_norm = (0..*samples)
                    .map(|_| norm(&field.value(&space.sample_uniform(&mut rng))))
                    .fold(0.0f64, f64::max);
                ctx.check(
                    format!("{name}.norm"),
                    max_norm <= 1.0,
                    max_norm,
                    1.0,
                    format!("{samples} samples"),
                );
                let se = epsilon.sqrt();
                let mut found = 0usize;
                let mut worst = f64::NEG_INFINITY;
                let mut draws = 0usize;
                while found < *probes && draws < *max_draws {
                    draws += 1;
                    let x = space.sample_uniform(&mut rng);
                    let (Some(g), Some(h)) = (f.grad(&x), f.hess(&x)) else {
                        return Err(Error::Unsupported(format!("{name}: objective has no Hessian at {x:?}")));
                    };
                    let lmin = h.symmetric_eigenvalues().min();
                    if norm(&g) < *epsilon && lmin <= -se {
                        found += 1;
                        worst = worst.max(field.div(&x));
                    }
                }
                ctx.check(
                    format!("{name}.probes"),
                    found == *probes,
                    found as f64,
                    *probes as f64,
                    format!("{draws} draws"),
                );
                ctx.check(
                    format!("{name}.negative_divergence"),
                    found > 0 && worst < 0.0,
                    worst,
                    0.0,
                    "max div over probes",
                );
            }
        }
    }
    ctx.csv(
        "cheeger_estimates.csv",
        &["case", "epsilon", "inf_ratio", "argmin", "extrapolated"],
        &rows,
    )?;
    if !bounds.is_empty() {
        ctx.csv(
            "vector_field_bounds.csv",
            &["case", "lower_bound", "brute_force", "residual"],
            &bounds,
        )?;
    }
    Ok(())
}

fn conductance(p: &ConductanceParams, seeds: &[u64], ctx: &mut Ctx) -> Result<()> {
    let f = p.objective.build(&p.space)?;
    let cfg = MhConfig::from_eta_tilde(p.eta_tilde, p.xi, 1, seeds[0]);
    let km = build_kernel_1d(f.as_ref(), &p.space, &cfg, p.n_states)?;
    let gm = GridMeasure::build(&p.space, scaled_objective(&f, p.xi), p.n_states)?;
    let row = km.max_row_error();
    ctx.check("kernel.rows", row <= 1e-10, row, 1e-10, "");
    let lazy = km.min_diagonal();
    ctx.check("kernel.lazy", lazy >= 0.5 - 1e-12, lazy, 0.5, "");
    let db = km.detailed_balance_error();
    ctx.check(
        "kernel.detailed_balance",
        db <= p.max_detailed_balance,
        db,
        p.max_detailed_balance,
        "",
    );
    let tv = tv_distance(&km.q, gm.weights());
    ctx.check(
        "kernel.stationary_tv",
        tv <= p.max_tv,
        tv,
        p.max_tv,
        format!("power residual {:.2e}", km.residual),
    );

    let d = 1;
    let (g, l) = chain_constants(f.as_ref(), &p.space, p.xi, 20_000)?;
    let h_max = p.space.default_h_max().unwrap_or(f64::INFINITY);
    let cap = h_max
        .min(16.0 * d as f64 * p.rho * p.rho)
        .min(1.0 / (100.0 * d as f64 * (g * g + l)));
    ctx.check(
        "conductance.precondition",
        p.eta_tilde <= cap,
        p.eta_tilde,
        cap,
        format!("G {g:.4}, L {l:.4}"),
    );
    let vset = p.v.cells(&gm, "V");
    let v_rho = gm.dilate(&vset, p.rho);
    let c_hat = estimate_on(&gm, &v_rho, 1)?;
    let candidates = Family::standard(1).materialize(&gm, &vset)?;
    let (phi, argmin) = conductance_estimate(&km, &vset, &candidates)?;
    let lb = conductance_lower_bound(p.eta_tilde, d, c_hat.value);
    ctx.check(
        "conductance.lemma",
        phi >= lb,
        phi,
        lb,
        format!("C(V_rho) {:.4}, attained by {argmin}", c_hat.value),
    );
    ctx.summary(
        json!({"conductance": phi, "lower_bound": lb, "cheeger_v_rho": c_hat.value, "stationary_tv": tv,
        "detailed_balance": db, "G": g, "L": l}),
    );
    let rows: Vec<Vec<String>> = km
        .states
        .iter()
        .zip(&km.q)
        .zip(gm.weights())
        .enumerate()
        .map(|(i, ((x, q), w))| vec![num(*x), num(*q), num(*w), num(km.p[(i, i)])])
        .collect();
    ctx.csv("kernel_stationary.csv", &["state", "q", "grid_mu", "diagonal"], &rows)?;
    ctx.csv(
        "conductance.csv",
        &["conductance", "lower_bound", "cheeger_v_rho", "argmin"],
        &[vec![num(phi), num(lb), num(c_hat.value), argmin]],
    )?;

    if let Some(c) = &p.closeness {
        let fc = c.objective.build(&c.space)?;
        let (g, l) = chain_constants(fc.as_ref(), &c.space, c.xi, 20_000)?;
        let d = c.space.dim();
        let floor = (-33.0 * c.eta_tilde * d as f64 * (g * g + l)).exp();
        let mut rows = Vec::new();
        for &seed in seeds {
            let mut rng = rng_for(seed, 7);
            let states: Vec<Vec<f64>> = (0..c.states).map(|_| c.space.sample_uniform(&mut rng)).collect();
            let cfg = MhConfig::from_eta_tilde(c.eta_tilde, c.xi, 1, seed);
            let rep = closeness_check(
                fc.as_ref(),
                &c.space,
                &cfg,
                &states,
                c.proposals,
                c.cells,
                g,
                l,
                &mut rng,
            )?;
            ctx.check(
                format!("closeness.min_acceptance[seed={seed}]"),
                rep.min_acceptance >= floor && rep.pairs >= c.min_pairs,
                rep.min_acceptance,
                floor,
                format!("{} pairs, G^2+L {:.4}", rep.pairs, g * g + l),
            );
            ctx.check(
                format!("closeness.delta[seed={seed}]"),
                rep.holds(),
                rep.delta_empirical,
                closeness_bound(c.eta_tilde, d, g, l),
                format!(
                    "lower violations {}, upper violations {}",
                    rep.lower_violations, rep.upper_violations
                ),
            );
            ctx.summary(
                json!({"seed": seed, "min_acceptance": rep.min_acceptance, "floor": floor,
                "delta": rep.delta_empirical, "delta_bound": rep.bound_value, "pairs": rep.pairs}),
            );
            rows.push(vec![
                seed.to_string(),
                num(rep.min_acceptance),
                num(floor),
                num(rep.delta_empirical),
                num(rep.bound_value),
                rep.pairs.to_string(),
            ]);
        }
        ctx.csv(
            "closeness.csv",
            &["seed", "min_acceptance", "floor", "delta", "delta_bound", "pairs"],
            &rows,
        )?;
    }
    Ok(())
}

fn random_unit(d: usize, rng: &mut crate::rng::SimRng) -> Vec<f64> {
    sample_features(1, d, rng).pop().expect("one feature")
}

fn zeroone_learn(p: &ZeroOneParams, seeds: &[u64], ctx: &mut Ctx) -> Result<()> {
    if let Some(l) = &p.learn {
        learn(l, seeds, ctx)?;
    }
    if let Some(dp) = &p.disagreement {
        let mut rows = Vec::new();
        for &seed in seeds {
            let mut rng = rng_for(seed, 20);
            let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..dp.pairs)
                .map(|_| {
                    (
                        standard_normal_vec(&mut rng, dp.dim),
                        standard_normal_vec(&mut rng, dp.dim),
                    )
                })
                .collect();
            let res = pairs
                .par_iter()
                .enumerate()
                .map(|(i, (x, y))| {
                    let exact = disagreement_probability(x, y)?;
                    let mc = disagreement_mc(x, y, dp.samples, &mut rng_for(seed, 1000 + i as u64));
                    Ok((exact, mc))
                })
                .collect::<Result<Vec<_>>>()?;
            let worst = res.iter().map(|(e, m)| (e - m.mean).abs()).fold(0.0f64, f64::max);
            ctx.check(
                format!("disagreement[seed={seed}]"),
                worst <= dp.tolerance,
                worst,
                dp.tolerance,
                format!("{} pairs", dp.pairs),
            );
            for (i, (e, m)) in res.iter().enumerate() {
                rows.push(vec![seed.to_string(), i.to_string(), num(*e), num(m.mean), num(m.se)]);
            }
        }
        ctx.csv(
            "disagreement.csv",
            &["seed", "pair", "arccos_formula", "monte_carlo", "se"],
            &rows,
        )?;
    }
    if let Some(lp) = &p.lipschitz {
        let mut rows = Vec::new();
        for &seed in seeds {
            let mut rng = rng_for(seed, 30);
            let model = MassartModel::new(random_unit(lp.dim, &mut rng), lp.c0)?;
            let kbar = ParameterSpace::annulus(0.5 - lp.rho_k, 1.0 + lp.rho_k, lp.dim)?;
            let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..lp.pairs)
                .map(|_| (kbar.sample_uniform(&mut rng), kbar.sample_uniform(&mut rng)))
                .collect();
            let res: Vec<(f64, f64, f64)> = pairs
                .par_iter()
                .enumerate()
                .map(|(i, (x, y))| {
                    let mut r = rng_for(seed, 2000 + i as u64);
                    let mut acc = RunningMean::default();
                    for a in sample_features(lp.samples, lp.dim, &mut r) {
                        acc.push(model.conditional_loss(x, &a) - model.conditional_loss(y, &a));
                    }
                    let e = acc.estimate();
                    (e.mean.abs(), e.se, dist(x, y))
                })
                .collect();
            let mut worst = f64::NEG_INFINITY;
            for (i, (diff, se, d)) in res.iter().enumerate() {
                worst = worst.max(diff - lp.constant * d - 2.0 * 3.0 * se);
                rows.push(vec![seed.to_string(), i.to_string(), num(*diff), num(*d), num(*se)]);
            }
            ctx.check(
                format!("lipschitz[seed={seed}]"),
                worst <= 0.0,
                worst,
                0.0,
                format!(
                    "max of |F(x)-F(y)| - {}|x-y| - 2 CI over {} pairs",
                    lp.constant, lp.pairs
                ),
            );
        }
        ctx.csv("lipschitz.csv", &["seed", "pair", "abs_diff", "distance", "se"], &rows)?;
    }
    if let Some(gp) = &p.gap {
        let mut rows = Vec::new();
        for &seed in seeds {
            let mut rng = rng_for(seed, 40);
            let model = MassartModel::new(random_unit(gp.dim, &mut rng), gp.c0)?;
            let ds = sample_dataset(&model, gp.n, &mut rng)?;
            let kbar = ParameterSpace::annulus(0.5 - gp.rho_k, 1.0 + gp.rho_k, gp.dim)?;
            let probes: Vec<Vec<f64>> = (0..gp.probes).map(|_| kbar.sample_uniform(&mut rng)).collect();
            let rep = uniform_gap(&ds, &model, &probes, gp.samples, &mut rng)?;
            ctx.check(
                format!("uniform_gap[seed={seed}]"),
                rep.gap <= gp.max_gap,
                rep.gap,
                gp.max_gap,
                format!("reference sqrt(d log(n/d)/n) = {:.4}", rep.reference),
            );
            rows.push(vec![
                seed.to_string(),
                num(rep.gap),
                num(rep.reference),
                num(rep.max_se),
            ]);
        }
        ctx.csv("uniform_gap.csv", &["seed", "gap", "reference", "max_se"], &rows)?;
    }
    Ok(())
}

fn learn(l: &LearnParams, seeds: &[u64], ctx: &mut Ctx) -> Result<()> {
    let space = ParameterSpace::annulus(0.5, 1.0, l.dim)?;
    let sigma = match (l.sigma, l.nu) {
        (Some(s), _) => s,
        (None, Some(nu)) => crate::objective::erm_sigma(nu, 3.0, 1.0, l.rho_k),
        (None, None) => unreachable!("validated"),
    };
    let outcomes = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = rng_for(seed, 0);
            let model = MassartModel::new(random_unit(l.dim, &mut rng), l.c0)?;
            let ds = sample_dataset(&model, l.n, &mut rng)?;
            let smoothed = ds.smoothed_risk(sigma, 1)?;
            let mut cfg = SgldConfig::new(l.xi, l.eta, l.k_max);
            cfg.seed = seed;
            cfg.eval_stride = l.eval_stride;
            let mut rng = rng_for(seed, 1);
            let f_eval = |x: &[f64]| empirical_risk(x, &ds).expect("dataset is nonempty");
            let (x_hat, trace) = run(Method::Sgld, &smoothed, f_eval, &space, &cfg, &[], &mut rng)?;
            let risks = population_risks_mc(
                &[x_hat.clone(), model.x_star().to_vec()],
                &model,
                l.population_mc,
                &mut rng_for(seed, 2),
            );
            let cos = dot(&x_hat, model.x_star()) / norm(&x_hat);
            Ok((trace.best_value(), risks[0], risks[1], cos))
        })
        .collect::<Result<Vec<(f64, Estimate, Estimate, f64)>>>();
    let outcomes = outcomes?;
    let mut rows = Vec::new();
    let mut success = 0;
    for (&seed, (f_hat, big_f, big_f_star, cos)) in seeds.iter().zip(&outcomes) {
        let ok = big_f.mean <= big_f_star.mean + l.slack;
        success += ok as usize;
        rows.push(vec![
            seed.to_string(),
            num(*f_hat),
            num(big_f.mean),
            num(big_f_star.mean),
            num(*cos),
            ok.to_string(),
        ]);
        ctx.summary(
            json!({"seed": seed, "empirical_risk": f_hat, "population_risk": big_f.mean,
            "population_risk_optimum": big_f_star.mean, "cosine_to_optimum": cos, "success": ok}),
        );
    }
    ctx.csv(
        "zeroone_learn.csv",
        &[
            "seed",
            "empirical_risk",
            "population_risk",
            "population_risk_optimum",
            "cosine",
            "success",
        ],
        &rows,
    )?;
    ctx.aggregate.insert(
        "learn_success_fraction".into(),
        json!(success as f64 / seeds.len() as f64),
    );
    ctx.check(
        "learn.success",
        success >= l.min_success,
        success as f64,
        l.min_success as f64,
        format!("sigma {sigma:.4}, {} seeds", seeds.len()),
    );
    Ok(())
}

fn smoothing_objective(case: &SmoothingCase, seed: u64) -> Result<SmoothedObjective> {
    let base = match &case.loss {
        LossSpec::Step { thresholds } => {
            let loss: LossFn = Arc::new(|x: &[f64], a: &[f64]| if x[0] > a[0] { 1.0 } else { 0.0 });
            SmoothingBase::Samples(LossSampler::new(
                1,
                loss,
                thresholds.iter().map(|t| vec![*t]).collect(),
                1.0,
            )?)
        }
        LossSpec::ZeroOne { dim, n, c0 } => {
            let mut rng = rng_for(seed, 50);
            let model = MassartModel::new(random_unit(*dim, &mut rng), *c0)?;
            SmoothingBase::Samples(sample_dataset(&model, *n, &mut rng)?.loss_sampler()?)
        }
        LossSpec::Function { objective } => {
            let f = objective.build(&case.space)?;
            let (_, hi) = range_on(f.as_ref(), &case.space, 20_000);
            SmoothingBase::Function {
                objective: f,
                bound: hi,
            }
        }
    };
    SmoothedObjective::new(base, case.sigma, 1)
}

fn smoothing_checks(p: &SmoothingParams, seeds: &[u64], ctx: &mut Ctx) -> Result<()> {
    let mut rows = Vec::new();
    for case in &p.cases {
        for &seed in seeds {
            let s = smoothing_objective(case, seed)?;
            let per_point = case
                .points
                .par_iter()
                .enumerate()
                .map(|(i, x)| {
                    let mut rng = rng_for(seed, 100 + i as u64);
                    unbiasedness_check(&s, x, case.n_grad, case.m_fd, case.fd_step, &mut rng)
                })
                .collect::<Vec<_>>();
            let mut worst = 0.0f64;
            for (x, coords) in case.points.iter().zip(&per_point) {
                for (j, c) in coords.iter().enumerate() {
                    worst = worst.max(c.z_score.abs());
                    rows.push(vec![
                        case.name.clone(),
                        seed.to_string(),
                        "unbiasedness".into(),
                        format!("{x:?}[{j}]"),
                        num(c.grad_mean),
                        num(c.fd),
                        num(c.z_score),
                    ]);
                }
            }
            ctx.check(
                format!("{}.unbiased[seed={seed}]", case.name),
                worst <= 3.0,
                worst,
                3.0,
                "max |z| over coordinates",
            );
            if case.curvature_probes > 0 {
                let rep = s.verify_smoothness_constant(
                    &case.space,
                    case.curvature_probes,
                    case.curvature_m.max(1),
                    &mut rng_for(seed, 60),
                )?;
                ctx.check(
                    format!("{}.curvature[seed={seed}]", case.name),
                    !rep.violated,
                    rep.max_curvature,
                    rep.bound,
                    format!("se {:.3e}", rep.curvature_se),
                );
                rows.push(vec![
                    case.name.clone(),
                    seed.to_string(),
                    "curvature".into(),
                    String::new(),
                    num(rep.max_curvature),
                    num(rep.bound),
                    num(rep.curvature_se),
                ]);
            }
            if !case.moment_scales.is_empty() {
                let x = &case.points[0];
                for m in subexponential_check(
                    &s,
                    x,
                    &case.moment_scales,
                    case.moment_draws.max(1),
                    &mut rng_for(seed, 70),
                ) {
                    ctx.check(
                        format!("{}.moment[scale={},seed={seed}]", case.name, m.scale),
                        m.passed(),
                        m.empirical.mean,
                        m.bound,
                        format!("se {:.3e}", m.empirical.se),
                    );
                    rows.push(vec![
                        case.name.clone(),
                        seed.to_string(),
                        "moment".into(),
                        num(m.scale),
                        num(m.empirical.mean),
                        num(m.bound),
                        num(m.empirical.se),
                    ]);
                }
            }
        }
    }
    ctx.csv(
        "smoothing_checks.csv",
        &["case", "seed", "check", "at", "estimate", "reference", "spread"],
        &rows,
    )?;
    Ok(())
}
