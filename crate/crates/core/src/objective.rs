//! Objective functions, Gaussian randomized smoothing and the two-point
//! stochastic gradient oracle.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::rng::{standard_normal_vec, SimRng};
use crate::space::ParameterSpace;
use crate::stats::{Estimate, RunningMean};

/// Regularity constants of an objective over a parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionProfile {
    /// Upper bound `B` with `f ∈ [0, B]` on `K`.
    pub bound: f64,
    /// Gradient Lipschitz constant; `None` for non-smooth objectives.
    pub smoothness: Option<f64>,
    /// Sub-exponential scale `G_g` of the stochastic gradient.
    pub grad_subexp: f64,
    /// Radius `b_max` of directions for which the sub-exponential bound holds.
    pub b_max: f64,
    pub h_max: f64,
}

/// A real-valued objective on `R^d`. Gradient and Hessian are optional.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn grad(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
    fn hess(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

/// `f(x) = height·((x/well)² − 1)² + tilt·x + offset` in one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleWell {
    pub height: f64,
    pub well: f64,
    pub tilt: f64,
    #[serde(default)]
    pub offset: f64,
}

impl Objective for DoubleWell {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64]) -> f64 {
        let s = x[0] / self.well;
        self.height * (s * s - 1.0).powi(2) + self.tilt * x[0] + self.offset
    }
    fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        let s = x[0] / self.well;
        Some(vec![4.0 * self.height * s * (s * s - 1.0) / self.well + self.tilt])
    }
    fn hess(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let s = x[0] / self.well;
        let h = 4.0 * self.height * (3.0 * s * s - 1.0) / (self.well * self.well);
        Some(DMatrix::from_element(1, 1, h))
    }
}

/// Adds the bounded ripple `amplitude · Σ_i sin(frequency · x_i)` to a base.
#[derive(Clone)]
pub struct Perturbed {
    pub base: Arc<dyn Objective>,
    pub amplitude: f64,
    pub frequency: f64,
}

impl Objective for Perturbed {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.base.value(x) + self.amplitude * x.iter().map(|v| (self.frequency * v).sin()).sum::<f64>()
    }
    fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut g = self.base.grad(x)?;
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi += self.amplitude * self.frequency * (self.frequency * xi).cos();
        }
        Some(g)
    }
    fn hess(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let mut h = self.base.hess(x)?;
        for (i, xi) in x.iter().enumerate() {
            h[(i, i)] -= self.amplitude * self.frequency.powi(2) * (self.frequency * xi).sin();
        }
        Some(h)
    }
}

/// `f(x) = ½·scale·‖x − center‖² + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub center: Vec<f64>,
    pub scale: f64,
    pub offset: f64,
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        0.5 * self.scale * r2 + self.offset
    }
    fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(x.iter().zip(&self.center).map(|(a, c)| self.scale * (a - c)).collect())
    }
    fn hess(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(self.dim(), self.dim()) * self.scale)
    }
}

/// Strict-saddle test function
/// `½x₁² + Σ_{i≥2} (−½x_i² + ¼·quartic·x_i⁴) + cos_amp·Σ_i cos(cos_freq·x_i) + offset`.
///
/// The origin is a strict saddle; the quartic terms confine the negative
/// directions so the minima sit at `x_i = ±1/√quartic`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleTest {
    pub dim: usize,
    pub quartic: f64,
    #[serde(default)]
    pub cos_amp: f64,
    #[serde(default = "one")]
    pub cos_freq: f64,
    #[serde(default)]
    pub offset: f64,
}

fn one() -> f64 {
    1.0
}

impl Objective for SaddleTest {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        let mut v = 0.5 * x[0] * x[0] + self.offset;
        for xi in &x[1..] {
            v += -0.5 * xi * xi + 0.25 * self.quartic * xi.powi(4);
        }
        v + self.cos_amp * x.iter().map(|t| (self.cos_freq * t).cos()).sum::<f64>()
    }
    fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut g: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &t)| if i == 0 { t } else { -t + self.quartic * t.powi(3) })
            .collect();
        for (gi, t) in g.iter_mut().zip(x) {
            *gi -= self.cos_amp * self.cos_freq * (self.cos_freq * t).sin();
        }
        Some(g)
    }
    fn hess(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for (i, &t) in x.iter().enumerate() {
            let base = if i == 0 { 1.0 } else { -1.0 + 3.0 * self.quartic * t * t };
            h[(i, i)] = base - self.cos_amp * self.cos_freq.powi(2) * (self.cos_freq * t).cos();
        }
        Some(h)
    }
}

/// `f(x) = ⟨coef, x⟩ + offset`. Unbounded; a test stub.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub coef: Vec<f64>,
    pub offset: f64,
}

impl Objective for Linear {
    fn dim(&self) -> usize {
        self.coef.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.coef, x) + self.offset
    }
    fn grad(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(self.coef.clone())
    }
    fn hess(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(self.dim(), self.dim()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant {
    pub dim: usize,
    pub value: f64,
}

impl Objective for Constant {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _x: &[f64]) -> f64 {
        self.value
    }
    fn grad(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; self.dim])
    }
    fn hess(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(self.dim, self.dim))
    }
}

/// Euclidean norm `‖x‖`, convex and 1-Lipschitz. The gradient at the
/// origin is taken to be zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EuclideanNorm {
    pub dim: usize,
}

impl Objective for EuclideanNorm {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        norm(x)
    }
    fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        let n = norm(x);
        Some(if n > 0.0 {
            x.iter().map(|v| v / n).collect()
        } else {
            vec![0.0; self.dim]
        })
    }
}

/// `factor · f`, used for the inverse-temperature rescaling `ξf`.
#[derive(Clone)]
pub struct Scaled {
    pub inner: Arc<dyn Objective>,
    pub factor: f64,
}

impl Objective for Scaled {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.factor * self.inner.value(x)
    }
    fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.inner.grad(x)?.into_iter().map(|g| self.factor * g).collect())
    }
    fn hess(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.inner.hess(x)? * self.factor)
    }
}

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Objective built from closures; handy for one-off test functions.
#[derive(Clone)]
pub struct FnObjective {
    pub dim: usize,
    pub value: ScalarFn,
    pub grad: Option<VectorFn>,
}

impl Objective for FnObjective {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.grad.as_ref().map(|g| g(x))
    }
}

/// Objective selection by name, as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    DoubleWell {
        height: f64,
        well: f64,
        #[serde(default)]
        tilt: f64,
    },
    PerturbedDoubleWell {
        height: f64,
        well: f64,
        #[serde(default)]
        tilt: f64,
        amplitude: f64,
        frequency: f64,
    },
    Quadratic {
        dim: usize,
        #[serde(default = "one")]
        scale: f64,
    },
    SaddleTest {
        dim: usize,
        quartic: f64,
        #[serde(default)]
        cos_amp: f64,
        #[serde(default = "one")]
        cos_freq: f64,
    },
    Norm {
        dim: usize,
    },
    Constant {
        dim: usize,
        value: f64,
    },
    Linear {
        coef: Vec<f64>,
    },
}

impl ObjectiveSpec {
    /// Builds the objective without any shift.
    pub fn build_raw(&self) -> Arc<dyn Objective> {
        match *self {
            ObjectiveSpec::DoubleWell { height, well, tilt } => Arc::new(DoubleWell {
                height,
                well,
                tilt,
                offset: 0.0,
            }),
            ObjectiveSpec::PerturbedDoubleWell {
                height,
                well,
                tilt,
                amplitude,
                frequency,
            } => Arc::new(Perturbed {
                base: Arc::new(DoubleWell {
                    height,
                    well,
                    tilt,
                    offset: 0.0,
                }),
                amplitude,
                frequency,
            }),
            ObjectiveSpec::Quadratic { dim, scale } => Arc::new(Quadratic {
                center: vec![0.0; dim],
                scale,
                offset: 0.0,
            }),
            ObjectiveSpec::SaddleTest {
                dim,
                quartic,
                cos_amp,
                cos_freq,
            } => Arc::new(SaddleTest {
                dim,
                quartic,
                cos_amp,
                cos_freq,
                offset: 0.0,
            }),
            ObjectiveSpec::Norm { dim } => Arc::new(EuclideanNorm { dim }),
            ObjectiveSpec::Constant { dim, value } => Arc::new(Constant { dim, value }),
            ObjectiveSpec::Linear { ref coef } => Arc::new(Linear {
                coef: coef.clone(),
                offset: 0.0,
            }),
        }
    }

    /// Builds the objective shifted so that its minimum over `K` is zero.
    pub fn build(&self, space: &ParameterSpace) -> Result<Arc<dyn Objective>> {
        let raw = self.build_raw();
        if raw.dim() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: raw.dim(),
            });
        }
        let (lo, _) = range_on(raw.as_ref(), space, 20_000);
        Ok(shifted(raw, -lo))
    }
}

/// Adds a constant to an objective.
pub fn shifted(inner: Arc<dyn Objective>, by: f64) -> Arc<dyn Objective> {
    if by == 0.0 {
        return inner;
    }
    struct Shift(Arc<dyn Objective>, f64);
    impl Objective for Shift {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn value(&self, x: &[f64]) -> f64 {
            self.0.value(x) + self.1
        }
        fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
            self.0.grad(x)
        }
        fn hess(&self, x: &[f64]) -> Option<DMatrix<f64>> {
            self.0.hess(x)
        }
    }
    Arc::new(Shift(inner, by))
}

/// Deterministic scan points of `K`: a regular lattice over the bounding box
/// in `d ≤ 2`, otherwise a fixed-seed uniform sample.
pub fn scan_points(space: &ParameterSpace, budget: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = space.bounding_box();
    match space.dim() {
        1 => (0..=budget)
            .map(|i| vec![lo[0] + (hi[0] - lo[0]) * i as f64 / budget as f64])
            .collect(),
        2 => {
            let n = (budget as f64).sqrt().ceil() as usize;
            let mut pts = Vec::with_capacity((n + 1) * (n + 1));
            for i in 0..=n {
                for j in 0..=n {
                    let p = vec![
                        lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64,
                        lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64,
                    ];
                    if space.contains_unchecked(&p) {
                        pts.push(p);
                    }
                }
            }
            pts
        }
        _ => {
            let mut rng = crate::rng::rng_for(0x5ca7, 0);
            (0..budget).map(|_| space.sample_uniform(&mut rng)).collect()
        }
    }
}

/// `(min, max)` of `f` over scan points of `K`.
pub fn range_on(f: &dyn Objective, space: &ParameterSpace, budget: usize) -> (f64, f64) {
    scan_points(space, budget)
        .iter()
        .map(|p| f.value(p))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

/// Scan point with the smallest objective value.
pub fn argmin_on(f: &dyn Objective, space: &ParameterSpace, budget: usize) -> Vec<f64> {
    scan_points(space, budget)
        .into_iter()
        .map(|p| (f.value(&p), p))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, p)| p)
        .expect("scan of a non-empty space")
}

/// Numerical assumption profile for a deterministic-gradient objective:
/// `B = max f`, `ℓ_f = max ‖∇²f‖₂`, `G_g = max ‖∇f‖`, `b_max = ∞`.
pub fn deterministic_profile(f: &dyn Objective, space: &ParameterSpace, budget: usize) -> AssumptionProfile {
    let pts = scan_points(space, budget);
    let mut bound = 0.0f64;
    let mut smooth = Some(0.0f64);
    let mut grad = 0.0f64;
    for p in &pts {
        bound = bound.max(f.value(p));
        if let Some(g) = f.grad(p) {
            grad = grad.max(norm(&g));
        }
        smooth = match (smooth, f.hess(p)) {
            (Some(s), Some(h)) => Some(s.max(spectral_norm_sym(&h))),
            _ => None,
        };
    }
    AssumptionProfile {
        bound,
        smoothness: smooth,
        grad_subexp: grad,
        b_max: f64::INFINITY,
        h_max: space.default_h_max().unwrap_or(f64::NAN),
    }
}

pub(crate) fn spectral_norm_sym(h: &DMatrix<f64>) -> f64 {
    let sym = (h + h.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Central finite-difference gradient.
pub fn finite_difference_grad<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Outcome of [`check_objective`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveCheck {
    pub min_value: f64,
    pub max_value: f64,
    pub max_grad_rel_error: f64,
    pub within_bounds: bool,
    pub gradient_consistent: bool,
}

/// Samples `n` points of `K` and checks `f ∈ [0, B]` and, when a gradient is
/// present, agreement with central differences to 1e-4 relative error.
pub fn check_objective(
    f: &dyn Objective,
    bound: f64,
    space: &ParameterSpace,
    n: usize,
    rng: &mut SimRng,
) -> ObjectiveCheck {
    let mut out = ObjectiveCheck {
        min_value: f64::INFINITY,
        max_value: f64::NEG_INFINITY,
        max_grad_rel_error: 0.0,
        within_bounds: true,
        gradient_consistent: true,
    };
    for _ in 0..n {
        let x = space.sample_uniform(rng);
        let v = f.value(&x);
        out.min_value = out.min_value.min(v);
        out.max_value = out.max_value.max(v);
        if let Some(g) = f.grad(&x) {
            let fd = finite_difference_grad(|p| f.value(p), &x, 1e-6);
            let err = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let rel = err / norm(&g).max(1.0);
            out.max_grad_rel_error = out.max_grad_rel_error.max(rel);
        }
    }
    out.within_bounds = out.min_value >= -1e-8 && out.max_value <= bound + 1e-8;
    out.gradient_consistent = out.max_grad_rel_error <= 1e-4;
    out
}

pub type LossFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Per-sample loss `ℓ(x; a)` with the sample set `{a_1, …, a_n}`.
#[derive(Clone)]
pub struct LossSampler {
    loss: LossFn,
    samples: Vec<Vec<f64>>,
    bound: f64,
    dim: usize,
}

impl LossSampler {
    pub fn new(dim: usize, loss: LossFn, samples: Vec<Vec<f64>>, bound: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("sample set"));
        }
        if !(bound > 0.0) {
            return Err(Error::InvalidParameter("loss bound must be positive".into()));
        }
        Ok(Self {
            loss,
            samples,
            bound,
            dim,
        })
    }

    /// Loads samples from a header-less CSV file, one row per sample.
    pub fn from_csv(dim: usize, loss: LossFn, path: &Path, bound: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
        let mut samples = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidParameter(format!("bad number {s:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            samples.push(row);
        }
        Self::new(dim, loss, samples, bound)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn loss(&self, x: &[f64], sample: &[f64]) -> f64 {
        (self.loss)(x, sample)
    }

    /// Empirical risk `(1/n) Σ ℓ(x; a_i)`.
    pub fn empirical(&self, x: &[f64]) -> f64 {
        self.samples.iter().map(|a| (self.loss)(x, a)).sum::<f64>() / self.samples.len() as f64
    }
}

impl Objective for LossSampler {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.empirical(x)
    }
}

/// Source of stochastic gradients `g(x)` with `E[g(x) | x] = ∇f(x)`.
pub trait GradientOracle: Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, x: &[f64], rng: &mut SimRng) -> Result<Vec<f64>>;
}

/// Exact gradient of an objective; consumes no randomness.
#[derive(Clone)]
pub struct ExactGradient(pub Arc<dyn Objective>);

impl GradientOracle for ExactGradient {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn sample(&self, x: &[f64], _rng: &mut SimRng) -> Result<Vec<f64>> {
        self.0
            .grad(x)
            .ok_or_else(|| Error::Unsupported("objective has no gradient".into()))
    }
}

/// Exact gradient plus isotropic Gaussian noise of standard deviation `std`.
#[derive(Clone)]
pub struct NoisyGradient {
    pub objective: Arc<dyn Objective>,
    pub std: f64,
}

impl GradientOracle for NoisyGradient {
    fn dim(&self) -> usize {
        self.objective.dim()
    }
    fn sample(&self, x: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        let mut g = ExactGradient(self.objective.clone()).sample(x, rng)?;
        let w = standard_normal_vec(rng, g.len());
        for (gi, wi) in g.iter_mut().zip(w) {
            *gi += self.std * wi;
        }
        Ok(g)
    }
}

/// Averages `batch` independent draws of the inner oracle.
pub struct Batched<O> {
    pub inner: O,
    pub batch: usize,
}

impl<O: GradientOracle> GradientOracle for Batched<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn sample(&self, x: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.dim()];
        for _ in 0..self.batch {
            let g = self.inner.sample(x, rng)?;
            crate::linalg::axpy(1.0 / self.batch as f64, &g, &mut acc);
        }
        Ok(acc)
    }
}

/// Multiplies every draw of the inner oracle by `factor`.
pub struct ScaledOracle<O> {
    pub inner: O,
    pub factor: f64,
}

impl<O: GradientOracle> GradientOracle for ScaledOracle<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn sample(&self, x: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(self
            .inner
            .sample(x, rng)?
            .into_iter()
            .map(|g| g * self.factor)
            .collect())
    }
}

/// What gets smoothed: a single function or an empirical risk.
#[derive(Clone)]
pub enum SmoothingBase {
    Function { objective: Arc<dyn Objective>, bound: f64 },
    Samples(LossSampler),
}

/// Gaussian smoothing `f̃(x) = E_z[f(x + z)]`, `z ~ N(0, σ²I)`.
#[derive(Clone)]
pub struct SmoothedObjective {
    base: SmoothingBase,
    sigma: f64,
    value_mc_samples: usize,
}

impl SmoothedObjective {
    pub fn new(base: SmoothingBase, sigma: f64, value_mc_samples: usize) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter("smoothing sigma must be positive".into()));
        }
        Ok(Self {
            base,
            sigma,
            value_mc_samples: value_mc_samples.max(1),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn base(&self) -> &SmoothingBase {
        &self.base
    }

    pub fn value_mc_samples(&self) -> usize {
        self.value_mc_samples
    }

    pub fn dim(&self) -> usize {
        match &self.base {
            SmoothingBase::Function { objective, .. } => objective.dim(),
            SmoothingBase::Samples(s) => s.dim(),
        }
    }

    pub fn bound(&self) -> f64 {
        match &self.base {
            SmoothingBase::Function { bound, .. } => *bound,
            SmoothingBase::Samples(s) => s.bound(),
        }
    }

    /// Unsmoothed `f(x)`.
    pub fn base_value(&self, x: &[f64]) -> f64 {
        match &self.base {
            SmoothingBase::Function { objective, .. } => objective.value(x),
            SmoothingBase::Samples(s) => s.empirical(x),
        }
    }

    /// Smoothness constant `2B/σ²` of `f̃`.
    pub fn smoothness_bound(&self) -> f64 {
        2.0 * self.bound() / (self.sigma * self.sigma)
    }

    /// Profile implied by the smoothing: `ℓ = 2B/σ²`, `G_g = 2B/σ`, `b_max = σ/(2B)`.
    pub fn profile(&self, h_max: f64) -> AssumptionProfile {
        let b = self.bound();
        AssumptionProfile {
            bound: b,
            smoothness: Some(self.smoothness_bound()),
            grad_subexp: 2.0 * b / self.sigma,
            b_max: self.sigma / (2.0 * b),
            h_max,
        }
    }

    /// `(1/m) Σ f(x + z_j)`.
    pub fn smoothed_value_mc(&self, x: &[f64], m: usize, rng: &mut SimRng) -> Estimate {
        self.combination_mc(&[(1.0, x.to_vec())], m, rng)
    }

    /// Monte-Carlo mean of `Σ_k w_k f(x_k + z)` with one shared `z` per draw
    /// (common random numbers across the points).
    pub fn combination_mc(&self, terms: &[(f64, Vec<f64>)], m: usize, rng: &mut SimRng) -> Estimate {
        let d = self.dim();
        let mut acc = RunningMean::default();
        let mut y = vec![0.0; d];
        for _ in 0..m.max(1) {
            let z = standard_normal_vec(rng, d);
            let mut s = 0.0;
            for (w, x) in terms {
                for ((yi, xi), zi) in y.iter_mut().zip(x).zip(&z) {
                    *yi = xi + self.sigma * zi;
                }
                s += w * self.base_value(&y);
            }
            acc.push(s);
        }
        acc.estimate()
    }

    /// One draw of `g = (z/σ²)(ℓ(x+z; a) − ℓ(x; a))`.
    pub fn smoothed_grad_sample(&self, x: &[f64], rng: &mut SimRng) -> Vec<f64> {
        let d = self.dim();
        let z: Vec<f64> = standard_normal_vec(rng, d)
            .into_iter()
            .map(|v| v * self.sigma)
            .collect();
        let xz: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
        let diff = match &self.base {
            SmoothingBase::Function { objective, .. } => objective.value(&xz) - objective.value(x),
            SmoothingBase::Samples(s) => {
                let a = &s.samples()[rng.random_range(0..s.len())];
                s.loss(&xz, a) - s.loss(x, a)
            }
        };
        let scale = diff / (self.sigma * self.sigma);
        z.into_iter().map(|v| v * scale).collect()
    }

    /// Curvature probe of `f̃` through second differences of
    /// [`Self::smoothed_value_mc`] along coordinate and diagonal directions.
    pub fn verify_smoothness_constant(
        &self,
        space: &ParameterSpace,
        probes: usize,
        m: usize,
        rng: &mut SimRng,
    ) -> Result<SmoothnessReport> {
        let d = self.dim();
        if d > 2 {
            return Err(Error::Unsupported("curvature probes need d <= 2".into()));
        }
        let dirs: Vec<Vec<f64>> = if d == 1 {
            vec![vec![1.0]]
        } else {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![s, s], vec![s, -s]]
        };
        let h = 0.5 * self.sigma;
        let mut best = (0.0f64, 0.0f64);
        for _ in 0..probes {
            let x = space.sample_uniform(rng);
            for u in &dirs {
                let plus: Vec<f64> = x.iter().zip(u).map(|(a, b)| a + h * b).collect();
                let minus: Vec<f64> = x.iter().zip(u).map(|(a, b)| a - h * b).collect();
                let w = 1.0 / (h * h);
                let est = self.combination_mc(&[(w, plus), (-2.0 * w, x.clone()), (w, minus)], m, rng);
                if est.mean.abs() > best.0.abs() {
                    best = (est.mean, est.se);
                }
            }
        }
        let bound = self.smoothness_bound();
        Ok(SmoothnessReport {
            max_curvature: best.0.abs(),
            curvature_se: best.1,
            bound,
            violated: best.0.abs() - 3.0 * best.1 > bound,
        })
    }
}

impl GradientOracle for SmoothedObjective {
    fn dim(&self) -> usize {
        SmoothedObjective::dim(self)
    }
    fn sample(&self, x: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(self.smoothed_grad_sample(x, rng))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothnessReport {
    pub max_curvature: f64,
    pub curvature_se: f64,
    pub bound: f64,
    pub violated: bool,
}

/// Per-coordinate comparison of the mean stochastic gradient with a
/// common-random-number central difference of the smoothed value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoordinateCheck {
    pub grad_mean: f64,
    pub grad_se: f64,
    pub fd: f64,
    pub fd_se: f64,
    pub z_score: f64,
}

impl CoordinateCheck {
    pub fn passed(&self) -> bool {
        self.z_score.abs() <= 3.0
    }
}

pub fn unbiasedness_check(
    s: &SmoothedObjective,
    x: &[f64],
    n_grad: usize,
    m_fd: usize,
    fd_step: f64,
    rng: &mut SimRng,
) -> Vec<CoordinateCheck> {
    let d = s.dim();
    let mut accs = vec![RunningMean::default(); d];
    for _ in 0..n_grad {
        let g = s.smoothed_grad_sample(x, rng);
        for (a, gi) in accs.iter_mut().zip(g) {
            a.push(gi);
        }
    }
    (0..d)
        .map(|i| {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i] += fd_step;
            minus[i] -= fd_step;
            let w = 1.0 / (2.0 * fd_step);
            let fd = s.combination_mc(&[(w, plus), (-w, minus)], m_fd, rng);
            let g = accs[i].estimate();
            let se = (g.se * g.se + fd.se * fd.se).sqrt();
            CoordinateCheck {
                grad_mean: g.mean,
                grad_se: g.se,
                fd: fd.mean,
                fd_se: fd.se,
                z_score: if se > 0.0 { (g.mean - fd.mean) / se } else { 0.0 },
            }
        })
        .collect()
}

/// Sub-exponential moment `E[exp(⟨u, g⟩²)]` against `exp(‖u‖²(2B/σ)²)` for
/// `‖u‖ = scale · σ/(2B)` along a fixed random direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentCheck {
    pub scale: f64,
    pub empirical: Estimate,
    pub bound: f64,
}

impl MomentCheck {
    pub fn passed(&self) -> bool {
        self.empirical.mean <= self.bound + 3.0 * self.empirical.se
    }
}

pub fn subexponential_check(
    s: &SmoothedObjective,
    x: &[f64],
    scales: &[f64],
    n: usize,
    rng: &mut SimRng,
) -> Vec<MomentCheck> {
    let d = s.dim();
    let dir = {
        let w = standard_normal_vec(rng, d);
        let n = norm(&w);
        w.into_iter().map(|v| v / n).collect::<Vec<_>>()
    };
    let b = s.bound();
    let draws: Vec<Vec<f64>> = (0..n).map(|_| s.smoothed_grad_sample(x, rng)).collect();
    scales
        .iter()
        .map(|&scale| {
            let r = scale * s.sigma() / (2.0 * b);
            let u: Vec<f64> = dir.iter().map(|v| v * r).collect();
            let empirical = Estimate::from_samples(draws.iter().map(|g| dot(&u, g).powi(2).exp()));
            MomentCheck {
                scale,
                empirical,
                bound: (r * r * (2.0 * b / s.sigma()).powi(2)).exp(),
            }
        })
        .collect()
}

/// Smoothing width `σ = ν / max{G_ψ, B/ρ_K}` that keeps `sup|f̃ − F| ≤ 2ν`.
pub fn erm_sigma(nu: f64, lipschitz: f64, bound: f64, rho_k: f64) -> f64 {
    nu / lipschitz.max(bound / rho_k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn step_loss() -> LossSampler {
        // 1D threshold loss ℓ(x; a) = 1{x > a}, so f is a step at each a_i
        let loss: LossFn = Arc::new(|x: &[f64], a: &[f64]| if x[0] > a[0] { 1.0 } else { 0.0 });
        LossSampler::new(1, loss, vec![vec![0.0]], 1.0).unwrap()
    }

    #[test]
    fn constant_smooths_to_itself() {
        let s = SmoothedObjective::new(
            SmoothingBase::Function {
                objective: Arc::new(Constant { dim: 2, value: 0.7 }),
                bound: 1.0,
            },
            0.3,
            10,
        )
        .unwrap();
        let mut rng = rng_for(1, 0);
        assert_eq!(s.smoothed_value_mc(&[0.1, 0.2], 17, &mut rng).mean, 0.7);
        assert!(s.smoothed_grad_sample(&[0.1, 0.2], &mut rng).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_smoothing_and_gradient() {
        let a = vec![0.5, -1.5];
        let s = SmoothedObjective::new(
            SmoothingBase::Function {
                objective: Arc::new(Linear {
                    coef: a.clone(),
                    offset: 0.0,
                }),
                bound: 1.0,
            },
            0.2,
            10,
        )
        .unwrap();
        let mut rng = rng_for(2, 0);
        let x = [0.3, 0.4];
        let v = s.smoothed_value_mc(&x, 100_000, &mut rng);
        assert!((v.mean - dot(&a, &x)).abs() < 4.0 * v.se);
        let n = 100_000;
        let mut accs = [RunningMean::default(); 2];
        for _ in 0..n {
            let g = s.smoothed_grad_sample(&x, &mut rng);
            accs[0].push(g[0]);
            accs[1].push(g[1]);
        }
        for (acc, ai) in accs.iter().zip(&a) {
            let e = acc.estimate();
            assert!((e.mean - ai).abs() < 3.0 * e.se, "{e:?} vs {ai}");
        }
    }

    #[test]
    fn quadratic_smoothing_adds_variance() {
        let s = SmoothedObjective::new(
            SmoothingBase::Function {
                objective: Arc::new(Quadratic {
                    center: vec![0.0],
                    scale: 2.0,
                    offset: 0.0,
                }),
                bound: 1.0,
            },
            0.1,
            10,
        )
        .unwrap();
        let mut rng = rng_for(3, 0);
        let v = s.smoothed_value_mc(&[0.0], 200_000, &mut rng);
        assert!((v.mean - 0.01).abs() < 4.0 * v.se);
    }

    #[test]
    fn zero_one_gradient_matches_finite_differences() {
        let s = SmoothedObjective::new(SmoothingBase::Samples(step_loss()), 0.2, 10).unwrap();
        let mut rng = rng_for(4, 0);
        for x in [-0.1, 0.05, 0.3] {
            let checks = unbiasedness_check(&s, &[x], 1_000_000, 1_000_000, 0.01, &mut rng);
            assert!(checks[0].passed(), "{x}: {:?}", checks[0]);
        }
    }

    #[test]
    fn smoothness_bound_scaling() {
        let mk = |sigma| SmoothedObjective::new(SmoothingBase::Samples(step_loss()), sigma, 10).unwrap();
        assert!((mk(0.2).smoothness_bound() - 50.0).abs() < 1e-12);
        assert!((mk(0.4).smoothness_bound() - 12.5).abs() < 1e-12);
        let space = ParameterSpace::cube(-0.5, 0.5, 1).unwrap();
        let mut rng = rng_for(5, 0);
        let rep = mk(0.2)
            .verify_smoothness_constant(&space, 20, 20_000, &mut rng)
            .unwrap();
        assert!(
            !rep.violated && rep.max_curvature <= rep.bound + 3.0 * rep.curvature_se,
            "{rep:?}"
        );
        let flat = SmoothedObjective::new(
            SmoothingBase::Function {
                objective: Arc::new(Constant { dim: 1, value: 0.5 }),
                bound: 1.0,
            },
            0.2,
            10,
        )
        .unwrap();
        let rep = flat.verify_smoothness_constant(&space, 5, 1000, &mut rng).unwrap();
        assert!(rep.max_curvature.abs() < 1e-9);
    }

    #[test]
    fn subexponential_moment_is_bounded() {
        let s = SmoothedObjective::new(SmoothingBase::Samples(step_loss()), 0.2, 10).unwrap();
        let mut rng = rng_for(6, 0);
        for c in subexponential_check(&s, &[0.02], &[0.1, 0.5, 1.0], 100_000, &mut rng) {
            assert!(c.passed(), "{c:?}");
        }
    }

    #[test]
    fn builtin_gradients_match_finite_differences() {
        let cases: Vec<(Arc<dyn Objective>, ParameterSpace)> = vec![
            (
                ObjectiveSpec::DoubleWell {
                    height: 0.3,
                    well: 0.5,
                    tilt: 0.1,
                }
                .build_raw(),
                ParameterSpace::cube(-1.0, 1.0, 1).unwrap(),
            ),
            (
                ObjectiveSpec::PerturbedDoubleWell {
                    height: 0.5,
                    well: 0.5,
                    tilt: 0.3,
                    amplitude: 0.05,
                    frequency: 40.0,
                }
                .build_raw(),
                ParameterSpace::cube(-1.0, 1.0, 1).unwrap(),
            ),
            (
                ObjectiveSpec::SaddleTest {
                    dim: 3,
                    quartic: 1.0,
                    cos_amp: 0.1,
                    cos_freq: 2.0,
                }
                .build_raw(),
                ParameterSpace::ball(vec![0.0; 3], 2.0).unwrap(),
            ),
            (
                ObjectiveSpec::Quadratic { dim: 4, scale: 1.5 }.build_raw(),
                ParameterSpace::unit_ball(4).unwrap(),
            ),
        ];
        let mut rng = rng_for(7, 0);
        for (f, space) in cases {
            let shifted = {
                let (lo, hi) = range_on(f.as_ref(), &space, 20_000);
                (shifted(f.clone(), -lo), hi - lo)
            };
            let c = check_objective(shifted.0.as_ref(), shifted.1, &space, 500, &mut rng);
            assert!(c.gradient_consistent, "{c:?}");
            assert!(c.within_bounds, "{c:?}");
            // hessian against differences of the gradient
            let x = space.sample_uniform(&mut rng);
            let h = f.hess(&x).unwrap();
            for j in 0..f.dim() {
                let col = finite_difference_grad(|p| f.grad(p).unwrap()[j], &x, 1e-6);
                for i in 0..f.dim() {
                    assert!((h[(j, i)] - col[i]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn erm_sigma_uses_worst_lipschitz_term() {
        assert!((erm_sigma(0.8, 3.0, 1.0, 0.25) - 0.2).abs() < 1e-15);
        assert!((erm_sigma(0.6, 6.0, 1.0, 0.25) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn samples_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "0.1,1\n-0.2,1\n").unwrap();
        let loss: LossFn = Arc::new(|x: &[f64], a: &[f64]| if a[1] * (x[0] - a[0]) > 0.0 { 0.0 } else { 1.0 });
        let s = LossSampler::from_csv(1, loss, &p, 1.0).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.empirical(&[0.0]), 0.5);
    }
}
