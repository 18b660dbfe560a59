//! Metropolis–Hastings validation chains for discretized Langevin dynamics:
//! the lazy kernel `π_f`, the absorbing auxiliary kernel `π̃_f`, a 1D
//! discretized kernel matrix, restricted conductance and chi-square tails.
//!
//! Chains run on `ξf` with step `η̃ = η/ξ` and use exact gradients.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cheeger::CellSet;
use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::objective::Objective;
use crate::rng::{rng_for, standard_normal_vec, SimRng};
use crate::sgld::TargetSet;
use crate::space::ParameterSpace;
use crate::stats::Estimate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MhConfig {
    pub eta: f64,
    pub xi: f64,
    pub k_steps: usize,
    #[serde(default)]
    pub seed: u64,
}

impl MhConfig {
    pub fn from_eta_tilde(eta_tilde: f64, xi: f64, k_steps: usize, seed: u64) -> Self {
        Self {
            eta: eta_tilde * xi,
            xi,
            k_steps,
            seed,
        }
    }

    pub fn eta_tilde(&self) -> f64 {
        self.eta / self.xi
    }

    /// `4√(2η̃d)`.
    pub fn ball_bound(&self, d: usize) -> f64 {
        4.0 * (2.0 * self.eta_tilde() * d as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.xi > 0.0) {
            return Err(Error::InvalidParameter("eta and xi must be positive".into()));
        }
        Ok(())
    }
}

/// Proposal density split into its point mass at `x` and continuous part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalDensity {
    pub point_mass: f64,
    pub density: f64,
}

fn scaled_grad(f: &dyn Objective, x: &[f64], xi: f64) -> Result<Vec<f64>> {
    Ok(f.grad(x)
        .ok_or_else(|| Error::Unsupported("validation chains need exact gradients".into()))?
        .into_iter()
        .map(|g| xi * g)
        .collect())
}

/// `log` of the Gaussian part `(4πη̃)^{−d/2} exp(−‖y − x + η̃g‖²/(4η̃))`.
fn log_gauss(x: &[f64], y: &[f64], g: &[f64], et: f64) -> f64 {
    let d = x.len() as f64;
    let r2: f64 = x.iter().zip(y).zip(g).map(|((a, b), c)| (b - a + et * c).powi(2)).sum();
    -0.5 * d * (4.0 * std::f64::consts::PI * et).ln() - r2 / (4.0 * et)
}

/// `q_x(y) = ½δ_x(y) + ½(4πη̃)^{−d/2} exp(−‖y − x + η̃g(x)‖²/(4η̃))` with
/// `g = ξ∇f`.
pub fn proposal_density(x: &[f64], y: &[f64], grad_f_x: &[f64], cfg: &MhConfig) -> ProposalDensity {
    if x == y {
        return ProposalDensity {
            point_mass: 0.5,
            density: 0.0,
        };
    }
    let g: Vec<f64> = grad_f_x.iter().map(|v| cfg.xi * v).collect();
    ProposalDensity {
        point_mass: 0.0,
        density: 0.5 * log_gauss(x, y, &g, cfg.eta_tilde()).exp(),
    }
}

/// `min{1, q_y(x)/q_x(y)·e^{ξf(x) − ξf(y)}}` for admissible `y`, else 0.
pub fn acceptance_prob(x: &[f64], y: &[f64], f: &dyn Objective, space: &ParameterSpace, cfg: &MhConfig) -> Result<f64> {
    let d = x.len();
    if x == y || !space.contains_unchecked(y) || dist(x, y) > cfg.ball_bound(d) {
        return Ok(0.0);
    }
    let gx = scaled_grad(f, x, cfg.xi)?;
    let gy = scaled_grad(f, y, cfg.xi)?;
    Ok(log_acceptance(
        x,
        y,
        &gx,
        &gy,
        cfg.xi * f.value(x),
        cfg.xi * f.value(y),
        cfg.eta_tilde(),
    ))
}

fn log_acceptance(x: &[f64], y: &[f64], gx: &[f64], gy: &[f64], fx: f64, fy: f64, et: f64) -> f64 {
    let log_ratio = log_gauss(y, x, gy, et) - log_gauss(x, y, gx, et) + fx - fy;
    log_ratio.min(0.0).exp()
}

/// Chain output as a flat row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn coord(&self, i: usize) -> Vec<f64> {
        self.data.iter().skip(i).step_by(self.dim).copied().collect()
    }
}

fn initial(space: &ParameterSpace, start: Option<&[f64]>, rng: &mut SimRng) -> Result<Vec<f64>> {
    match start {
        Some(s) if space.contains(s)? => Ok(s.to_vec()),
        Some(s) => Err(Error::OutsideSpace(s.to_vec())),
        None => Ok(space.sample_uniform(rng)),
    }
}

/// Runs `π_f` for `cfg.k_steps` steps, recording every state (the start
/// included).
pub fn mh_run(f: &dyn Objective, space: &ParameterSpace, cfg: &MhConfig, start: Option<&[f64]>) -> Result<Samples> {
    cfg.validate()?;
    let d = space.dim();
    let et = cfg.eta_tilde();
    let r = cfg.ball_bound(d);
    let s = (2.0 * et).sqrt();
    let mut rng = rng_for(cfg.seed, 0);
    let mut x = initial(space, start, &mut rng)?;
    let mut gx = scaled_grad(f, &x, cfg.xi)?;
    let mut fx = cfg.xi * f.value(&x);
    let mut data = Vec::with_capacity((cfg.k_steps + 1) * d);
    data.extend_from_slice(&x);
    for _ in 0..cfg.k_steps {
        if rng.random::<f64>() >= 0.5 {
            let w = standard_normal_vec(&mut rng, d);
            let y: Vec<f64> = x
                .iter()
                .zip(&gx)
                .zip(&w)
                .map(|((a, g), z)| a - et * g + s * z)
                .collect();
            let u: f64 = rng.random();
            if space.contains_unchecked(&y) && dist(&x, &y) <= r {
                let gy = scaled_grad(f, &y, cfg.xi)?;
                let fy = cfg.xi * f.value(&y);
                if u < log_acceptance(&x, &y, &gx, &gy, fx, fy, et) {
                    x = y;
                    gx = gy;
                    fx = fy;
                }
            }
        }
        data.extend_from_slice(&x);
    }
    Ok(Samples { dim: d, data })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxRun {
    pub samples: Samples,
    /// First step at which the chain is in `U_ρ`.
    pub hit: Option<usize>,
    /// Whether step `k + 1` drew from the Gaussian branch of the proposal.
    pub gaussian_branch: Vec<bool>,
}

/// Runs `π̃_f`: every admissible proposal is accepted outside `U_ρ`, and
/// the chain stops moving once inside.
pub fn aux_run(
    f: &dyn Objective,
    space: &ParameterSpace,
    cfg: &MhConfig,
    target: &TargetSet,
    start: Option<&[f64]>,
) -> Result<AuxRun> {
    cfg.validate()?;
    let d = space.dim();
    let et = cfg.eta_tilde();
    let r = cfg.ball_bound(d);
    let s = (2.0 * et).sqrt();
    let mut rng = rng_for(cfg.seed, 0);
    let mut x = initial(space, start, &mut rng)?;
    let mut data = Vec::with_capacity((cfg.k_steps + 1) * d);
    let mut branch = Vec::with_capacity(cfg.k_steps);
    data.extend_from_slice(&x);
    let mut hit = target.hit(&x).then_some(0);
    for k in 1..=cfg.k_steps {
        let gaussian = rng.random::<f64>() >= 0.5;
        branch.push(gaussian);
        if gaussian {
            let g = scaled_grad(f, &x, cfg.xi)?;
            let w = standard_normal_vec(&mut rng, d);
            let y: Vec<f64> = x
                .iter()
                .zip(&g)
                .zip(&w)
                .map(|((a, gi), z)| a - et * gi + s * z)
                .collect();
            if hit.is_none() && space.contains_unchecked(&y) && dist(&x, &y) <= r {
                x = y;
            }
        }
        if hit.is_none() && target.hit(&x) {
            hit = Some(k);
        }
        data.extend_from_slice(&x);
    }
    Ok(AuxRun {
        samples: Samples { dim: d, data },
        hit,
        gaussian_branch: branch,
    })
}

/// Discretized kernel on cell-centred states of a 1D interval.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub states: Vec<f64>,
    pub p: DMatrix<f64>,
    pub q: Vec<f64>,
    /// `‖QP − Q‖₁` at termination.
    pub residual: f64,
}

const STATIONARY_TOL: f64 = 1e-10;

impl KernelMatrix {
    /// Wraps a row-stochastic matrix and computes its stationary vector.
    pub fn from_parts(states: Vec<f64>, p: DMatrix<f64>) -> Result<Self> {
        if !p.is_square() || p.nrows() != states.len() {
            return Err(Error::DimensionMismatch {
                expected: states.len(),
                got: p.nrows(),
            });
        }
        for i in 0..p.nrows() {
            let s: f64 = p.row(i).sum();
            if (s - 1.0).abs() > 1e-10 || p.row(i).iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(Error::Quadrature(format!(
                    "row {i} is not a probability vector (sum {s})"
                )));
            }
        }
        let (q, residual) = stationary(&p)?;
        Ok(Self { states, p, q, residual })
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn max_row_error(&self) -> f64 {
        (0..self.n())
            .map(|i| (self.p.row(i).sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_diagonal(&self) -> f64 {
        (0..self.n()).map(|i| self.p[(i, i)]).fold(f64::INFINITY, f64::min)
    }

    /// `max |Q_i P_ij − Q_j P_ji| / max(Q_i P_ij, Q_j P_ji)` over pairs with flow.
    pub fn detailed_balance_error(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let a = self.q[i] * self.p[(i, j)];
                let b = self.q[j] * self.p[(j, i)];
                let m = a.max(b);
                if m > 0.0 {
                    worst = worst.max((a - b).abs() / m);
                }
            }
        }
        worst
    }
}

/// Stationary vector by power iteration, squaring the kernel between
/// checks: `v ← v·P^{2^k}` until `‖vP − v‖₁ ≤ 1e-10`.
fn stationary(p: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let n = p.nrows();
    let mut m = p.clone();
    let start = nalgebra::RowDVector::from_element(n, 1.0 / n as f64);
    for _ in 0..64 {
        let mut v = &start * &m;
        let s = v.sum();
        v /= s;
        let res = (&v * p - &v).abs().sum();
        if res <= STATIONARY_TOL {
            return Ok((v.iter().copied().collect(), res));
        }
        m = &m * &m;
    }
    Err(Error::Quadrature("power iteration did not converge".into()))
}

/// `P_ij = ½·h·N(x_j; x_i − η̃g_i, 2η̃)·α_ij` inside the proposal ball, with
/// all remaining mass on the diagonal.
pub fn build_kernel_1d(
    f: &dyn Objective,
    space: &ParameterSpace,
    cfg: &MhConfig,
    n_states: usize,
) -> Result<KernelMatrix> {
    cfg.validate()?;
    if space.dim() != 1 {
        return Err(Error::Unsupported("kernel discretization is 1D only".into()));
    }
    if !(2..=2000).contains(&n_states) {
        return Err(Error::InvalidParameter(format!(
            "n_states must be in [2, 2000], got {n_states}"
        )));
    }
    let (lo, hi) = space.bounding_box();
    let h = (hi[0] - lo[0]) / n_states as f64;
    let states: Vec<f64> = (0..n_states).map(|i| lo[0] + (i as f64 + 0.5) * h).collect();
    let et = cfg.eta_tilde();
    let r = cfg.ball_bound(1);
    let grads: Vec<f64> = states
        .iter()
        .map(|&x| scaled_grad(f, &[x], cfg.xi).map(|g| g[0]))
        .collect::<Result<_>>()?;
    let vals: Vec<f64> = states.iter().map(|&x| cfg.xi * f.value(&[x])).collect();
    let inside: Vec<bool> = states.iter().map(|&x| space.contains_unchecked(&[x])).collect();
    let rows: Vec<Vec<f64>> = (0..n_states)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n_states];
            let xi = [states[i]];
            for j in 0..n_states {
                let xj = [states[j]];
                if i == j || !inside[j] || (states[j] - states[i]).abs() > r {
                    continue;
                }
                let q = 0.5 * h * log_gauss(&xi, &xj, &[grads[i]], et).exp();
                let a = log_acceptance(&xi, &xj, &[grads[i]], &[grads[j]], vals[i], vals[j], et);
                row[j] = q * a;
            }
            row
        })
        .collect();
    let mut p = DMatrix::zeros(n_states, n_states);
    for (i, row) in rows.into_iter().enumerate() {
        let off: f64 = row.iter().sum();
        if !off.is_finite() || off > 0.5 + 1e-12 {
            return Err(Error::Quadrature(format!(
                "off-diagonal mass {off} at state {i}; refine the grid"
            )));
        }
        for (j, v) in row.into_iter().enumerate() {
            p[(i, j)] = v;
        }
        p[(i, i)] = 1.0 - off;
    }
    KernelMatrix::from_parts(states, p)
}

/// Restricted conductance `min_A Σ_{i∈A} Q_i Σ_{j∉A} P_ij / Q(A)` over the
/// candidate sets, and the minimizing candidate's name.
pub fn conductance_estimate(km: &KernelMatrix, v: &CellSet, family: &[CellSet]) -> Result<(f64, String)> {
    let n = km.n();
    if v.mask.len() != n {
        return Err(Error::GridMismatch);
    }
    // cumulative row sums turn "mass kept inside A" into run lookups
    let mut cum = vec![0.0; n * (n + 1)];
    for i in 0..n {
        for j in 0..n {
            cum[i * (n + 1) + j + 1] = cum[i * (n + 1) + j] + km.p[(i, j)];
        }
    }
    let best = family
        .par_iter()
        .filter(|a| a.mask.len() == n && a.is_subset_of(v))
        .filter_map(|a| {
            let runs = runs_of(&a.mask);
            let qa: f64 = (0..n).filter(|&i| a.mask[i]).map(|i| km.q[i]).sum();
            if qa <= 0.0 {
                return None;
            }
            let flow: f64 = (0..n)
                .filter(|&i| a.mask[i])
                .map(|i| {
                    let kept: f64 = runs
                        .iter()
                        .map(|&(s, e)| cum[i * (n + 1) + e] - cum[i * (n + 1) + s])
                        .sum();
                    km.q[i] * (1.0 - kept).max(0.0)
                })
                .sum();
            Some((flow / qa, a.name.clone()))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0));
    best.ok_or(Error::Empty("conductance candidate family"))
}

fn runs_of(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &m) in mask.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, mask.len()));
    }
    out
}

/// `(1/192)(1 − e^{−¼√(η̃/d)·C})`.
pub fn conductance_lower_bound(eta_tilde: f64, d: usize, cheeger: f64) -> f64 {
    (1.0 - (-0.25 * (eta_tilde / d as f64).sqrt() * cheeger).exp()) / 192.0
}

/// `e^{33η̃d(G² + L)} − 1`.
pub fn closeness_bound(eta_tilde: f64, d: usize, g: f64, l: f64) -> f64 {
    (33.0 * eta_tilde * d as f64 * (g * g + l)).exp() - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailCheck {
    pub threshold: f64,
    pub empirical: Estimate,
    pub bound: f64,
}

impl TailCheck {
    pub fn passed(&self) -> bool {
        let se = (self.bound * (1.0 - self.bound) / self.empirical.n.max(1) as f64).sqrt();
        self.empirical.mean <= self.bound + 3.0 * se.max(self.empirical.se)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareReport {
    pub upper: TailCheck,
    pub lower: TailCheck,
}

/// Empirical `P(X ≥ d(1+2√x+2x))` and `P(X ≤ d(1−2√x))` against `e^{−xd}`.
pub fn chi_square_tail_check(d: usize, x: f64, m: usize, rng: &mut SimRng) -> Result<ChiSquareReport> {
    if d == 0 || !(x > 0.0) || m == 0 {
        return Err(Error::InvalidParameter("need d >= 1, x > 0, m >= 1".into()));
    }
    let chi = ChiSquared::new(d as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let df = d as f64;
    let hi = df * (1.0 + 2.0 * x.sqrt() + 2.0 * x);
    let lo = df * (1.0 - 2.0 * x.sqrt());
    let draws: Vec<f64> = (0..m).map(|_| chi.sample(rng)).collect();
    let bound = (-x * df).exp();
    Ok(ChiSquareReport {
        upper: TailCheck {
            threshold: hi,
            empirical: Estimate::from_samples(draws.iter().map(|&v| (v >= hi) as u8 as f64)),
            bound,
        },
        lower: TailCheck {
            threshold: lo,
            empirical: Estimate::from_samples(draws.iter().map(|&v| (v <= lo) as u8 as f64)),
            bound,
        },
    })
}

/// Paired simulation of `π_f` and `π̃_f` from off-target states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosenessReport {
    /// Largest `π̃(x, A)/π(x, A) − 1` over states and cells, with
    /// `π(x, A)` integrated over the acceptance probability.
    pub delta_empirical: f64,
    /// Cells where the simulated `π` move count exceeded `π̃`'s.
    pub lower_violations: usize,
    /// Cells where the simulated `π` move count fell more than three
    /// binomial standard deviations below `π̃/(1+δ)`.
    pub upper_violations: usize,
    pub bound_value: f64,
    pub min_acceptance: f64,
    pub pairs: usize,
}

impl ClosenessReport {
    pub fn holds(&self) -> bool {
        self.lower_violations == 0 && self.upper_violations == 0 && self.delta_empirical <= self.bound_value
    }
}

/// Draws `proposals` shared proposals from each state and bins the
/// admissible moves into `cells` equal cells of the proposal ball.
#[allow(clippy::too_many_arguments)]
pub fn closeness_check(
    f: &dyn Objective,
    space: &ParameterSpace,
    cfg: &MhConfig,
    states: &[Vec<f64>],
    proposals: usize,
    cells: usize,
    g: f64,
    l: f64,
    rng: &mut SimRng,
) -> Result<ClosenessReport> {
    let d = space.dim();
    let et = cfg.eta_tilde();
    let r = cfg.ball_bound(d);
    let bound_value = closeness_bound(et, d, g, l);
    let p_keep = 1.0 / (1.0 + bound_value);
    let mut rep = ClosenessReport {
        delta_empirical: 0.0,
        lower_violations: 0,
        upper_violations: 0,
        bound_value,
        min_acceptance: 1.0,
        pairs: 0,
    };
    for x in states {
        let gx = scaled_grad(f, x, cfg.xi)?;
        let fx = cfg.xi * f.value(x);
        let mut n_tilde = vec![0usize; cells];
        let mut n_pi = vec![0usize; cells];
        let mut alpha_sum = vec![0.0; cells];
        for _ in 0..proposals {
            if rng.random::<f64>() < 0.5 {
                continue;
            }
            let w = standard_normal_vec(rng, d);
            let y: Vec<f64> = x
                .iter()
                .zip(&gx)
                .zip(&w)
                .map(|((a, gi), z)| a - et * gi + (2.0 * et).sqrt() * z)
                .collect();
            let u: f64 = rng.random();
            if !(space.contains_unchecked(&y) && dist(x, &y) <= r) {
                continue;
            }
            let gy = scaled_grad(f, &y, cfg.xi)?;
            let a = log_acceptance(x, &y, &gx, &gy, fx, cfg.xi * f.value(&y), et);
            rep.min_acceptance = rep.min_acceptance.min(a);
            rep.pairs += 1;
            // cell index from the first coordinate of the displacement
            let t = ((y[0] - x[0]) + r) / (2.0 * r);
            let c = ((t * cells as f64) as usize).min(cells - 1);
            n_tilde[c] += 1;
            alpha_sum[c] += a;
            if u < a {
                n_pi[c] += 1;
            }
        }
        for c in 0..cells {
            if n_tilde[c] == 0 {
                continue;
            }
            rep.delta_empirical = rep.delta_empirical.max(n_tilde[c] as f64 / alpha_sum[c] - 1.0);
            if n_pi[c] > n_tilde[c] {
                rep.lower_violations += 1;
            }
            let n1 = n_tilde[c] as f64;
            let floor = n1 * p_keep - 3.0 * (n1 * p_keep * (1.0 - p_keep)).sqrt() - 1.0;
            if (n_pi[c] as f64) < floor {
                rep.upper_violations += 1;
            }
        }
    }
    Ok(rep)
}

/// `(G, L)` of `ξf` on a scan of `K`: `max ‖ξ∇f‖` and `max |ξ∇²f|` (spectral).
pub fn chain_constants(f: &dyn Objective, space: &ParameterSpace, xi: f64, budget: usize) -> Result<(f64, f64)> {
    let mut g = 0.0f64;
    let mut l = 0.0f64;
    for p in crate::objective::scan_points(space, budget) {
        g = g.max(xi * norm(&scaled_grad(f, &p, 1.0)?));
        let h = f
            .hess(&p)
            .ok_or_else(|| Error::Unsupported("objective has no Hessian".into()))?;
        l = l.max(xi * crate::objective::spectral_norm_sym(&h));
    }
    Ok((g, l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{Constant, DoubleWell, Linear};
    use std::sync::Arc;

    #[test]
    fn proposal_density_examples() {
        let cfg = MhConfig::from_eta_tilde(1.0 / (4.0 * std::f64::consts::PI), 1.0, 1, 0);
        assert_eq!(proposal_density(&[0.3], &[0.3], &[1.0], &cfg).point_mass, 0.5);
        let et = cfg.eta_tilde();
        let y = 0.3 - et * 2.0;
        let p = proposal_density(&[0.3], &[y], &[2.0], &cfg);
        assert!((p.density - 0.5).abs() < 1e-14);
        // continuous part integrates to ½
        let cfg = MhConfig::from_eta_tilde(1e-2, 1.0, 1, 0);
        let (a, b, n) = (-1.0, 1.5, 200_000);
        let h = (b - a) / n as f64;
        let total: f64 = (0..n)
            .map(|i| proposal_density(&[0.2], &[a + (i as f64 + 0.5) * h], &[1.0], &cfg).density * h)
            .sum();
        assert!((total - 0.5).abs() < 1e-6);
    }

    #[test]
    fn acceptance_examples() {
        let space = ParameterSpace::cube(-1.0, 1.0, 1).unwrap();
        let cfg = MhConfig::from_eta_tilde(1e-3, 1.0, 1, 0);
        let flat = Constant { dim: 1, value: 0.4 };
        assert_eq!(acceptance_prob(&[0.1], &[0.12], &flat, &space, &cfg).unwrap(), 1.0);
        assert_eq!(acceptance_prob(&[0.1], &[0.1], &flat, &space, &cfg).unwrap(), 0.0);
        assert_eq!(acceptance_prob(&[0.99], &[1.01], &flat, &space, &cfg).unwrap(), 0.0);
        assert_eq!(acceptance_prob(&[0.1], &[0.5], &flat, &space, &cfg).unwrap(), 0.0);
        let tilt = Linear {
            coef: vec![3.0],
            offset: 0.0,
        };
        let a = acceptance_prob(&[0.1], &[0.15], &tilt, &space, &cfg).unwrap();
        assert!(a > 0.0 && a <= 1.0);
    }

    #[test]
    fn flat_chain_is_uniform() {
        let space = ParameterSpace::cube(0.0, 1.0, 1).unwrap();
        let cfg = MhConfig::from_eta_tilde(1e-2, 1.0, 1_000_000, 3);
        let s = mh_run(&Constant { dim: 1, value: 0.0 }, &space, &cfg, None).unwrap();
        let h = crate::stats::histogram(&s.coord(0), 0.0, 1.0, 50);
        let tv = crate::stats::tv_distance(&h, &[1.0 / 50.0; 50]);
        assert!(tv <= 0.05, "tv {tv}");
        assert!(s.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn aux_chain_is_absorbed() {
        let space = ParameterSpace::cube(-1.0, 1.0, 1).unwrap();
        let f = DoubleWell {
            height: 0.3,
            well: 0.5,
            tilt: 0.0,
            offset: 0.0,
        };
        let cfg = MhConfig::from_eta_tilde(1e-3, 5.0, 1000, 1);
        let target = TargetSet::ball("U", vec![0.5], 0.0, 0.05);
        let run = aux_run(&f, &space, &cfg, &target, Some(&[0.52])).unwrap();
        assert_eq!(run.hit, Some(0));
        assert!(run.samples.data.iter().all(|&v| v == 0.52));
        let run = aux_run(&f, &space, &cfg, &target, Some(&[0.3])).unwrap();
        if let Some(t) = run.hit {
            assert!(run.samples.data[t..].iter().all(|&v| v == run.samples.data[t]));
        }
    }

    #[test]
    fn kernel_invariants() {
        let space = ParameterSpace::cube(-1.0, 1.0, 1).unwrap();
        let f = DoubleWell {
            height: 0.3,
            well: 0.5,
            tilt: 0.05,
            offset: 0.0,
        };
        let cfg = MhConfig::from_eta_tilde(1e-3, 5.0, 1, 0);
        let km = build_kernel_1d(&f, &space, &cfg, 500).unwrap();
        assert!(km.max_row_error() <= 1e-10);
        assert!(km.min_diagonal() >= 0.5);
        assert!(km.detailed_balance_error() <= 1e-6, "{}", km.detailed_balance_error());
        let gm = crate::cheeger::GridMeasure::build(&space, |x| 5.0 * f.value(x), 500).unwrap();
        let tv = crate::stats::tv_distance(&km.q, gm.weights());
        assert!(tv <= 0.02, "tv {tv}");
    }

    #[test]
    fn two_state_conductance() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let km = KernelMatrix::from_parts(vec![0.0, 1.0], p).unwrap();
        assert!((km.q[0] - 0.5).abs() < 1e-12);
        let v = CellSet {
            name: "V".into(),
            mask: vec![true, false],
        };
        let (c, _) = conductance_estimate(&km, &v, std::slice::from_ref(&v)).unwrap();
        assert!((c - 0.5).abs() < 1e-12);
        let all = CellSet {
            name: "all".into(),
            mask: vec![true, true],
        };
        let (c, _) = conductance_estimate(&km, &all, std::slice::from_ref(&all)).unwrap();
        assert!(c.abs() < 1e-12);
        assert!(conductance_estimate(&km, &v, &[]).is_err());
    }

    #[test]
    fn chi_square_tails() {
        let mut rng = rng_for(9, 0);
        let rep = chi_square_tail_check(4, 9.0 / 5.0, 1_000_000, &mut rng).unwrap();
        let x = 1.8f64;
        assert!((rep.upper.threshold - 4.0 * (1.0 + 2.0 * x.sqrt() + 2.0 * x)).abs() < 1e-12);
        assert!(rep.upper.threshold < 36.0);
        assert!(rep.upper.passed() && rep.lower.passed(), "{rep:?}");
        let rep = chi_square_tail_check(1, 1.0, 1_000_000, &mut rng).unwrap();
        assert!(rep.upper.passed() && rep.lower.passed());
        let rep = chi_square_tail_check(3, 1e-9, 10_000, &mut rng).unwrap();
        assert!(rep.upper.bound <= 1.0 && rep.upper.empirical.mean <= 1.0);
    }

    #[test]
    fn closeness_on_a_double_well() {
        let space = ParameterSpace::cube(-1.0, 1.0, 1).unwrap();
        let f: Arc<dyn Objective> = Arc::new(DoubleWell {
            height: 0.3,
            well: 0.5,
            tilt: 0.0,
            offset: 0.0,
        });
        let cfg = MhConfig::from_eta_tilde(1e-3, 1.0, 1, 0);
        let (g, l) = chain_constants(f.as_ref(), &space, 1.0, 10_000).unwrap();
        let mut rng = rng_for(10, 0);
        let states: Vec<Vec<f64>> = (0..20).map(|_| space.sample_uniform(&mut rng)).collect();
        let rep = closeness_check(f.as_ref(), &space, &cfg, &states, 20_000, 8, g, l, &mut rng).unwrap();
        assert!(rep.holds(), "{rep:?}");
        assert!(rep.min_acceptance >= (-33.0 * 1e-3 * (g * g + l)).exp());
    }
}
