//! Halfspace learning under Massart label noise with the zero-one loss,
//! plus a one-dimensional threshold task that shows how an empirical risk
//! can be uniformly close to its population risk and still carry many
//! spurious local minima.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::objective::{LossFn, LossSampler, SmoothedObjective, SmoothingBase};
use crate::rng::{rng_for, standard_normal_vec, SimRng};
use crate::stats::{Estimate, RunningMean};

pub type KappaFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Signal strength `κ(a)`: a label agrees with `sgn⟨x*, a⟩` with
/// probability `(1 + κ(a))/2`.
#[derive(Clone)]
pub enum Kappa {
    /// `κ(a) = c₀|⟨x*, a⟩|`, the noisiest labelling the constraint allows.
    Minimal,
    Constant(f64),
    Custom(KappaFn),
}

impl fmt::Debug for Kappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kappa::Minimal => write!(f, "Minimal"),
            Kappa::Constant(k) => write!(f, "Constant({k})"),
            Kappa::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MassartModel {
    x_star: Vec<f64>,
    c0: f64,
    kappa: Kappa,
}

impl MassartModel {
    /// Minimal-noise model; `x_star` is normalized.
    pub fn new(x_star: Vec<f64>, c0: f64) -> Result<Self> {
        Self::with_kappa(x_star, c0, Kappa::Minimal)
    }

    /// Custom `κ` is probed on a fixed sample of the sphere and must satisfy
    /// `c₀|⟨x*, a⟩| ≤ κ(a) ≤ 1` everywhere it is probed.
    pub fn with_kappa(x_star: Vec<f64>, c0: f64, kappa: Kappa) -> Result<Self> {
        let n = norm(&x_star);
        if x_star.is_empty() || !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidParameter("x_star must be a nonzero finite vector".into()));
        }
        if !(c0 > 0.0 && c0 <= 1.0) {
            return Err(Error::InvalidParameter(format!("c0 must lie in (0, 1], got {c0}")));
        }
        let model = Self {
            x_star: x_star.iter().map(|v| v / n).collect(),
            c0,
            kappa,
        };
        match &model.kappa {
            Kappa::Minimal => {}
            Kappa::Constant(k) => {
                if !(*k >= c0 && *k <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "constant kappa {k} must lie in [c0, 1] = [{c0}, 1]"
                    )));
                }
            }
            Kappa::Custom(_) => {
                let mut rng = rng_for(0x4a55, 0);
                for a in sample_features(10_000, model.dim(), &mut rng) {
                    let k = model.kappa(&a);
                    let floor = model.c0 * dot(&model.x_star, &a).abs();
                    if !(k >= floor - 1e-12 && k <= 1.0) {
                        return Err(Error::InvalidParameter(format!(
                            "kappa({a:?}) = {k} violates [{floor}, 1]"
                        )));
                    }
                }
            }
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn kappa(&self, a: &[f64]) -> f64 {
        match &self.kappa {
            Kappa::Minimal => self.c0 * dot(&self.x_star, a).abs(),
            Kappa::Constant(k) => *k,
            Kappa::Custom(f) => f(a),
        }
    }

    /// `sgn⟨x*, a⟩` with `sgn(0) = +1`.
    pub fn clean_label(&self, a: &[f64]) -> f64 {
        sign(dot(&self.x_star, a))
    }

    /// `E[ℓ(x; (a, b)) | a]`.
    pub fn conditional_loss(&self, x: &[f64], a: &[f64]) -> f64 {
        let s = dot(x, a);
        if s == 0.0 {
            return 0.5;
        }
        let k = self.kappa(a);
        if sign(s) == self.clean_label(a) {
            0.5 * (1.0 - k)
        } else {
            0.5 * (1.0 + k)
        }
    }
}

fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Features on the unit sphere with labels in `{−1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} features but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(first) = features.first() {
            let d = first.len();
            for a in &features {
                if a.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: a.len(),
                    });
                }
                if (norm(a) - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!("feature {a:?} is not a unit vector")));
                }
            }
        }
        if let Some(b) = labels.iter().find(|b| **b != 1.0 && **b != -1.0) {
            return Err(Error::InvalidParameter(format!("label {b} is not ±1")));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// The dataset as a sample table for the smoothing machinery. Each row
    /// is `(a_1, …, a_d, b)`.
    pub fn loss_sampler(&self) -> Result<LossSampler> {
        let d = self.dim();
        let loss: LossFn = Arc::new(move |x: &[f64], s: &[f64]| zero_one_loss(x, &s[..d], s[d]));
        let rows = self
            .features
            .iter()
            .zip(&self.labels)
            .map(|(a, b)| {
                let mut r = a.clone();
                r.push(*b);
                r
            })
            .collect();
        LossSampler::new(d, loss, rows, 1.0)
    }

    /// Gaussian-smoothed empirical risk.
    pub fn smoothed_risk(&self, sigma: f64, value_mc_samples: usize) -> Result<SmoothedObjective> {
        SmoothedObjective::new(SmoothingBase::Samples(self.loss_sampler()?), sigma, value_mc_samples)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("a_{i}")).collect();
        header.push("b".into());
        w.write_record(&header)?;
        for (a, b) in self.features.iter().zip(&self.labels) {
            let mut row: Vec<String> = a.iter().map(|v| format!("{v:e}")).collect();
            row.push(format!("{b}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidParameter(format!("bad number {s:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let (b, a) = vals.split_last().ok_or(Error::Empty("csv row"))?;
            features.push(a.to_vec());
            labels.push(*b);
        }
        Self::new(features, labels)
    }
}

/// `n` i.i.d. uniform points on the unit sphere in `R^d`.
pub fn sample_features(n: usize, d: usize, rng: &mut SimRng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| loop {
            let g = standard_normal_vec(rng, d);
            let r = norm(&g);
            if r > 1e-300 {
                break g.into_iter().map(|v| v / r).collect();
            }
        })
        .collect()
}

/// Each label is `sgn⟨x*, a⟩` with probability `(1 + κ(a))/2`, otherwise its
/// negation.
pub fn gen_labels(model: &MassartModel, features: Vec<Vec<f64>>, rng: &mut SimRng) -> Result<LabeledDataset> {
    for a in &features {
        if a.len() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: a.len(),
            });
        }
    }
    let labels = features
        .iter()
        .map(|a| {
            let keep = rng.random::<f64>() < 0.5 * (1.0 + model.kappa(a));
            let b = model.clean_label(a);
            if keep {
                b
            } else {
                -b
            }
        })
        .collect();
    LabeledDataset::new(features, labels)
}

/// Convenience: `n` fresh labelled samples from the model.
pub fn sample_dataset(model: &MassartModel, n: usize, rng: &mut SimRng) -> Result<LabeledDataset> {
    let features = sample_features(n, model.dim(), rng);
    gen_labels(model, features, rng)
}

/// `0` if `b⟨x, a⟩ > 0`, `1` if `b⟨x, a⟩ < 0`, `½` on the boundary.
pub fn zero_one_loss(x: &[f64], a: &[f64], b: f64) -> f64 {
    let s = b * dot(x, a);
    if s > 0.0 {
        0.0
    } else if s < 0.0 {
        1.0
    } else {
        0.5
    }
}

pub fn empirical_risk(x: &[f64], ds: &LabeledDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if x.len() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            got: x.len(),
        });
    }
    let s: f64 = ds
        .features
        .iter()
        .zip(&ds.labels)
        .map(|(a, b)| zero_one_loss(x, a, *b))
        .sum();
    Ok(s / ds.len() as f64)
}

/// Population risk `F(x)` from `m` fresh features. Each feature contributes
/// its exact label-conditional loss, so the standard error is at most
/// `1/(2√m)`.
pub fn population_risk_mc(x: &[f64], model: &MassartModel, m: usize, rng: &mut SimRng) -> Estimate {
    let mut acc = RunningMean::default();
    for a in sample_features(m.max(1), model.dim(), rng) {
        acc.push(model.conditional_loss(x, &a));
    }
    acc.estimate()
}

/// Population risks of several points on one shared feature sample.
pub fn population_risks_mc(xs: &[Vec<f64>], model: &MassartModel, m: usize, rng: &mut SimRng) -> Vec<Estimate> {
    let mut accs = vec![RunningMean::default(); xs.len()];
    for a in sample_features(m.max(1), model.dim(), rng) {
        for (acc, x) in accs.iter_mut().zip(xs) {
            acc.push(model.conditional_loss(x, &a));
        }
    }
    accs.iter().map(RunningMean::estimate).collect()
}

/// `P(sgn⟨x, a⟩ ≠ sgn⟨y, a⟩)` for `a` uniform on the sphere, i.e.
/// `arccos(cos∠(x, y))/π`.
pub fn disagreement_probability(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let (nx, ny) = (norm(x), norm(y));
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::InvalidParameter("disagreement of a zero vector".into()));
    }
    // 2·atan2(‖x̂ − ŷ‖, ‖x̂ + ŷ‖) equals arccos⟨x̂, ŷ⟩ without losing
    // precision near ±1
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (u, v) = (a / nx, b / ny);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Ok(2.0 * diff.sqrt().atan2(sum.sqrt()) / std::f64::consts::PI)
}

/// Monte-Carlo frequency of sign disagreement.
pub fn disagreement_mc(x: &[f64], y: &[f64], m: usize, rng: &mut SimRng) -> Estimate {
    let mut acc = RunningMean::default();
    for a in sample_features(m.max(1), x.len(), rng) {
        acc.push(if sign(dot(x, &a)) != sign(dot(y, &a)) { 1.0 } else { 0.0 });
    }
    acc.estimate()
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    /// `max |f(x) − F̂(x)|` over the probes.
    pub gap: f64,
    pub argmax: usize,
    /// Largest Monte-Carlo standard error among the probes.
    pub max_se: f64,
    /// `√(d log(n/d) / n)`.
    pub reference: f64,
    pub per_probe: Vec<(f64, f64)>,
}

/// Uniform-convergence gap between empirical and population risk on probes.
pub fn uniform_gap(
    ds: &LabeledDataset,
    model: &MassartModel,
    probes: &[Vec<f64>],
    m: usize,
    rng: &mut SimRng,
) -> Result<GapReport> {
    if probes.is_empty() {
        return Err(Error::Empty("probe list"));
    }
    let pop = population_risks_mc(probes, model, m, rng);
    let mut per_probe = Vec::with_capacity(probes.len());
    let (mut gap, mut argmax, mut max_se) = (0.0f64, 0, 0.0f64);
    for (i, (x, f_pop)) in probes.iter().zip(&pop).enumerate() {
        let f_emp = empirical_risk(x, ds)?;
        let g = (f_emp - f_pop.mean).abs();
        if g > gap {
            gap = g;
            argmax = i;
        }
        max_se = max_se.max(f_pop.se);
        per_probe.push((f_emp, f_pop.mean));
    }
    let (n, d) = (ds.len() as f64, ds.dim() as f64);
    Ok(GapReport {
        gap,
        argmax,
        max_se,
        reference: (d * (n / d).max(std::f64::consts::E).ln() / n).sqrt(),
        per_probe,
    })
}

/// The one-dimensional threshold task: `a ~ U[0, 1]`, clean label
/// `sgn(a − ½)`, signal `κ(a) = c₀|2a − 1|`, loss `1{b(a − x) < 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdTask {
    pub c0: f64,
}

impl ThresholdTask {
    pub const OPTIMUM: f64 = 0.5;

    pub fn sample(&self, n: usize, rng: &mut SimRng) -> Vec<(f64, f64)> {
        (0..n)
            .map(|_| {
                let a: f64 = rng.random();
                let kappa = self.c0 * (2.0 * a - 1.0).abs();
                let b = sign(a - Self::OPTIMUM);
                let keep = rng.random::<f64>() < 0.5 * (1.0 + kappa);
                (a, if keep { b } else { -b })
            })
            .collect()
    }

    pub fn loss(x: f64, a: f64, b: f64) -> f64 {
        if b * (a - x) < 0.0 {
            1.0
        } else {
            0.0
        }
    }

    pub fn empirical(x: f64, data: &[(f64, f64)]) -> f64 {
        data.iter().map(|&(a, b)| Self::loss(x, a, b)).sum::<f64>() / data.len() as f64
    }

    /// `F(x) = (1 − c₀/2)/2 + c₀(x − ½)²` on `[0, 1]`.
    pub fn population(&self, x: f64) -> f64 {
        0.5 * (1.0 - 0.5 * self.c0) + self.c0 * (x - Self::OPTIMUM).powi(2)
    }
}

/// Empirical and population risk of the threshold task on a shared grid.
#[derive(Debug, Clone, Serialize)]
pub struct Fig1Curves {
    pub grid: Vec<f64>,
    pub empirical: Vec<f64>,
    pub population: Vec<f64>,
}

impl Fig1Curves {
    pub fn sup_gap(&self) -> f64 {
        self.empirical
            .iter()
            .zip(&self.population)
            .fold(0.0f64, |m, (e, p)| m.max((e - p).abs()))
    }

    /// Strict local minima of the empirical curve lying farther than `sep`
    /// from every local minimum of the population curve.
    pub fn spurious_minima(&self, sep: f64) -> Vec<usize> {
        let pop: Vec<f64> = local_minima(&self.population).iter().map(|&i| self.grid[i]).collect();
        local_minima(&self.empirical)
            .into_iter()
            .filter(|&i| pop.iter().all(|p| (self.grid[i] - p).abs() > sep))
            .collect()
    }
}

/// Curves of the threshold task for one sample of size `n` on `grid_points`
/// equally spaced thresholds in `[0, 1]`.
pub fn fig1_tasks(n: usize, c0: f64, grid_points: usize, rng: &mut SimRng) -> Result<Fig1Curves> {
    if n == 0 {
        return Err(Error::Empty("sample"));
    }
    if grid_points < 2 {
        return Err(Error::InvalidParameter("grid needs at least two points".into()));
    }
    if !(c0 > 0.0 && c0 <= 1.0) {
        return Err(Error::InvalidParameter(format!("c0 must lie in (0, 1], got {c0}")));
    }
    let task = ThresholdTask { c0 };
    let mut data = task.sample(n, rng);
    data.sort_by(|p, q| p.0.total_cmp(&q.0));
    let grid: Vec<f64> = (0..grid_points).map(|i| i as f64 / (grid_points - 1) as f64).collect();

    // Sweep thresholds left to right: a point (a, b) costs 1 when
    // a < x and b = +1, or a > x and b = −1.
    let neg_total = data.iter().filter(|p| p.1 < 0.0).count();
    let (mut pos_left, mut neg_left, mut j) = (0usize, 0usize, 0usize);
    let mut empirical = Vec::with_capacity(grid_points);
    for &x in &grid {
        while j < data.len() && data[j].0 < x {
            if data[j].1 > 0.0 {
                pos_left += 1;
            } else {
                neg_left += 1;
            }
            j += 1;
        }
        let neg_right = neg_total - neg_left - data[j..].iter().take_while(|p| p.0 == x).filter(|p| p.1 < 0.0).count();
        empirical.push((pos_left + neg_right) as f64 / n as f64);
    }
    let population = grid.iter().map(|&x| task.population(x)).collect();
    Ok(Fig1Curves {
        grid,
        empirical,
        population,
    })
}

/// Indices of strict local minima of a sampled curve. Flat stretches count
/// once (at their midpoint) when both neighbouring values are strictly
/// larger; stretches touching either end of the grid are ignored.
pub fn local_minima(values: &[f64]) -> Vec<usize> {
    let mut runs: Vec<(usize, usize, f64)> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.2 == v => r.1 = i,
            _ => runs.push((i, i, v)),
        }
    }
    runs.windows(3)
        .filter(|w| w[1].2 < w[0].2 && w[1].2 < w[2].2)
        .map(|w| (w[1].0 + w[1].1) / 2)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_statistic, normal_cdf};
    use proptest::prelude::*;

    #[test]
    fn features_are_unit_and_isotropic() {
        let mut rng = rng_for(1, 0);
        let f = sample_features(100_000, 2, &mut rng);
        assert!(f.iter().all(|a| (norm(a) - 1.0).abs() < 1e-12));
        let angles: Vec<f64> = f
            .iter()
            .map(|a| a[1].atan2(a[0]).rem_euclid(2.0 * std::f64::consts::PI))
            .collect();
        let ks = ks_statistic(&angles, |t| t / (2.0 * std::f64::consts::PI));
        assert!(ks < 0.02, "ks {ks}");

        let d = 5;
        let u = [0.6, 0.0, 0.8, 0.0, 0.0];
        let est = Estimate::from_samples(sample_features(100_000, d, &mut rng).iter().map(|a| dot(&u, a).powi(2)));
        assert!((est.mean - 0.2).abs() < 3.0 * est.se, "{est:?}");
    }

    #[test]
    fn noiseless_labels_are_clean() {
        let mut rng = rng_for(2, 0);
        let m = MassartModel::with_kappa(vec![1.0, 2.0, -2.0], 0.3, Kappa::Constant(1.0)).unwrap();
        let ds = sample_dataset(&m, 2000, &mut rng).unwrap();
        for (a, b) in ds.features.iter().zip(&ds.labels) {
            assert_eq!(*b, m.clean_label(a));
        }
        assert_eq!(empirical_risk(m.x_star(), &ds).unwrap(), 0.0);
        assert_eq!(population_risk_mc(m.x_star(), &m, 1000, &mut rng).mean, 0.0);
        let neg: Vec<f64> = m.x_star().iter().map(|v| -v).collect();
        assert_eq!(population_risk_mc(&neg, &m, 1000, &mut rng).mean, 1.0);
    }

    #[test]
    fn boundary_features_get_random_labels() {
        let m = MassartModel::new(vec![1.0, 0.0], 0.8).unwrap();
        assert_eq!(m.kappa(&[0.0, 1.0]), 0.0);
        let mut rng = rng_for(3, 0);
        let ds = gen_labels(&m, vec![vec![0.0, 1.0]; 40_000], &mut rng).unwrap();
        let plus = ds.labels.iter().filter(|b| **b > 0.0).count() as f64 / 40_000.0;
        assert!((plus - 0.5).abs() < 3.0 * 0.5 / 200.0, "{plus}");
    }

    #[test]
    fn agreement_rate_per_margin_bin() {
        let c0 = 0.6;
        let m = MassartModel::new(vec![0.0, 0.0, 1.0], c0).unwrap();
        let mut rng = rng_for(4, 0);
        let ds = sample_dataset(&m, 200_000, &mut rng).unwrap();
        let bins = 5;
        let mut agree = vec![(0.0, 0.0, 0usize); bins];
        for (a, b) in ds.features.iter().zip(&ds.labels) {
            let t = a[2].abs();
            let k = ((t * bins as f64) as usize).min(bins - 1);
            agree[k].0 += if *b == m.clean_label(a) { 1.0 } else { 0.0 };
            agree[k].1 += 0.5 * (1.0 + c0 * t);
            agree[k].2 += 1;
        }
        for (hits, expected, n) in agree {
            let n = n as f64;
            let p = expected / n;
            let se = (p * (1.0 - p) / n).sqrt();
            assert!((hits / n - p).abs() < 4.0 * se, "{} vs {p}", hits / n);
        }
    }

    #[test]
    fn custom_kappa_is_validated() {
        let x = vec![1.0, 0.0];
        assert!(
            MassartModel::with_kappa(x.clone(), 0.5, Kappa::Custom(Arc::new(|a: &[f64]| 0.5 * a[0].abs()))).is_ok()
        );
        assert!(
            MassartModel::with_kappa(x.clone(), 0.5, Kappa::Custom(Arc::new(|a: &[f64]| 0.4 * a[0].abs()))).is_err()
        );
        assert!(MassartModel::with_kappa(x.clone(), 0.5, Kappa::Constant(0.4)).is_err());
        assert!(MassartModel::with_kappa(x, 0.5, Kappa::Custom(Arc::new(|_: &[f64]| 1.2))).is_err());
        assert!(MassartModel::new(vec![0.0, 0.0], 0.5).is_err());
        assert!(MassartModel::new(vec![1.0], 0.0).is_err());
    }

    #[test]
    fn zero_one_loss_cases() {
        assert_eq!(zero_one_loss(&[1.0, -1.0], &[1.0, 1.0], 1.0), 0.5);
        assert_eq!(zero_one_loss(&[1.0, 0.0], &[0.6, 0.8], 1.0), 0.0);
        assert_eq!(zero_one_loss(&[1.0, 0.0], &[0.6, 0.8], -1.0), 1.0);
        assert_eq!(zero_one_loss(&[2.0, 0.0], &[0.6, 0.8], -1.0), 1.0);
    }

    #[test]
    fn empirical_risk_edge_cases() {
        let ds = LabeledDataset::new(vec![vec![0.6, 0.8]], vec![-1.0]).unwrap();
        assert_eq!(empirical_risk(&[1.0, 0.0], &ds).unwrap(), 1.0);
        let empty = LabeledDataset::new(vec![], vec![]).unwrap();
        assert!(empirical_risk(&[1.0, 0.0], &empty).is_err());
        assert!(LabeledDataset::new(vec![vec![1.0, 1.0]], vec![1.0]).is_err());
        assert!(LabeledDataset::new(vec![vec![1.0, 0.0]], vec![0.0]).is_err());
    }

    #[test]
    fn population_risk_at_the_optimum() {
        // F(x*) = ½(1 − c₀ E|⟨x*, a⟩|) with E|a₁| from an independent sample
        let (d, c0) = (4, 0.5);
        let m = MassartModel::new(vec![0.0, 1.0, 0.0, 0.0], c0).unwrap();
        let mut oracle_rng = rng_for(77, 1);
        let mut acc = RunningMean::default();
        for _ in 0..10_000_000 / 10 {
            let g = standard_normal_vec(&mut oracle_rng, d);
            acc.push(g[1].abs() / norm(&g));
        }
        let ea = acc.estimate();
        let expected = 0.5 * (1.0 - c0 * ea.mean);
        let mut rng = rng_for(5, 0);
        let est = population_risk_mc(m.x_star(), &m, 1_000_000, &mut rng);
        let se = (est.se.powi(2) + (0.5 * c0 * ea.se).powi(2)).sqrt();
        assert!((est.mean - expected).abs() < 4.0 * se, "{est:?} vs {expected}");
        assert!(est.se <= 0.5 / 1000.0);
    }

    #[test]
    fn disagreement_formula() {
        assert_eq!(disagreement_probability(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((disagreement_probability(&[1.0, 2.0], &[-1.0, -2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((disagreement_probability(&[1.0, 0.0], &[0.0, 3.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(disagreement_probability(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        let mut rng = rng_for(6, 0);
        for _ in 0..3 {
            let x = standard_normal_vec(&mut rng, 3);
            let y = standard_normal_vec(&mut rng, 3);
            let p = disagreement_probability(&x, &y).unwrap();
            let c = (dot(&x, &y) / (norm(&x) * norm(&y))).clamp(-1.0, 1.0);
            assert!((p - c.acos() / std::f64::consts::PI).abs() < 1e-12);
            let e = disagreement_mc(&x, &y, 200_000, &mut rng);
            assert!((p - e.mean).abs() < 4.0 * e.se.max(1e-4), "{p} {e:?}");
        }
    }

    #[test]
    fn gap_of_a_single_sample() {
        let m = MassartModel::new(vec![1.0, 0.0], 0.5).unwrap();
        let ds = LabeledDataset::new(vec![vec![0.0, 1.0]], vec![1.0]).unwrap();
        let probe = vec![vec![0.0, 1.0]];
        let mut rng = rng_for(7, 0);
        let rep = uniform_gap(&ds, &m, &probe, 200_000, &mut rng).unwrap();
        // f = 0 at this probe, so the gap is F itself, which is ½ for x ⊥ x*
        let f = population_risk_mc(&probe[0], &m, 200_000, &mut rng);
        assert!((rep.gap - f.mean).abs() < 4.0 * f.se.max(1e-3));
        assert!((rep.gap - 0.5).abs() < 0.01);
    }

    #[test]
    fn threshold_population_matches_quadrature() {
        // F(x) = ∫ E[loss | a] da by midpoint rule over the noise model
        let task = ThresholdTask { c0: 0.7 };
        for &x in &[0.0, 0.13, 0.5, 0.81, 1.0] {
            let n = 200_000;
            let mut s = 0.0;
            for i in 0..n {
                let a = (i as f64 + 0.5) / n as f64;
                let k = task.c0 * (2.0 * a - 1.0).abs();
                let clean = if a >= 0.5 { 1.0 } else { -1.0 };
                let predicted = if a >= x { 1.0 } else { -1.0 };
                s += if predicted == clean {
                    0.5 * (1.0 - k)
                } else {
                    0.5 * (1.0 + k)
                };
            }
            let q = s / n as f64;
            assert!(
                (task.population(x) - q).abs() < 1e-6,
                "{x}: {} vs {q}",
                task.population(x)
            );
        }
    }

    #[test]
    fn sweep_matches_direct_evaluation() {
        let mut rng = rng_for(8, 0);
        let curves = fig1_tasks(300, 0.5, 101, &mut rng).unwrap();
        let mut rng = rng_for(8, 0);
        let data = ThresholdTask { c0: 0.5 }.sample(300, &mut rng);
        for (x, e) in curves.grid.iter().zip(&curves.empirical) {
            assert_eq!(*e, ThresholdTask::empirical(*x, &data));
        }
        let pop_min = local_minima(&curves.population);
        assert_eq!(pop_min, vec![50]);
    }

    #[test]
    fn large_samples_close_the_gap() {
        let mut rng = rng_for(9, 0);
        let curves = fig1_tasks(400_000, 0.5, 201, &mut rng).unwrap();
        assert!(curves.sup_gap() < 0.005, "{}", curves.sup_gap());
    }

    #[test]
    fn local_minima_on_plateaus() {
        assert_eq!(local_minima(&[3.0, 1.0, 1.0, 1.0, 2.0]), vec![2]);
        assert!(local_minima(&[1.0, 1.0, 2.0]).is_empty());
        assert_eq!(local_minima(&[2.0, 1.0, 2.0, 0.5, 3.0]), vec![1, 3]);
    }

    #[test]
    fn normal_cdf_ties_with_margin_distribution() {
        // in high dimension ⟨x*, a⟩√d is close to standard normal
        let d = 400;
        let mut rng = rng_for(10, 0);
        let proj: Vec<f64> = sample_features(20_000, d, &mut rng)
            .iter()
            .map(|a| a[0] * (d as f64).sqrt())
            .collect();
        assert!(ks_statistic(&proj, normal_cdf) < 0.03);
    }

    proptest! {
        #[test]
        fn risk_is_scale_invariant(seed in 0u64..500, lambda in 1e-3f64..1e3) {
            let mut rng = rng_for(seed, 0);
            let m = MassartModel::new(standard_normal_vec(&mut rng, 3), 0.5).unwrap();
            let ds = sample_dataset(&m, 200, &mut rng).unwrap();
            let x = standard_normal_vec(&mut rng, 3);
            let xs: Vec<f64> = x.iter().map(|v| v * lambda).collect();
            prop_assert_eq!(empirical_risk(&x, &ds).unwrap(), empirical_risk(&xs, &ds).unwrap());
        }

        #[test]
        fn minimal_kappa_respects_the_floor(seed in 0u64..500) {
            let mut rng = rng_for(seed, 0);
            let m = MassartModel::new(standard_normal_vec(&mut rng, 4), 0.7).unwrap();
            prop_assert!((norm(m.x_star()) - 1.0).abs() < 1e-12);
            for a in sample_features(50, 4, &mut rng) {
                let k = m.kappa(&a);
                prop_assert!(k >= 0.7 * dot(m.x_star(), &a).abs() && (0.0..=1.0).contains(&k));
            }
        }
    }
}
