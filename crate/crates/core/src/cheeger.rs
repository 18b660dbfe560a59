//! Restricted Cheeger constants of Gibbs measures on grids, and the
//! vector-field lower bounds that certify them.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::objective::Objective;
use crate::space::ParameterSpace;
use crate::stats::{fit_line, normal_cdf};

/// Discretized `μ_f ∝ e^{−f}` on a regular grid over the bounding box of
/// `K`. Cells whose centre lies outside `K` carry zero weight.
#[derive(Debug, Clone)]
pub struct GridMeasure {
    space: ParameterSpace,
    shape: Vec<usize>,
    lo: Vec<f64>,
    step: Vec<f64>,
    inside: Vec<bool>,
    f_values: Vec<f64>,
    weights: Vec<f64>,
    cell_volume: f64,
}

/// A set of grid cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSet {
    pub name: String,
    pub mask: Vec<bool>,
}

impl CellSet {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &CellSet) -> bool {
        self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    pub fn intersect(&self, other: &CellSet) -> CellSet {
        CellSet {
            name: format!("{}&{}", self.name, other.name),
            mask: self.mask.iter().zip(&other.mask).map(|(&a, &b)| a && b).collect(),
        }
    }

    pub fn complement_in(&self, gm: &GridMeasure) -> CellSet {
        CellSet {
            name: format!("K\\{}", self.name),
            mask: self.mask.iter().zip(&gm.inside).map(|(&a, &k)| k && !a).collect(),
        }
    }
}

impl GridMeasure {
    /// `resolution` cells per axis over the bounding box of `K` (`d ≤ 2`).
    pub fn build<F: Fn(&[f64]) -> f64 + Sync>(space: &ParameterSpace, f: F, resolution: usize) -> Result<Self> {
        let d = space.dim();
        if d > 2 {
            return Err(Error::Unsupported(format!("grid measures need d <= 2, got d = {d}")));
        }
        if resolution < 2 {
            return Err(Error::InvalidParameter("grid resolution must be at least 2".into()));
        }
        let (lo, hi) = space.bounding_box();
        let shape = vec![resolution; d];
        let step: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| (b - a) / resolution as f64).collect();
        let total = resolution.pow(d as u32);
        let mut gm = GridMeasure {
            space: space.clone(),
            shape,
            lo,
            step,
            inside: vec![false; total],
            f_values: vec![f64::NAN; total],
            weights: vec![0.0; total],
            cell_volume: 0.0,
        };
        gm.cell_volume = gm.step.iter().product();
        let values: Vec<(bool, f64)> = (0..total)
            .into_par_iter()
            .map(|i| {
                let c = gm.center(i);
                if space.contains_unchecked(&c) {
                    (true, f(&c))
                } else {
                    (false, f64::NAN)
                }
            })
            .collect();
        for (i, (inside, v)) in values.into_iter().enumerate() {
            if inside && !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "grid objective value",
                    step: i,
                });
            }
            gm.inside[i] = inside;
            gm.f_values[i] = v;
        }
        let fmin = gm
            .f_values
            .iter()
            .zip(&gm.inside)
            .filter(|(_, &k)| k)
            .map(|(v, _)| *v)
            .fold(f64::INFINITY, f64::min);
        if !fmin.is_finite() {
            return Err(Error::Empty("grid cells inside the space"));
        }
        let mut total_w = 0.0;
        for i in 0..total {
            if gm.inside[i] {
                gm.weights[i] = (-(gm.f_values[i] - fmin)).exp() * gm.cell_volume;
                total_w += gm.weights[i];
            }
        }
        for w in &mut gm.weights {
            *w /= total_w;
        }
        Ok(gm)
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn resolution(&self) -> usize {
        self.shape[0]
    }

    pub fn len(&self) -> usize {
        self.inside.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inside.is_empty()
    }

    pub fn step(&self) -> &[f64] {
        &self.step
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn inside(&self, i: usize) -> bool {
        self.inside[i]
    }

    pub fn n_inside(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn f_values(&self) -> &[f64] {
        &self.f_values
    }

    pub fn center(&self, i: usize) -> Vec<f64> {
        match self.shape.len() {
            1 => vec![self.lo[0] + (i as f64 + 0.5) * self.step[0]],
            _ => {
                let (a, b) = (i / self.shape[1], i % self.shape[1]);
                vec![
                    self.lo[0] + (a as f64 + 0.5) * self.step[0],
                    self.lo[1] + (b as f64 + 0.5) * self.step[1],
                ]
            }
        }
    }

    /// Centres of all cells inside `K`.
    pub fn inside_centers(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .filter(|&i| self.inside[i])
            .map(|i| self.center(i))
            .collect()
    }

    pub fn same_geometry(&self, other: &GridMeasure) -> bool {
        self.shape == other.shape && self.lo == other.lo && self.step == other.step && self.inside == other.inside
    }

    pub fn measure(&self, set: &CellSet) -> f64 {
        set.mask
            .iter()
            .zip(&self.weights)
            .filter(|(&m, _)| m)
            .map(|(_, w)| w)
            .sum()
    }

    /// `(min, max)` of `f` over cells inside `K`.
    pub fn f_range(&self) -> (f64, f64) {
        self.f_values
            .iter()
            .zip(&self.inside)
            .filter(|(_, &k)| k)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (v, _)| {
                (a.min(*v), b.max(*v))
            })
    }

    pub fn whole(&self) -> CellSet {
        CellSet {
            name: "K".into(),
            mask: self.inside.clone(),
        }
    }

    /// Cells inside `K` whose centre satisfies `pred`.
    pub fn set_where<P: Fn(&[f64]) -> bool>(&self, name: impl Into<String>, pred: P) -> CellSet {
        CellSet {
            name: name.into(),
            mask: (0..self.len())
                .map(|i| self.inside[i] && pred(&self.center(i)))
                .collect(),
        }
    }

    /// Euclidean distance from each cell centre to the nearest centre in `set`.
    pub fn distances_to(&self, set: &CellSet) -> Vec<f64> {
        let inf = f64::INFINITY;
        let mut sq: Vec<f64> = set.mask.iter().map(|&m| if m { 0.0 } else { inf }).collect();
        match self.shape.len() {
            1 => sq = squared_edt_1d(&sq, self.step[0]),
            _ => {
                let (n0, n1) = (self.shape[0], self.shape[1]);
                for a in 0..n0 {
                    let row = squared_edt_1d(&sq[a * n1..(a + 1) * n1], self.step[1]);
                    sq[a * n1..(a + 1) * n1].copy_from_slice(&row);
                }
                let mut col = vec![0.0; n0];
                for b in 0..n1 {
                    for a in 0..n0 {
                        col[a] = sq[a * n1 + b];
                    }
                    let out = squared_edt_1d(&col, self.step[0]);
                    for a in 0..n0 {
                        sq[a * n1 + b] = out[a];
                    }
                }
            }
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    /// `A_ε = {x ∈ K : d(x, A) ≤ ε}` on the grid.
    pub fn dilate(&self, set: &CellSet, eps: f64) -> CellSet {
        let dist = self.distances_to(set);
        let tol = eps + 1e-9 * self.step.iter().cloned().fold(f64::INFINITY, f64::min);
        CellSet {
            name: format!("{}+{eps}", set.name),
            mask: dist.iter().zip(&self.inside).map(|(&r, &k)| k && r <= tol).collect(),
        }
    }

    /// Masses of `bins` equal-width bins over a 1D box.
    pub fn bin_masses(&self, lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
        if self.dim() != 1 {
            return Err(Error::Unsupported("bin masses need a 1D grid".into()));
        }
        let mut out = vec![0.0; bins];
        for i in 0..self.len() {
            if !self.inside[i] {
                continue;
            }
            // split each cell proportionally across the bins it overlaps
            let (a, b) = (
                self.lo[0] + i as f64 * self.step[0],
                self.lo[0] + (i + 1) as f64 * self.step[0],
            );
            let width = (hi - lo) / bins as f64;
            let first = (((a - lo) / width).floor().max(0.0) as usize).min(bins - 1);
            let last = (((b - lo) / width).ceil() as usize).clamp(1, bins) - 1;
            for (k, slot) in out.iter_mut().enumerate().take(last + 1).skip(first) {
                let (c, e) = (lo + k as f64 * width, lo + (k + 1) as f64 * width);
                let overlap = (b.min(e) - a.max(c)).max(0.0);
                *slot += self.weights[i] * overlap / self.step[0];
            }
        }
        Ok(out)
    }
}

/// Felzenszwalb–Huttenlocher lower envelope of parabolas: returns
/// `min_q (s·(p − q))² + f(q)` for every `p`.
fn squared_edt_1d(f: &[f64], s: f64) -> Vec<f64> {
    let n = f.len();
    let pts: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    if pts.is_empty() {
        return vec![f64::INFINITY; n];
    }
    let pos = |q: usize| q as f64 * s;
    let mut v: Vec<usize> = Vec::with_capacity(pts.len());
    let mut z: Vec<f64> = Vec::with_capacity(pts.len() + 1);
    v.push(pts[0]);
    z.push(f64::NEG_INFINITY);
    z.push(f64::INFINITY);
    for &q in &pts[1..] {
        loop {
            let p = *v.last().unwrap();
            let inter = ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
            if inter <= z[v.len() - 1] {
                v.pop();
                z.pop();
                if v.is_empty() {
                    v.push(q);
                    z.push(f64::INFINITY);
                    break;
                }
            } else {
                *z.last_mut().unwrap() = inter;
                v.push(q);
                z.push(f64::INFINITY);
                break;
            }
        }
    }
    let mut out = vec![0.0; n];
    let mut k = 0;
    for (p, slot) in out.iter_mut().enumerate() {
        while z[k + 1] < pos(p) {
            k += 1;
        }
        let dq = pos(p) - pos(v[k]);
        *slot = dq * dq + f[v[k]];
    }
    out
}

/// Candidate-set families over which the infimum is taken.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Intervals with endpoints on a lattice of `points` positions (1D).
    Intervals {
        points: usize,
    },
    /// Unions of up to `parts` separated lattice intervals (1D).
    IntervalUnions {
        points: usize,
        parts: usize,
    },
    /// Sub- and super-level sets of `f` at `levels` quantiles of `μ_f`.
    LevelSets {
        levels: usize,
    },
    /// Balls centred on a `centers`-per-axis lattice with `radii` radii.
    Balls {
        centers: usize,
        radii: usize,
    },
    /// Half-spaces with `directions` normals and `offsets` offsets.
    HalfSpaces {
        directions: usize,
        offsets: usize,
    },
    Union(Vec<Family>),
}

impl Family {
    pub fn standard(dim: usize) -> Family {
        if dim == 1 {
            Family::Union(vec![
                Family::Intervals { points: 201 },
                Family::IntervalUnions { points: 11, parts: 3 },
                Family::LevelSets { levels: 50 },
            ])
        } else {
            Family::Union(vec![
                Family::LevelSets { levels: 50 },
                Family::Balls { centers: 15, radii: 10 },
                Family::HalfSpaces {
                    directions: 16,
                    offsets: 20,
                },
            ])
        }
    }

    pub fn name(&self) -> String {
        match self {
            Family::Intervals { points } => format!("intervals({points})"),
            Family::IntervalUnions { points, parts } => format!("interval_unions({points},{parts})"),
            Family::LevelSets { levels } => format!("level_sets({levels})"),
            Family::Balls { centers, radii } => format!("balls({centers},{radii})"),
            Family::HalfSpaces { directions, offsets } => format!("half_spaces({directions},{offsets})"),
            Family::Union(fs) => fs.iter().map(Family::name).collect::<Vec<_>>().join("+"),
        }
    }

    /// Candidates intersected with `v`, with empty and duplicate sets removed.
    pub fn materialize(&self, gm: &GridMeasure, v: &CellSet) -> Result<Vec<CellSet>> {
        let mut raw = Vec::new();
        self.collect(gm, &mut raw)?;
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for c in raw {
            let a = c.intersect(v);
            let a = CellSet {
                name: c.name,
                mask: a.mask,
            };
            if gm.measure(&a) <= 0.0 {
                continue;
            }
            let key: Vec<u64> = a
                .mask
                .chunks(64)
                .map(|ch| ch.iter().enumerate().fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i)))
                .collect();
            if seen.insert(key) {
                out.push(a);
            }
        }
        Ok(out)
    }

    fn collect(&self, gm: &GridMeasure, out: &mut Vec<CellSet>) -> Result<()> {
        let n = gm.len();
        match self {
            Family::Intervals { points } | Family::IntervalUnions { points, .. } if gm.dim() != 1 => {
                let _ = points;
                return Err(Error::Unsupported("interval families need a 1D grid".into()));
            }
            Family::Intervals { points } => {
                let cuts = lattice_cuts(n, *points);
                for (i, &a) in cuts.iter().enumerate() {
                    for &b in &cuts[i + 1..] {
                        out.push(interval_set(n, a, b));
                    }
                }
            }
            Family::IntervalUnions { points, parts } => {
                let cuts = lattice_cuts(n, *points);
                let mut ivs = Vec::new();
                for (i, &a) in cuts.iter().enumerate() {
                    for &b in &cuts[i + 1..] {
                        ivs.push((a, b));
                    }
                }
                let mut stack: Vec<(usize, usize)> = Vec::new();
                union_rec(&ivs, 0, *parts, &mut stack, n, out);
            }
            Family::LevelSets { levels } => {
                let mut vals: Vec<f64> = (0..n).filter(|&i| gm.inside[i]).map(|i| gm.f_values[i]).collect();
                vals.sort_by(|a, b| a.total_cmp(b));
                for k in 1..=*levels {
                    let t = vals[((k * (vals.len() - 1)) / (*levels)).min(vals.len() - 1)];
                    out.push(CellSet {
                        name: format!("f<={t:.6}"),
                        mask: (0..n).map(|i| gm.inside[i] && gm.f_values[i] <= t).collect(),
                    });
                    out.push(CellSet {
                        name: format!("f>={t:.6}"),
                        mask: (0..n).map(|i| gm.inside[i] && gm.f_values[i] >= t).collect(),
                    });
                }
            }
            Family::Balls { centers, radii } => {
                let (lo, hi) = gm.space.bounding_box();
                let diam = gm.space.diameter();
                let axis = |k: usize, j: usize| lo[k] + (hi[k] - lo[k]) * (j as f64 + 0.5) / *centers as f64;
                let grid: Vec<Vec<f64>> = match gm.dim() {
                    1 => (0..*centers).map(|j| vec![axis(0, j)]).collect(),
                    _ => (0..*centers)
                        .flat_map(|a| (0..*centers).map(move |b| (a, b)))
                        .map(|(a, b)| vec![axis(0, a), axis(1, b)])
                        .collect(),
                };
                for c in grid {
                    for r in 1..=*radii {
                        let rad = 0.5 * diam * r as f64 / *radii as f64;
                        out.push(gm.set_where(format!("ball({c:?},{rad:.4})"), |x| crate::linalg::dist(x, &c) <= rad));
                    }
                }
            }
            Family::HalfSpaces { directions, offsets } => {
                let centers = gm.inside_centers();
                for k in 0..*directions {
                    let u = if gm.dim() == 1 {
                        vec![if k % 2 == 0 { 1.0 } else { -1.0 }]
                    } else {
                        let t = 2.0 * std::f64::consts::PI * k as f64 / *directions as f64;
                        vec![t.cos(), t.sin()]
                    };
                    let (mn, mx) = centers
                        .iter()
                        .map(|c| dot(c, &u))
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                    for j in 1..=*offsets {
                        let t = mn + (mx - mn) * j as f64 / (*offsets + 1) as f64;
                        out.push(gm.set_where(format!("half({u:?},{t:.4})"), |x| dot(x, &u) <= t));
                    }
                }
            }
            Family::Union(fs) => {
                for f in fs {
                    f.collect(gm, out)?;
                }
            }
        }
        Ok(())
    }
}

fn lattice_cuts(n: usize, points: usize) -> Vec<usize> {
    let points = points.max(2);
    let mut cuts: Vec<usize> = (0..points)
        .map(|k| ((k as f64) * n as f64 / (points - 1) as f64).round() as usize)
        .collect();
    cuts.dedup();
    cuts
}

fn interval_set(n: usize, a: usize, b: usize) -> CellSet {
    CellSet {
        name: format!("[{a},{b})"),
        mask: (0..n).map(|i| i >= a && i < b).collect(),
    }
}

fn union_rec(
    ivs: &[(usize, usize)],
    from: usize,
    parts: usize,
    stack: &mut Vec<(usize, usize)>,
    n: usize,
    out: &mut Vec<CellSet>,
) {
    if stack.len() >= 2 {
        let mut mask = vec![false; n];
        for &(a, b) in stack.iter() {
            mask[a..b].iter_mut().for_each(|m| *m = true);
        }
        let name = stack
            .iter()
            .map(|(a, b)| format!("[{a},{b})"))
            .collect::<Vec<_>>()
            .join("u");
        out.push(CellSet { name, mask });
    }
    if stack.len() == parts {
        return;
    }
    for (k, &(a, b)) in ivs.iter().enumerate().skip(from) {
        if stack.last().is_some_and(|&(_, e)| a <= e) {
            continue;
        }
        stack.push((a, b));
        union_rec(ivs, k + 1, parts, stack, n, out);
        stack.pop();
    }
}

/// Estimated restricted Cheeger constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheegerEstimate {
    /// Linear extrapolation of the per-ε infima to ε = 0, clamped at zero.
    pub value: f64,
    pub eps: Vec<f64>,
    pub per_eps: Vec<f64>,
    pub argmin: Vec<String>,
    /// Largest absolute residual of the linear fit.
    pub residual: f64,
    pub family: String,
    pub candidates: usize,
    pub method: &'static str,
}

impl CheegerEstimate {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epsilon", "inf_ratio", "argmin"])?;
        for ((e, r), a) in self.eps.iter().zip(&self.per_eps).zip(&self.argmin) {
            w.write_record([format!("{e:e}"), format!("{r:e}"), a.clone()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `{0.08, 0.04, 0.02, 0.01}·diam(K)`.
pub fn default_eps(space: &ParameterSpace) -> Vec<f64> {
    [0.08, 0.04, 0.02, 0.01].iter().map(|c| c * space.diameter()).collect()
}

/// `(μ(A_ε) − μ(A)) / (ε μ(A))` for every ε, from one distance transform.
pub fn surface_ratios(gm: &GridMeasure, a: &CellSet, eps: &[f64]) -> Vec<f64> {
    let dist = gm.distances_to(a);
    let mass = gm.measure(a);
    let tol = 1e-9 * gm.step.iter().cloned().fold(f64::INFINITY, f64::min);
    eps.iter()
        .map(|&e| {
            let grown: f64 = (0..gm.len())
                .filter(|&i| gm.inside[i] && !a.mask[i] && dist[i] <= e + tol)
                .map(|i| gm.weights[i])
                .sum();
            grown / (e * mass)
        })
        .collect()
}

/// Infimum of the surface ratio over `candidates ⊂ V` at each ε, then
/// extrapolated linearly to ε = 0.
pub fn cheeger_bruteforce(
    gm: &GridMeasure,
    v: &CellSet,
    candidates: &[CellSet],
    family: &str,
    eps: &[f64],
) -> Result<CheegerEstimate> {
    if eps.is_empty() {
        return Err(Error::Empty("epsilon sequence"));
    }
    if eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidParameter("epsilon values must be positive".into()));
    }
    let usable: Vec<&CellSet> = candidates
        .iter()
        .filter(|a| a.is_subset_of(v) && gm.measure(a) > 0.0)
        .collect();
    if usable.is_empty() {
        return Err(Error::Empty("candidate family"));
    }
    let ratios: Vec<Vec<f64>> = usable.par_iter().map(|a| surface_ratios(gm, a, eps)).collect();
    let mut per_eps = vec![f64::INFINITY; eps.len()];
    let mut argmin = vec![String::new(); eps.len()];
    for (a, r) in usable.iter().zip(&ratios) {
        for k in 0..eps.len() {
            if r[k] < per_eps[k] {
                per_eps[k] = r[k];
                argmin[k] = a.name.clone();
            }
        }
    }
    let (value, residual) = if eps.len() >= 2 {
        let (b, _, res) = fit_line(eps, &per_eps);
        (b.max(0.0), res)
    } else {
        (per_eps[0], 0.0)
    };
    Ok(CheegerEstimate {
        value,
        eps: eps.to_vec(),
        per_eps,
        argmin,
        residual,
        family: family.to_string(),
        candidates: usable.len(),
        method: "linear",
    })
}

/// Lower bound `e^{−2B}·2(vol K − vol V_ε)/(D·vol K)` at the given ε, with
/// `B` the oscillation of `f` on the grid.
pub fn positivity_bound(gm: &GridMeasure, v: &CellSet, eps: f64) -> f64 {
    let (lo, hi) = gm.f_range();
    let ve = gm.dilate(v, eps).count() as f64;
    let k = gm.n_inside() as f64;
    (-2.0 * (hi - lo)).exp() * 2.0 * (k - ve) / (gm.space.diameter() * k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub nu: f64,
    pub c1: CheegerEstimate,
    pub c2: CheegerEstimate,
    /// The sandwich holds at every ε for the per-ε infima.
    pub per_eps_holds: bool,
    /// `Ĉ₁ − e^{−2ν}Ĉ₂`.
    pub lower_margin: f64,
    /// `e^{2ν}Ĉ₂ − Ĉ₁`.
    pub upper_margin: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Checks `e^{−2ν}Ĉ_{f2}(V) ≤ Ĉ_{f1}(V) ≤ e^{2ν}Ĉ_{f2}(V)`.
pub fn stability_check(
    gm1: &GridMeasure,
    gm2: &GridMeasure,
    v: &CellSet,
    candidates: &[CellSet],
    eps: &[f64],
) -> Result<StabilityReport> {
    if !gm1.same_geometry(gm2) {
        return Err(Error::GridMismatch);
    }
    let nu = gm1
        .f_values
        .iter()
        .zip(&gm2.f_values)
        .zip(&gm1.inside)
        .filter(|(_, &k)| k)
        .map(|((a, b), _)| (a - b).abs())
        .fold(0.0, f64::max);
    let c1 = cheeger_bruteforce(gm1, v, candidates, "shared", eps)?;
    let c2 = cheeger_bruteforce(gm2, v, candidates, "shared", eps)?;
    let (lo, hi) = ((-2.0 * nu).exp(), (2.0 * nu).exp());
    let slack = 1e-12;
    let per_eps_holds = c1
        .per_eps
        .iter()
        .zip(&c2.per_eps)
        .all(|(&a, &b)| lo * b <= a * (1.0 + slack) && a <= hi * b * (1.0 + slack));
    let tolerance = c1.residual + hi * c2.residual;
    let lower_margin = c1.value - lo * c2.value;
    let upper_margin = hi * c2.value - c1.value;
    Ok(StabilityReport {
        nu,
        holds: per_eps_holds && lower_margin >= -tolerance && upper_margin >= -tolerance,
        per_eps_holds,
        lower_margin,
        upper_margin,
        tolerance,
        c1,
        c2,
    })
}

pub type FieldFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum Divergence {
    Closed(crate::objective::ScalarFn),
    FiniteDifference { h: f64 },
}

/// A vector field `φ` with its divergence and the admissible step `ε₀`.
#[derive(Clone)]
pub struct VectorField {
    pub phi: FieldFn,
    pub divergence: Divergence,
    pub step_bound: f64,
    pub space: ParameterSpace,
}

impl VectorField {
    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        (self.phi)(x)
    }

    pub fn div(&self, x: &[f64]) -> f64 {
        match &self.divergence {
            Divergence::Closed(f) => f(x),
            Divergence::FiniteDifference { h } => {
                let mut p = x.to_vec();
                let mut s = 0.0;
                for i in 0..x.len() {
                    p[i] = x[i] + h;
                    let a = (self.phi)(&p)[i];
                    p[i] = x[i] - h;
                    let b = (self.phi)(&p)[i];
                    p[i] = x[i];
                    s += (a - b) / (2.0 * h);
                }
                s
            }
        }
    }

    /// `‖φ(x)‖ ≤ 1` and `x − εφ(x) ∈ K` for `ε ∈ ε₀·{1, ½, ¼}`.
    pub fn check_at(&self, x: &[f64]) -> Result<()> {
        let p = self.value(x);
        let n = norm(&p);
        if !(n <= 1.0 + 1e-12) {
            return Err(Error::FieldViolation {
                point: x.to_vec(),
                reason: format!("|phi| = {n} exceeds 1"),
            });
        }
        for frac in [1.0, 0.5, 0.25] {
            let e = self.step_bound * frac;
            let y: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a - e * b).collect();
            if !self.space.contains_unchecked(&y) {
                return Err(Error::FieldViolation {
                    point: x.to_vec(),
                    reason: format!("x - {e}*phi(x) leaves the space"),
                });
            }
        }
        Ok(())
    }
}

/// `min_x ⟨φ(x), ξ∇f(x)⟩ − div φ(x)` over the samples, after checking the
/// field conditions at each of them.
pub fn vectorfield_lower_bound<G: Fn(&[f64]) -> Vec<f64> + Sync>(
    field: &VectorField,
    f_grad: G,
    xi: f64,
    samples: &[Vec<f64>],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("vector-field samples"));
    }
    samples
        .par_iter()
        .map(|x| {
            field.check_at(x)?;
            let g = f_grad(x);
            Ok(xi * dot(&field.value(x), &g) - field.div(x))
        })
        .collect::<Result<Vec<f64>>>()
        .map(|v| v.into_iter().fold(f64::INFINITY, f64::min))
}

/// Regularity constants for the vector-field constructions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothnessProfile {
    /// `G`: bound on `‖∇f‖`.
    pub g: f64,
    /// `L`: bound on the nuclear norm of `∇²f`.
    pub l: f64,
    /// `H`: Lipschitz constant of `∇²f` in nuclear norm.
    pub h: f64,
    /// Width of the boundary layer where `⟨x, ∇f(x)⟩ ≥ ‖x‖`.
    pub r0: f64,
}

impl SmoothnessProfile {
    /// Scans `K` for `G` and `L` (times `margin`); `h` and `r0` are supplied.
    pub fn estimate(
        f: &dyn Objective,
        space: &ParameterSpace,
        budget: usize,
        margin: f64,
        h: f64,
        r0: f64,
    ) -> Result<Self> {
        let mut g = 0.0f64;
        let mut l = 0.0f64;
        for p in crate::objective::scan_points(space, budget) {
            g = g.max(norm(
                &f.grad(&p)
                    .ok_or_else(|| Error::Unsupported("objective has no gradient".into()))?,
            ));
            let hs = f
                .hess(&p)
                .ok_or_else(|| Error::Unsupported("objective has no Hessian".into()))?;
            let sym = (&hs + hs.transpose()) * 0.5;
            l = l.max(sym.symmetric_eigenvalues().iter().map(|v| v.abs()).sum());
        }
        Ok(Self {
            g: g * margin,
            l: l * margin,
            h,
            r0,
        })
    }
}

fn h_div(space: &ParameterSpace) -> f64 {
    1e-4 * space.diameter()
}

/// `φ = ∇f / G` with divergence `tr(∇²f)/G`.
pub fn gradient_field(
    f: Arc<dyn Objective>,
    profile: &SmoothnessProfile,
    space: &ParameterSpace,
) -> Result<VectorField> {
    let probe = space.bounding_box().0;
    if f.grad(&probe).is_none() {
        return Err(Error::Unsupported("gradient field needs a gradient".into()));
    }
    let g = profile.g;
    let has_hess = f.hess(&probe).is_some();
    let fp = f.clone();
    let phi: FieldFn = Arc::new(move |x: &[f64]| fp.grad(x).expect("gradient").into_iter().map(|v| v / g).collect());
    let divergence = if has_hess {
        Divergence::Closed(Arc::new(move |x: &[f64]| f.hess(x).expect("hessian").trace() / g))
    } else {
        Divergence::FiniteDifference { h: h_div(space) }
    };
    Ok(VectorField {
        phi,
        divergence,
        step_bound: profile.r0,
        space: space.clone(),
    })
}

/// `Φ(A)`: same eigenvectors, eigenvalues mapped through the normal CDF.
pub fn matrix_phi(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::NotSymmetric(f64::INFINITY));
    }
    let asym = (a - a.transpose()).abs().max();
    if asym >= 1e-10 {
        return Err(Error::NotSymmetric(asym));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mapped = DMatrix::from_diagonal(&eig.eigenvalues.map(normal_cdf));
    Ok(&eig.eigenvectors * mapped * eig.eigenvectors.transpose())
}

/// `σ = 1/(2√(log(4L/√ε)))`.
pub fn saddle_sigma(l: f64, epsilon: f64) -> Result<f64> {
    let arg = 4.0 * l / epsilon.sqrt();
    if !(arg > 1.0) {
        return Err(Error::InvalidParameter(format!("need 4L/sqrt(eps) > 1, got {arg}")));
    }
    Ok(1.0 / (2.0 * arg.ln().sqrt()))
}

/// `φ(x) = (2√(G‖∇f‖)·I + Φ((−√ε I − ∇²f)/(σ√ε)))·∇f / ((2G+1)G)` with a
/// finite-difference divergence.
pub fn saddle_field(
    f: Arc<dyn Objective>,
    epsilon: f64,
    sigma: Option<f64>,
    profile: &SmoothnessProfile,
    space: &ParameterSpace,
) -> Result<VectorField> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    let probe = space.bounding_box().0;
    if f.hess(&probe).is_none() || f.grad(&probe).is_none() {
        return Err(Error::Unsupported("saddle field needs gradient and Hessian".into()));
    }
    let sigma = match sigma {
        Some(s) => s,
        None => saddle_sigma(profile.l, epsilon)?,
    };
    let g = profile.g;
    let se = epsilon.sqrt();
    let d = f.dim();
    let phi: FieldFn = Arc::new(move |x: &[f64]| {
        let grad = nalgebra::DVector::from_vec(f.grad(x).expect("gradient"));
        let hess = f.hess(x).expect("hessian");
        let hsym = (&hess + hess.transpose()) * 0.5;
        let arg = (DMatrix::identity(d, d) * (-se) - hsym) / (sigma * se);
        let a =
            matrix_phi(&arg).expect("symmetric argument") + DMatrix::identity(d, d) * (2.0 * (g * grad.norm()).sqrt());
        ((a * grad) / ((2.0 * g + 1.0) * g)).data.into()
    });
    let step_bound = match space {
        ParameterSpace::Ball { radius, .. } => profile.r0.min((radius - profile.r0) / ((2.0 * g + 1.0) * g.sqrt())),
        _ => profile.r0,
    };
    Ok(VectorField {
        phi,
        divergence: Divergence::FiniteDifference { h: h_div(space) },
        step_bound,
        space: space.clone(),
    })
}

/// `μ_{ξf}(K \ U)` for the ε-optimal set `U`.
pub fn convex_mass_ratio(gm: &GridMeasure, u: &CellSet) -> Result<f64> {
    let mu = gm.measure(u);
    if !(mu > 0.0) {
        return Err(Error::Empty("optimal set has zero measure"));
    }
    Ok((1.0 - mu).max(0.0))
}

/// Writes an estimate table to any writer as CSV-like text; used by examples.
pub fn describe(est: &CheegerEstimate, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "family {} ({} candidates)", est.family, est.candidates)?;
    for ((e, r), a) in est.eps.iter().zip(&est.per_eps).zip(&est.argmin) {
        writeln!(out, "  eps {e:.5}  inf {r:.5}  at {a}")?;
    }
    writeln!(out, "  extrapolated {:.5} (residual {:.2e})", est.value, est.residual)
}
