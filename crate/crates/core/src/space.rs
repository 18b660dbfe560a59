//! Compact parameter spaces: membership, uniform sampling and the
//! Gaussian stay-probability check on step sizes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::rng::{standard_normal_vec, SimRng};
use crate::stats::{Estimate, RunningMean};

/// A compact feasible region `K ⊂ R^d`. All variants are closed sets.
///
/// The annulus is always centered at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParameterSpace {
    Ball { center: Vec<f64>, radius: f64 },
    Annulus { r_in: f64, r_out: f64, dim: usize },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl ParameterSpace {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let s = ParameterSpace::Ball { center, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn unit_ball(dim: usize) -> Result<Self> {
        Self::ball(vec![0.0; dim], 1.0)
    }

    pub fn annulus(r_in: f64, r_out: f64, dim: usize) -> Result<Self> {
        let s = ParameterSpace::Annulus { r_in, r_out, dim };
        s.validate()?;
        Ok(s)
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let s = ParameterSpace::Box { lo, hi };
        s.validate()?;
        Ok(s)
    }

    /// Same box bounds in every coordinate.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Self::boxed(vec![lo; dim], vec![hi; dim])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match self {
            ParameterSpace::Ball { center, radius } => {
                if center.is_empty() {
                    return bad("ball dimension must be positive");
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return bad("ball radius must be positive");
                }
            }
            ParameterSpace::Annulus { r_in, r_out, dim } => {
                if *dim == 0 {
                    return bad("annulus dimension must be positive");
                }
                if !(*r_in > 0.0 && r_in < r_out && r_out.is_finite()) {
                    return bad("annulus needs 0 < r_in < r_out");
                }
            }
            ParameterSpace::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return bad("box bounds must be non-empty and of equal length");
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l < h) || !h.is_finite()) {
                    return bad("box needs lo[i] < hi[i]");
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ParameterSpace::Ball { center, .. } => center.len(),
            ParameterSpace::Annulus { dim, .. } => *dim,
            ParameterSpace::Box { lo, .. } => lo.len(),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Membership in the closed set `K`.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.check_dim(x)?;
        Ok(self.contains_unchecked(x))
    }

    /// Membership without the dimension check, for hot loops.
    pub fn contains_unchecked(&self, x: &[f64]) -> bool {
        match self {
            ParameterSpace::Ball { center, radius } => dist(x, center) <= *radius,
            ParameterSpace::Annulus { r_in, r_out, .. } => {
                let r = norm(x);
                r >= *r_in && r <= *r_out
            }
            ParameterSpace::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| v >= l && v <= h),
        }
    }

    /// Euclidean distance from `x` to `K` (zero inside).
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        match self {
            ParameterSpace::Ball { center, radius } => (dist(x, center) - radius).max(0.0),
            ParameterSpace::Annulus { r_in, r_out, .. } => {
                let r = norm(x);
                (r_in - r).max(r - r_out).max(0.0)
            }
            ParameterSpace::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| (l - v).max(v - h).max(0.0).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            ParameterSpace::Ball { radius, .. } => 2.0 * radius,
            ParameterSpace::Annulus { r_out, .. } => 2.0 * r_out,
            ParameterSpace::Box { lo, hi } => dist(lo, hi),
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ParameterSpace::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            ParameterSpace::Annulus { r_out, dim, .. } => (vec![-r_out; *dim], vec![*r_out; *dim]),
            ParameterSpace::Box { lo, hi } => (lo.clone(), hi.clone()),
        }
    }

    /// Uniform draw from `K`. Balls and annuli use an isotropic direction and
    /// an inverse-CDF radius, so no draws are rejected.
    pub fn sample_uniform(&self, rng: &mut SimRng) -> Vec<f64> {
        match self {
            ParameterSpace::Ball { center, radius } => {
                let d = center.len();
                let u: f64 = rng.random();
                let r = radius * u.powf(1.0 / d as f64);
                let mut x = random_direction(rng, d, r);
                for (xi, ci) in x.iter_mut().zip(center) {
                    *xi += ci;
                }
                if dist(&x, center) > *radius {
                    shrink_towards(&mut x, center, *radius);
                }
                x
            }
            ParameterSpace::Annulus { r_in, r_out, dim } => {
                let d = *dim as f64;
                let u: f64 = rng.random();
                let (a, b) = (r_in.powf(d), r_out.powf(d));
                let r = (a + u * (b - a)).powf(1.0 / d).clamp(*r_in, *r_out);
                let mut x = random_direction(rng, *dim, r);
                let n = norm(&x);
                if n > *r_out {
                    shrink_towards(&mut x, &vec![0.0; *dim], *r_out);
                } else if n < *r_in {
                    let s = r_in / n;
                    x.iter_mut().for_each(|v| *v *= s);
                    while norm(&x) < *r_in {
                        x.iter_mut().for_each(|v| *v *= 1.0 + f64::EPSILON);
                    }
                }
                x
            }
            ParameterSpace::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| l + rng.random::<f64>() * (h - l))
                .collect(),
        }
    }

    /// Monte-Carlo estimate of `P(y ∈ K)` for `y ~ N(x, 2hI)`.
    pub fn gaussian_stay_probability(&self, x: &[f64], h: f64, m: usize, rng: &mut SimRng) -> Result<Estimate> {
        if !self.contains(x)? {
            return Err(Error::OutsideSpace(x.to_vec()));
        }
        if !(h > 0.0) || m == 0 {
            return Err(Error::InvalidParameter(
                "stay probability needs h > 0 and m >= 1".into(),
            ));
        }
        let scale = (2.0 * h).sqrt();
        let mut acc = RunningMean::default();
        let mut y = vec![0.0; x.len()];
        for _ in 0..m {
            let w = standard_normal_vec(rng, x.len());
            for ((yi, xi), wi) in y.iter_mut().zip(x).zip(&w) {
                *yi = xi + scale * wi;
            }
            acc.push(if self.contains_unchecked(&y) { 1.0 } else { 0.0 });
        }
        Ok(acc.estimate())
    }

    /// Default step-size ceiling under which every point keeps at least a
    /// one-third chance of its Gaussian proposal staying in `K`.
    ///
    /// Balls and annuli use `1e-2 / d²`; a one-dimensional box uses
    /// `1e-2 · width²`. Boxes with `d ≥ 2` have corners where the stay
    /// probability tends to `2^-d < 1/3`, so no ceiling exists and `None` is
    /// returned.
    pub fn default_h_max(&self) -> Option<f64> {
        let d = self.dim() as f64;
        match self {
            ParameterSpace::Ball { .. } | ParameterSpace::Annulus { .. } => Some(1e-2 / (d * d)),
            ParameterSpace::Box { lo, hi } if lo.len() == 1 => Some(1e-2 * (hi[0] - lo[0]).powi(2)),
            ParameterSpace::Box { .. } => None,
        }
    }

    /// Lebesgue volume of `K`.
    pub fn volume(&self) -> f64 {
        match self {
            ParameterSpace::Ball { center, radius } => {
                unit_ball_volume(center.len()) * radius.powi(center.len() as i32)
            }
            ParameterSpace::Annulus { r_in, r_out, dim } => {
                unit_ball_volume(*dim) * (r_out.powi(*dim as i32) - r_in.powi(*dim as i32))
            }
            ParameterSpace::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| h - l).product(),
        }
    }
}

/// CDF of the radius `‖x - center‖` under the uniform law on a ball or annulus.
pub fn radial_cdf(space: &ParameterSpace, r: f64) -> f64 {
    match space {
        ParameterSpace::Ball { center, radius } => (r / radius).clamp(0.0, 1.0).powi(center.len() as i32),
        ParameterSpace::Annulus { r_in, r_out, dim } => {
            let d = *dim as i32;
            ((r.powi(d) - r_in.powi(d)) / (r_out.powi(d) - r_in.powi(d))).clamp(0.0, 1.0)
        }
        ParameterSpace::Box { .. } => f64::NAN,
    }
}

fn unit_ball_volume(d: usize) -> f64 {
    let d = d as f64;
    std::f64::consts::PI.powf(d / 2.0) / statrs::function::gamma::gamma(d / 2.0 + 1.0)
}

fn random_direction(rng: &mut SimRng, d: usize, r: f64) -> Vec<f64> {
    loop {
        let mut w = standard_normal_vec(rng, d);
        let n = norm(&w);
        if n > 1e-300 {
            w.iter_mut().for_each(|v| *v *= r / n);
            return w;
        }
    }
}

fn shrink_towards(x: &mut [f64], center: &[f64], radius: f64) {
    while dist(x, center) > radius {
        for (xi, ci) in x.iter_mut().zip(center) {
            *xi = ci + (*xi - ci) * (1.0 - f64::EPSILON);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use crate::stats::{ks_statistic, normal_cdf};
    use proptest::prelude::*;

    #[test]
    fn membership_examples() {
        let ball = ParameterSpace::unit_ball(3).unwrap();
        assert!(ball.contains(&[0.0, 0.0, 0.0]).unwrap());
        let ann = ParameterSpace::annulus(0.5, 1.0, 2).unwrap();
        assert!(!ann.contains(&[0.25, 0.0]).unwrap());
        assert!(ann.contains(&[0.75 / 2f64.sqrt(), 0.75 / 2f64.sqrt()]).unwrap());
        assert!(ann.contains(&[1.0, 0.0]).unwrap(), "boundary is inside");
        assert!(matches!(
            ann.contains(&[0.5]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn invalid_spaces_are_rejected() {
        assert!(ParameterSpace::ball(vec![0.0], 0.0).is_err());
        assert!(ParameterSpace::annulus(1.0, 0.5, 2).is_err());
        assert!(ParameterSpace::boxed(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn box_uniform_mean() {
        let b = ParameterSpace::cube(0.0, 1.0, 1).unwrap();
        let mut rng = rng_for(1, 0);
        let n = 100_000;
        let est = Estimate::from_samples((0..n).map(|_| b.sample_uniform(&mut rng)[0]));
        let sigma = (1.0f64 / 12.0).sqrt();
        assert!((est.mean - 0.5).abs() < 3.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn annulus_area_ratio() {
        let ann = ParameterSpace::annulus(0.5, 1.0, 2).unwrap();
        let mut rng = rng_for(2, 0);
        let n = 100_000;
        let mut inner = 0usize;
        for _ in 0..n {
            let x = ann.sample_uniform(&mut rng);
            let r = norm(&x);
            assert!((0.5..=1.0).contains(&r));
            if r <= 0.75 {
                inner += 1;
            }
        }
        let p = (0.75f64.powi(2) - 0.25) / (1.0 - 0.25);
        assert!((p - 0.416_666_666_666_666_7).abs() < 1e-15);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((inner as f64 / n as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn radial_law_matches_power_cdf() {
        for space in [
            ParameterSpace::unit_ball(3).unwrap(),
            ParameterSpace::annulus(0.5, 1.0, 5).unwrap(),
            ParameterSpace::ball(vec![1.0, -2.0], 0.5).unwrap(),
        ] {
            let mut rng = rng_for(3, 0);
            let center = match &space {
                ParameterSpace::Ball { center, .. } => center.clone(),
                _ => vec![0.0; space.dim()],
            };
            let radii: Vec<f64> = (0..100_000)
                .map(|_| dist(&space.sample_uniform(&mut rng), &center))
                .collect();
            let ks = ks_statistic(&radii, |r| radial_cdf(&space, r));
            assert!(ks < 0.02, "{space:?}: ks = {ks}");
        }
    }

    #[test]
    fn stay_probability_examples() {
        let mut rng = rng_for(4, 0);
        let ball = ParameterSpace::unit_ball(2).unwrap();
        let p = ball
            .gaussian_stay_probability(&[0.0, 0.0], 1e-8, 1000, &mut rng)
            .unwrap();
        assert_eq!(p.mean, 1.0);

        let unit = ParameterSpace::cube(0.0, 1.0, 1).unwrap();
        let p = unit.gaussian_stay_probability(&[0.0], 1e-6, 100_000, &mut rng).unwrap();
        assert!((p.mean - 0.5).abs() < 3.0 * p.se.max(1.0 / 2000.0));

        // 1 - 2 Φ(-0.5 / sqrt(2h)) with h = 0.005
        let exact = 1.0 - 2.0 * normal_cdf(-5.0);
        assert!((exact - 0.999_999_426_6).abs() < 1e-9);
        let p = unit
            .gaussian_stay_probability(&[0.5], 0.005, 100_000, &mut rng)
            .unwrap();
        assert!((p.mean - exact).abs() < 1e-4);
        assert!(p.se <= 1.0 / (2.0 * (100_000f64).sqrt()));

        assert!(matches!(
            unit.gaussian_stay_probability(&[2.0], 0.1, 10, &mut rng),
            Err(Error::OutsideSpace(_))
        ));
    }

    #[test]
    fn default_h_max_keeps_one_third_inside() {
        // worst cases: boundary points of the ball, both radii of the annulus
        for d in [1usize, 2, 4, 8, 16] {
            let mut rng = rng_for(5, d as u64);
            let ball = ParameterSpace::unit_ball(d).unwrap();
            let ann = ParameterSpace::annulus(0.5, 1.0, d).unwrap();
            let mut e = vec![0.0; d];
            e[0] = 1.0;
            let mut inner = vec![0.0; d];
            inner[0] = 0.5;
            for (space, x) in [(&ball, &e), (&ann, &e), (&ann, &inner)] {
                let h = space.default_h_max().unwrap();
                let p = space.gaussian_stay_probability(x, h, 100_000, &mut rng).unwrap();
                assert!(p.mean >= 1.0 / 3.0, "d={d} {space:?}: {}", p.mean);
            }
        }
        assert!(ParameterSpace::cube(0.0, 1.0, 2).unwrap().default_h_max().is_none());
    }

    proptest! {
        #[test]
        fn samples_are_members(seed in any::<u64>(), d in 1usize..6, kind in 0u8..3) {
            let space = match kind {
                0 => ParameterSpace::unit_ball(d).unwrap(),
                1 => ParameterSpace::annulus(0.5, 1.0, d).unwrap(),
                _ => ParameterSpace::cube(-1.0, 2.0, d).unwrap(),
            };
            let mut rng = rng_for(seed, 0);
            for _ in 0..200 {
                let x = space.sample_uniform(&mut rng);
                prop_assert!(space.contains(&x).unwrap());
                prop_assert_eq!(space.distance_to(&x), 0.0);
            }
        }
    }
}
