use rand::Rng;

use super::ccg::Ccg;
use super::norm::Norm;
use super::program::{gauge_point, LocalGroup};
use crate::error::SetError;
use crate::numeric::Vector;
use crate::stats::standard_normal;

/// Draws admissible coefficient vectors of a [`Ccg`].
///
/// Each group is sampled uniformly in its ball. Constrained components are
/// then projected onto `Aβ = b` and, when the projection leaves the balls,
/// pulled back towards a strictly feasible point along the segment.
#[derive(Debug, Clone)]
pub struct CoefficientSampler<'a> {
    set: &'a Ccg,
    feasible: Vector,
    two_radius: f64,
}

fn group_gauge(groups: &[LocalGroup], beta: &[f64], two_radius: f64) -> f64 {
    groups
        .iter()
        .map(|g| {
            let v = g.p.eval(g.idx.iter().map(|&i| beta[i]));
            if g.p == Norm::Two {
                v / two_radius
            } else {
                v
            }
        })
        .fold(0.0, f64::max)
}

impl Ccg {
    pub fn coefficient_sampler(&self) -> Result<CoefficientSampler<'_>, SetError> {
        let st = self.structure();
        if !st.consistent {
            return Err(SetError::Infeasible);
        }
        let mut feasible = Vector::zeros(self.num_generators());
        for comp in &st.components {
            if let Some(red) = &comp.reduction {
                let (t, beta) = gauge_point(&comp.groups, red)?;
                if t > 1.0 + super::NONEMPTY_TOL {
                    return Err(SetError::Infeasible);
                }
                for (l, &i) in comp.coefs.iter().enumerate() {
                    feasible[i] = beta[l];
                }
            }
        }
        Ok(CoefficientSampler { set: self, feasible, two_radius: 1.0 })
    }
}

impl CoefficientSampler<'_> {
    /// Radius of the 2-norm groups (at least 1), for untruncated Gaussian
    /// coefficients restricted to a confidence ball.
    pub fn with_two_radius(mut self, r: f64) -> Self {
        self.two_radius = r.max(1.0);
        self
    }

    pub fn feasible_point(&self) -> &Vector {
        &self.feasible
    }

    /// Makes a candidate admissible on every constrained component; free
    /// coefficients are returned unchanged.
    pub fn admissible(&self, mut beta: Vector) -> Vector {
        for comp in &self.set.structure().components {
            let Some(red) = &comp.reduction else { continue };
            let local = Vector::from_iterator(comp.coefs.len(), comp.coefs.iter().map(|&i| beta[i]));
            let off = &local - &red.particular;
            let proj = &red.particular + &red.null * red.null.tr_mul(&off);
            let f = Vector::from_iterator(comp.coefs.len(), comp.coefs.iter().map(|&i| self.feasible[i]));
            let at = |s: f64| &f + (&proj - &f) * s;
            let chosen = if group_gauge(&comp.groups, proj.as_slice(), self.two_radius) <= 1.0 {
                proj.clone()
            } else {
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if group_gauge(&comp.groups, at(mid).as_slice(), self.two_radius) <= 1.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                at(lo)
            };
            for (l, &i) in comp.coefs.iter().enumerate() {
                beta[i] = chosen[l];
            }
        }
        beta
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let mut beta = Vector::zeros(self.set.num_generators());
        for g in self.set.groups() {
            let s = g.len();
            match g.p {
                Norm::Inf => {
                    for &i in &g.indices {
                        beta[i] = rng.random_range(-1.0..=1.0);
                    }
                }
                Norm::Two => {
                    let dir: Vec<f64> = (0..s).map(|_| standard_normal(rng)).collect();
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                    let r = self.two_radius * rng.random::<f64>().powf(1.0 / s as f64);
                    for (k, &i) in g.indices.iter().enumerate() {
                        beta[i] = r * dir[k] / norm;
                    }
                }
                Norm::One => {
                    let e: Vec<f64> = (0..=s).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                    let total: f64 = e.iter().sum();
                    for (k, &i) in g.indices.iter().enumerate() {
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        beta[i] = sign * e[k] / total;
                    }
                }
            }
        }
        self.admissible(beta)
    }

    /// Coefficients on the ball boundaries for one sign pattern: ±1 on ∞
    /// groups, `±ρ/√s` on 2-groups and `±1/s` on 1-groups.
    pub fn corner(&self, signs: &[bool]) -> Vector {
        let mut beta = Vector::zeros(self.set.num_generators());
        for g in self.set.groups() {
            let scale = match g.p {
                Norm::Inf => 1.0,
                Norm::Two => self.two_radius / (g.len() as f64).sqrt(),
                Norm::One => 1.0 / g.len() as f64,
            };
            for &i in &g.indices {
                beta[i] = if signs[i] { scale } else { -scale };
            }
        }
        self.admissible(beta)
    }

    /// `c + Gβ`.
    pub fn point(&self, beta: &Vector) -> Vector {
        self.set.center() + self.set.generators() * beta
    }
}
