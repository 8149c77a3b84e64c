//! Highest-density regions of scalar densities.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::gamma::normal_cdf;
use crate::error::StatsError;

/// Default grid resolution.
pub const DEFAULT_GRID: usize = 20_001;
/// Grid half-width in standard deviations.
const TAIL_SIGMAS: f64 = 8.0;

/// Zero-mean scalar densities used for the noise models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Density1D {
    Gaussian { sigma: f64 },
    Uniform { a: f64 },
    GaussianMixture { weights: Vec<f64>, means: Vec<f64>, sigmas: Vec<f64> },
}

fn gauss_pdf(x: f64, mu: f64, s: f64) -> f64 {
    let z = (x - mu) / s;
    (-0.5 * z * z).exp() / (s * (2.0 * PI).sqrt())
}

impl Density1D {
    /// Two equal components at `±mu` with common `sigma`.
    pub fn symmetric_mixture(mu: f64, sigma: f64) -> Self {
        Density1D::GaussianMixture { weights: vec![0.5, 0.5], means: vec![-mu, mu], sigmas: vec![sigma, sigma] }
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        let bad = |m: &str| Err(StatsError::InvalidArgument(m.into()));
        match self {
            Density1D::Gaussian { sigma } if !(*sigma > 0.0 && sigma.is_finite()) => bad("sigma must be positive"),
            Density1D::Uniform { a } if !(*a > 0.0 && a.is_finite()) => bad("a must be positive"),
            Density1D::GaussianMixture { weights, means, sigmas } => {
                if weights.is_empty() || weights.len() != means.len() || weights.len() != sigmas.len() {
                    return bad("mixture arrays must be non-empty and of equal length");
                }
                if weights.iter().any(|w| !(*w > 0.0)) || sigmas.iter().any(|s| !(*s > 0.0)) {
                    return bad("mixture weights and sigmas must be positive");
                }
                if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return bad("mixture weights must sum to 1");
                }
                if means.iter().any(|m| !m.is_finite()) {
                    return bad("mixture means must be finite");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Density1D::Gaussian { sigma } => gauss_pdf(x, 0.0, *sigma),
            Density1D::Uniform { a } => {
                if x.abs() <= *a {
                    0.5 / a
                } else {
                    0.0
                }
            }
            Density1D::GaussianMixture { weights, means, sigmas } => {
                (0..weights.len()).map(|k| weights[k] * gauss_pdf(x, means[k], sigmas[k])).sum()
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Density1D::Gaussian { sigma } => normal_cdf(x / sigma),
            Density1D::Uniform { a } => ((x + a) / (2.0 * a)).clamp(0.0, 1.0),
            Density1D::GaussianMixture { weights, means, sigmas } => {
                (0..weights.len()).map(|k| weights[k] * normal_cdf((x - means[k]) / sigmas[k])).sum()
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Density1D::GaussianMixture { weights, means, .. } => weights.iter().zip(means).map(|(w, m)| w * m).sum(),
            _ => 0.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Density1D::Gaussian { sigma } => sigma * sigma,
            Density1D::Uniform { a } => a * a / 3.0,
            Density1D::GaussianMixture { weights, means, sigmas } => {
                let mu = self.mean();
                (0..weights.len())
                    .map(|k| weights[k] * (sigmas[k] * sigmas[k] + (means[k] - mu).powi(2)))
                    .sum()
            }
        }
    }

    /// Interval carrying all but a negligible tail of the mass.
    pub fn grid_range(&self) -> (f64, f64) {
        match self {
            Density1D::Gaussian { sigma } => (-TAIL_SIGMAS * sigma, TAIL_SIGMAS * sigma),
            Density1D::Uniform { a } => (-a, *a),
            Density1D::GaussianMixture { means, sigmas, .. } => {
                let lo = means.iter().zip(sigmas).map(|(m, s)| m - TAIL_SIGMAS * s).fold(f64::INFINITY, f64::min);
                let hi = means.iter().zip(sigmas).map(|(m, s)| m + TAIL_SIGMAS * s).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        }
    }
}

/// Super-level set `{f ≥ τ}` with its probability mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdrRegion {
    pub intervals: Vec<(f64, f64)>,
    pub threshold: f64,
    pub coverage: f64,
}

impl HdrRegion {
    /// Smallest interval containing every component.
    pub fn hull(&self) -> (f64, f64) {
        let lo = self.intervals.first().map_or(0.0, |i| i.0);
        let hi = self.intervals.last().map_or(0.0, |i| i.1);
        (lo, hi)
    }

    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= x && x <= b)
    }
}

fn refine_crossing(f: &Density1D, tau: f64, mut below: f64, mut above: f64) -> f64 {
    for _ in 0..80 {
        let mid = 0.5 * (below + above);
        if f.pdf(mid) >= tau {
            above = mid;
        } else {
            below = mid;
        }
    }
    above
}

fn super_level(f: &Density1D, xs: &[f64], fx: &[f64], tau: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    for i in 0..xs.len() {
        let inside = fx[i] >= tau;
        match (inside, start) {
            (true, None) => {
                start = Some(if i == 0 { xs[0] } else { refine_crossing(f, tau, xs[i - 1], xs[i]) });
            }
            (false, Some(s)) => {
                out.push((s, refine_crossing(f, tau, xs[i], xs[i - 1])));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, *xs.last().unwrap()));
    }
    out
}

fn mass(f: &Density1D, intervals: &[(f64, f64)]) -> f64 {
    intervals.iter().map(|&(a, b)| f.cdf(b) - f.cdf(a)).sum()
}

/// Highest-density region at level `1 − alpha`.
///
/// Super-level components are located on a uniform grid, their endpoints
/// refined by bisection on the density, and their mass taken from the exact
/// CDF. The threshold is the largest `τ` whose region still has coverage
/// `≥ 1 − alpha`.
pub fn hdr_1d(f: &Density1D, alpha: f64, grid: usize) -> Result<HdrRegion, StatsError> {
    f.validate()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidArgument(format!("alpha {alpha} not in (0, 1)")));
    }
    if grid < 3 {
        return Err(StatsError::GridTooCoarse);
    }
    let (lo, hi) = f.grid_range();
    let step = (hi - lo) / (grid - 1) as f64;
    let xs: Vec<f64> = (0..grid).map(|i| if i + 1 == grid { hi } else { lo + step * i as f64 }).collect();
    let fx: Vec<f64> = xs.iter().map(|&x| f.pdf(x)).collect();
    let target = 1.0 - alpha;

    let fmax = fx.iter().copied().fold(0.0, f64::max);
    let full = super_level(f, &xs, &fx, 0.0);
    if mass(f, &full) < target {
        return Err(StatsError::GridTooCoarse);
    }
    let (mut t_lo, mut t_hi) = (0.0, fmax);
    if mass(f, &super_level(f, &xs, &fx, fmax)) >= target {
        t_lo = fmax;
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (t_lo + t_hi);
            if mass(f, &super_level(f, &xs, &fx, mid)) >= target {
                t_lo = mid;
            } else {
                t_hi = mid;
            }
            if t_hi - t_lo <= 1e-12 * fmax {
                break;
            }
        }
    }
    let intervals = super_level(f, &xs, &fx, t_lo);
    let coverage = mass(f, &intervals);
    Ok(HdrRegion { intervals, threshold: t_lo, coverage })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_hdr_is_central_interval() {
        let r = hdr_1d(&Density1D::Gaussian { sigma: 1.0 }, 0.05, DEFAULT_GRID).unwrap();
        assert_eq!(r.intervals.len(), 1);
        assert!((r.intervals[0].1 - 1.959_964).abs() < 1e-5);
        assert!((r.intervals[0].0 + 1.959_964).abs() < 1e-5);
        assert!(r.coverage >= 0.95 - 1e-9);
    }

    #[test]
    fn uniform_hdr_is_support() {
        let r = hdr_1d(&Density1D::Uniform { a: 1.0 }, 0.2, DEFAULT_GRID).unwrap();
        assert_eq!(r.intervals, vec![(-1.0, 1.0)]);
    }

    #[test]
    fn mixture_hdr_splits() {
        let f = Density1D::symmetric_mixture(0.15, 0.05);
        let r = hdr_1d(&f, 0.05, DEFAULT_GRID).unwrap();
        assert_eq!(r.intervals.len(), 2);
        assert!(r.intervals[0].1 < 0.0 && r.intervals[1].0 > 0.0);
        let (a, b) = r.hull();
        assert!(r.total_length() < b - a);
        assert!((f.variance() - 0.025).abs() < 1e-15);
    }

    #[test]
    fn bad_inputs() {
        assert!(hdr_1d(&Density1D::Gaussian { sigma: -1.0 }, 0.05, 100).is_err());
        assert!(hdr_1d(&Density1D::Gaussian { sigma: 1.0 }, 1.5, 100).is_err());
        let bad = Density1D::GaussianMixture { weights: vec![0.3, 0.3], means: vec![0.0, 1.0], sigmas: vec![1.0, 1.0] };
        assert!(bad.validate().is_err());
    }
}
