//! Ellipsoids and the minimum-volume enclosing ellipsoid of a point cloud.

use nalgebra::linalg::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{SetError, StatsError};
use crate::numeric::{numerical_rank, psd_factor, Matrix, Vector};
use crate::sets::Ccg;

pub const MVEE_EPS: f64 = 1e-7;
pub const MVEE_MAX_ITERS: usize = 100_000;

/// `{x : (x − c)ᵀ Q⁻¹ (x − c) ≤ 1}` with symmetric positive definite `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    #[serde(with = "crate::numeric::serde_vector")]
    pub center: Vector,
    #[serde(with = "crate::numeric::serde_matrix")]
    pub shape: Matrix,
}

impl Ellipsoid {
    pub fn new(center: Vector, shape: Matrix) -> Result<Self, StatsError> {
        let n = center.len();
        if shape.shape() != (n, n) {
            return Err(StatsError::InvalidArgument("shape must be n × n".into()));
        }
        let scale = shape.amax().max(1e-300);
        if (&shape - shape.transpose()).amax() > 1e-10 * scale {
            return Err(StatsError::InvalidArgument("shape must be symmetric".into()));
        }
        if Cholesky::new(shape.clone()).is_none() {
            return Err(StatsError::InvalidArgument("shape must be positive definite".into()));
        }
        Ok(Ellipsoid { center, shape })
    }

    /// `(x − c)ᵀ Q⁻¹ (x − c)`.
    pub fn value(&self, x: &Vector) -> f64 {
        let d = x - &self.center;
        let ch = Cholesky::new(self.shape.clone()).expect("validated positive definite");
        d.dot(&ch.solve(&d))
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.value(x) <= 1.0 + tol
    }

    /// Support function `lᵀc + √(lᵀQl)`.
    pub fn support(&self, l: &Vector) -> f64 {
        l.dot(&self.center) + l.dot(&(&self.shape * l)).max(0.0).sqrt()
    }

    /// Same set as a single 2-norm generator group.
    pub fn to_ccg(&self) -> Result<Ccg, SetError> {
        Ccg::ellipsoid(self.center.clone(), psd_factor(&self.shape))
    }
}

fn degenerate(points: &[Vector], dim: usize) -> Option<StatsError> {
    if points.len() < dim + 1 {
        return Some(StatsError::DegenerateCloud { dim, rank: points.len().saturating_sub(1) });
    }
    let p0 = &points[0];
    let diffs = Matrix::from_fn(dim, points.len() - 1, |i, j| points[j + 1][i] - p0[i]);
    let rank = numerical_rank(&diffs);
    (rank < dim).then_some(StatsError::DegenerateCloud { dim, rank })
}

/// Minimum-volume enclosing ellipsoid (Khachiyan iteration with away steps).
///
/// Stops at `(1 + eps)` approximate optimality, then rescales so the
/// outermost point lies exactly on the boundary: every point is contained.
pub fn mvee(points: &[Vector], eps: f64) -> Result<Ellipsoid, StatsError> {
    let dim = points.first().map_or(0, |p| p.len());
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(StatsError::InvalidArgument("points must share a positive dimension".into()));
    }
    if !(eps > 0.0) {
        return Err(StatsError::InvalidArgument("eps must be positive".into()));
    }
    if let Some(e) = degenerate(points, dim) {
        return Err(e);
    }
    if dim == 1 {
        let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let r = 0.5 * (hi - lo);
        return Ellipsoid::new(Vector::from_element(1, 0.5 * (lo + hi)), Matrix::from_element(1, 1, r * r));
    }

    let n = points.len();
    let d1 = (dim + 1) as f64;
    let lifted: Vec<Vector> = points.iter().map(|p| p.clone().insert_row(dim, 1.0)).collect();
    let mut u = vec![1.0 / n as f64; n];
    for _ in 0..MVEE_MAX_ITERS {
        let mut x = Matrix::zeros(dim + 1, dim + 1);
        for (q, &w) in lifted.iter().zip(&u) {
            if w > 0.0 {
                x.ger(w, q, q, 1.0);
            }
        }
        let Some(ch) = Cholesky::new(x) else { break };
        let g: Vec<f64> = lifted.iter().map(|q| q.dot(&ch.solve(q))).collect();
        let (j, gmax) = g.iter().copied().enumerate().fold((0, f64::MIN), |a, (i, v)| if v > a.1 { (i, v) } else { a });
        let (k, gmin) = g
            .iter()
            .copied()
            .enumerate()
            .filter(|&(i, _)| u[i] > 0.0)
            .fold((0, f64::MAX), |a, (i, v)| if v < a.1 { (i, v) } else { a });
        let up = gmax - d1;
        let down = d1 - gmin;
        if up <= eps * d1 && down <= eps * d1 {
            break;
        }
        if up >= down {
            let beta = up / (d1 * (gmax - 1.0));
            u.iter_mut().for_each(|w| *w *= 1.0 - beta);
            u[j] += beta;
        } else {
            let beta = (down / (d1 * (gmin - 1.0))).min(u[k] / (1.0 - u[k]));
            u.iter_mut().for_each(|w| *w *= 1.0 + beta);
            u[k] -= beta;
            if u[k] < 1e-300 {
                u[k] = 0.0;
            }
        }
    }

    let mut c = Vector::zeros(dim);
    for (p, &w) in points.iter().zip(&u) {
        c += p * w;
    }
    let mut s = Matrix::zeros(dim, dim);
    for (p, &w) in points.iter().zip(&u) {
        let d = p - &c;
        s.ger(w, &d, &d, 1.0);
    }
    let mut shape = s * dim as f64;
    shape = (&shape + shape.transpose()) * 0.5;
    let ell = Ellipsoid::new(c, shape)?;
    let worst = points.iter().map(|p| ell.value(p)).fold(0.0, f64::max);
    Ellipsoid::new(ell.center, ell.shape * worst)
}
