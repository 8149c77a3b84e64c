use serde::{Deserialize, Serialize};

use super::ccg::Ccg;
use super::norm::{Norm, NormGroup};
use crate::error::SetError;
use crate::numeric::{Matrix, Vector};

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBox {
    #[serde(with = "crate::numeric::serde_vector")]
    pub lo: Vector,
    #[serde(with = "crate::numeric::serde_vector")]
    pub hi: Vector,
}

impl IntervalBox {
    pub fn new(lo: Vector, hi: Vector) -> Result<Self, SetError> {
        if lo.len() != hi.len() {
            return Err(SetError::DimensionMismatch {
                context: "interval bounds",
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.iter().chain(hi.iter()).any(|v| !v.is_finite()) {
            return Err(SetError::NonFinite);
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(SetError::InvalidGroups("interval with lo > hi".into()));
        }
        Ok(IntervalBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn widths(&self) -> Vector {
        &self.hi - &self.lo
    }

    /// Product of the side lengths.
    pub fn volume(&self) -> f64 {
        self.widths().iter().product()
    }

    pub fn contains_box(&self, other: &IntervalBox, tol: f64) -> bool {
        (0..self.dim()).all(|i| self.lo[i] <= other.lo[i] + tol && other.hi[i] <= self.hi[i] + tol)
    }

    pub fn contains_point(&self, x: &Vector, tol: f64) -> bool {
        (0..self.dim()).all(|i| self.lo[i] - tol <= x[i] && x[i] <= self.hi[i] + tol)
    }

    /// Box as a zonotope with one ∞ generator per non-degenerate axis.
    pub fn to_ccg(&self) -> Ccg {
        let n = self.dim();
        let center = (&self.lo + &self.hi) * 0.5;
        let half = self.widths() * 0.5;
        let axes: Vec<usize> = (0..n).filter(|&i| half[i] > 0.0).collect();
        let mut g = Matrix::zeros(n, axes.len());
        for (c, &i) in axes.iter().enumerate() {
            g[(i, c)] = half[i];
        }
        let groups = (0..axes.len()).map(|i| NormGroup::singleton(i, Norm::Inf)).collect();
        Ccg::from_parts(center, g, groups, None)
    }
}
