use serde::{Deserialize, Serialize};

use super::ccg::{hcat, Ccg};
use super::norm::{Norm, NormGroup};
use crate::error::SetError;
use crate::numeric::{Matrix, Vector};
use crate::stats::chi2_quantile;

/// `c + G_b β + G_g ξ` with `‖β‖_∞ ≤ 1` and `ξ ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticZonotope {
    #[serde(with = "crate::numeric::serde_vector")]
    pub center: Vector,
    #[serde(with = "crate::numeric::serde_matrix")]
    pub bounded_generators: Matrix,
    #[serde(with = "crate::numeric::serde_matrix")]
    pub gaussian_generators: Matrix,
}

impl ProbabilisticZonotope {
    pub fn new(center: Vector, bounded: Matrix, gaussian: Matrix) -> Result<Self, SetError> {
        let n = center.len();
        for (ctx, m) in [("bounded generators", &bounded), ("gaussian generators", &gaussian)] {
            if m.nrows() != n && m.ncols() > 0 {
                return Err(SetError::DimensionMismatch { context: ctx, expected: n, found: m.nrows() });
            }
        }
        let fix = |m: Matrix| if m.ncols() == 0 { Matrix::zeros(n, 0) } else { m };
        let z = ProbabilisticZonotope {
            center,
            bounded_generators: fix(bounded),
            gaussian_generators: fix(gaussian),
        };
        if z.center.iter().chain(z.bounded_generators.iter()).chain(z.gaussian_generators.iter()).any(|v| !v.is_finite()) {
            return Err(SetError::NonFinite);
        }
        Ok(z)
    }

    /// The `(1 − alpha)` confidence set: bounded generators as ∞ segments
    /// and the Gaussian block scaled by `√χ²_{γ_g, 1−α}` in one 2-norm group.
    pub fn truncate(&self, alpha: f64) -> Result<Ccg, SetError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(SetError::Unsupported(format!("alpha {alpha} not in (0, 1)")));
        }
        let gb = self.bounded_generators.ncols();
        let gg = self.gaussian_generators.ncols();
        let rho = if gg > 0 {
            chi2_quantile(gg, 1.0 - alpha).map_err(|e| SetError::Unsupported(e.to_string()))?.sqrt()
        } else {
            0.0
        };
        let scaled = &self.gaussian_generators * rho;
        let g = hcat(&[&self.bounded_generators, &scaled]);
        let mut groups: Vec<NormGroup> = (0..gb).map(|i| NormGroup::singleton(i, Norm::Inf)).collect();
        if gg > 0 {
            groups.push(NormGroup::range(gb, gg, Norm::Two));
        }
        Ccg::validated(self.center.clone(), g, groups, None)
    }
}

/// Convenience wrapper for [`ProbabilisticZonotope::truncate`].
pub fn probzono_truncate(z: &ProbabilisticZonotope, alpha: f64) -> Result<Ccg, SetError> {
    z.truncate(alpha)
}
