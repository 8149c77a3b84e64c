//! Chi-squared quantiles, highest-density regions, the box-versus-ball
//! volume diagnostic and enclosing ellipsoids.

mod gamma;
mod hdr;
mod mvee;
mod sampling;

pub use gamma::{chi2_cdf, chi2_pdf, chi2_quantile, erf, gamma_p, gamma_q, ln_gamma, normal_cdf, normal_quantile};
pub use hdr::{hdr_1d, Density1D, HdrRegion, DEFAULT_GRID};
pub use mvee::{mvee, Ellipsoid, MVEE_EPS, MVEE_MAX_ITERS};
pub use sampling::standard_normal;

use crate::error::StatsError;

/// Volume of the bounding box `[−1, 1]^q` over that of the unit ball: `2^q / V_q`.
pub fn volume_inflation_ratio(q: usize) -> Result<f64, StatsError> {
    if q == 0 {
        return Err(StatsError::InvalidArgument("q must be at least 1".into()));
    }
    let q = q as f64;
    let ln_vq = 0.5 * q * std::f64::consts::PI.ln() - ln_gamma(0.5 * q + 1.0);
    Ok((q * 2f64.ln() - ln_vq).exp())
}

/// Radius of the `(1 − alpha)` Frobenius ball of `q` i.i.d. `N(0, σ²)` entries.
pub fn gaussian_frobenius_hdr(sigma: f64, q: usize, alpha: f64) -> Result<f64, StatsError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(StatsError::InvalidArgument("sigma must be non-negative".into()));
    }
    Ok(sigma * chi2_quantile(q, 1.0 - alpha)?.sqrt())
}
