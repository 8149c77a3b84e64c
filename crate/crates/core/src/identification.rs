//! Data equation `X₊ = ΘM + W` and data-consistent parameter sets.
//!
//! Every parameter set is a [`Cmcg`] of shape `(n, n+m)` stored over
//! `vec(Θ)` (column-major). Noise sets are CCGs over `vec(W)`, `W ∈ ℝ^{n×T}`.

use nalgebra::linalg::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{IdentError, SetError};
use crate::numeric::{kernel_basis, kron, pseudoinverse_full_row_rank, row_space_projector, unvec, vec_of, Matrix, Vector};
use crate::sets::{Ccg, Cmcg, Constraint, Norm, NormGroup};
use crate::stats::{chi2_quantile, Ellipsoid};

/// States `x₀..x_T` and inputs `u₀..u_{T−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryData", into = "TrajectoryData")]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryData {
    states: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
}

impl TryFrom<TrajectoryData> for Trajectory {
    type Error = IdentError;

    fn try_from(d: TrajectoryData) -> Result<Self, IdentError> {
        Trajectory::new(
            d.states.into_iter().map(Vector::from_vec).collect(),
            d.inputs.into_iter().map(Vector::from_vec).collect(),
        )
    }
}

impl From<Trajectory> for TrajectoryData {
    fn from(t: Trajectory) -> Self {
        let rows = |v: Vec<Vector>| v.into_iter().map(|x| x.iter().copied().collect()).collect();
        TrajectoryData { states: rows(t.states), inputs: rows(t.inputs) }
    }
}

impl Trajectory {
    pub fn new(states: Vec<Vector>, inputs: Vec<Vector>) -> Result<Self, IdentError> {
        let bad = |m: String| Err(IdentError::MalformedTrajectory(m));
        if states.len() != inputs.len() + 1 {
            return bad(format!("{} states but {} inputs; expected T+1 and T", states.len(), inputs.len()));
        }
        if inputs.is_empty() {
            return bad("trajectory needs at least one transition".into());
        }
        let (n, m) = (states[0].len(), inputs[0].len());
        if n == 0 || states.iter().any(|x| x.len() != n) || inputs.iter().any(|u| u.len() != m) {
            return bad("inconsistent vector lengths".into());
        }
        if states.iter().chain(&inputs).any(|v| v.iter().any(|x| !x.is_finite())) {
            return bad("non-finite entries".into());
        }
        Ok(Trajectory { states, inputs })
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    /// Number of transitions `T`.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Data matrices and the factorizations every construction reuses.
#[derive(Debug, Clone)]
pub struct DataRecord {
    pub x_minus: Matrix,
    pub u_minus: Matrix,
    pub x_plus: Matrix,
    /// `[X₋; U₋]`.
    pub m: Matrix,
    pub m_dagger: Matrix,
    /// Orthonormal basis of `ker M`.
    pub m_perp: Matrix,
    pub p_m: Matrix,
}

impl DataRecord {
    pub fn from_matrices(x_minus: Matrix, u_minus: Matrix, x_plus: Matrix) -> Result<Self, IdentError> {
        let t = x_minus.ncols();
        if u_minus.ncols() != t || x_plus.shape() != x_minus.shape() {
            return Err(IdentError::MalformedTrajectory("data matrices disagree in size".into()));
        }
        let (n, m) = (x_minus.nrows(), u_minus.nrows());
        let mut mm = Matrix::zeros(n + m, t);
        mm.view_mut((0, 0), (n, t)).copy_from(&x_minus);
        mm.view_mut((n, 0), (m, t)).copy_from(&u_minus);
        let m_dagger = pseudoinverse_full_row_rank(&mm).map_err(IdentError::RankDeficientData)?;
        let m_perp = kernel_basis(&mm).map_err(IdentError::RankDeficientData)?;
        let p_m = row_space_projector(&mm).map_err(IdentError::RankDeficientData)?;
        Ok(DataRecord { x_minus, u_minus, x_plus, m: mm, m_dagger, m_perp, p_m })
    }

    pub fn n(&self) -> usize {
        self.x_minus.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.u_minus.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.x_minus.ncols()
    }

    /// Number of identifiable parameters `d = n(n+m)`.
    pub fn param_dim(&self) -> usize {
        self.n() * self.m.nrows()
    }

    pub fn param_shape(&self) -> (usize, usize) {
        (self.n(), self.m.nrows())
    }

    /// Least-squares estimate `Θ̂ = X₊M†`.
    pub fn theta_hat(&self) -> Matrix {
        &self.x_plus * &self.m_dagger
    }

    /// Residual `X₊ − ΘM`.
    pub fn residual(&self, theta: &Matrix) -> Matrix {
        &self.x_plus - theta * &self.m
    }
}

pub fn build_data_equation(traj: &Trajectory) -> Result<DataRecord, IdentError> {
    let (n, m, t) = (traj.state_dim(), traj.input_dim(), traj.len());
    if t < n + m {
        return Err(IdentError::RankDeficientData(crate::error::NumericError::RankDeficient {
            rank: t,
            rows: n + m,
        }));
    }
    let x_minus = Matrix::from_fn(n, t, |i, k| traj.states[k][i]);
    let x_plus = Matrix::from_fn(n, t, |i, k| traj.states[k + 1][i]);
    let u_minus = Matrix::from_fn(m, t, |i, k| traj.inputs[k][i]);
    DataRecord::from_matrices(x_minus, u_minus, x_plus)
}

/// Noise model per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// `|w_i| ≤ a` entrywise, uniform.
    Bounded { a: f64 },
    Gaussian { sigma: f64 },
    /// `w = G_b β + N(0, σ²I)`, `‖β‖_∞ ≤ 1`, `β` uniform.
    Mixed {
        #[serde(with = "crate::numeric::serde_matrix")]
        bounded_generators: Matrix,
        sigma: f64,
    },
    GaussianMixture { weights: Vec<f64>, means: Vec<f64>, sigmas: Vec<f64> },
}

impl NoiseSpec {
    /// Entrywise box of half-width `a` mixed with Gaussian noise.
    pub fn mixed_box(n: usize, a: f64, sigma: f64) -> Self {
        NoiseSpec::Mixed { bounded_generators: Matrix::identity(n, n) * a, sigma }
    }

    pub fn validate(&self, n: usize) -> Result<(), IdentError> {
        let bad = |m: &str| Err(IdentError::InvalidNoise(m.into()));
        match self {
            NoiseSpec::Bounded { a } if !(*a >= 0.0 && a.is_finite()) => bad("a must be non-negative"),
            NoiseSpec::Gaussian { sigma } if !(*sigma >= 0.0 && sigma.is_finite()) => bad("sigma must be non-negative"),
            NoiseSpec::Mixed { bounded_generators, sigma } => {
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return bad("sigma must be non-negative");
                }
                if bounded_generators.ncols() > 0 && bounded_generators.nrows() != n {
                    return bad("bounded generators must have n rows");
                }
                if bounded_generators.iter().any(|v| !v.is_finite()) {
                    return bad("bounded generators must be finite");
                }
                Ok(())
            }
            NoiseSpec::GaussianMixture { weights, means, sigmas } => crate::stats::Density1D::GaussianMixture {
                weights: weights.clone(),
                means: means.clone(),
                sigmas: sigmas.clone(),
            }
            .validate()
            .map_err(IdentError::from),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSetKind {
    GaussianEllipsoid,
    BoundedCmz,
    MixedCmcg,
    BoxCmz,
    PullbackGeneric,
    /// A single known parameter matrix (model-based propagation).
    Known,
}

/// Data-consistent parameter set with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamSet {
    pub set: Cmcg,
    pub kind: ParamSetKind,
    /// Nominal coverage `1 − α` (1 for bounded sets).
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
}

/// Human-readable digest of a parameter set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamSummary {
    pub kind: ParamSetKind,
    pub shape: (usize, usize),
    pub center: Vec<Vec<f64>>,
    /// Interval-hull half-widths, same layout as `center`.
    pub radii: Vec<Vec<f64>>,
    pub generators: usize,
    pub constraints: usize,
    pub confidence: f64,
}

impl ParamSet {
    /// The singleton `{Θ}`.
    pub fn known(theta: &Matrix) -> Self {
        let inner = Ccg::point(vec_of(theta));
        let set = Cmcg::from_vectorized(theta.shape(), inner).expect("shape matches by construction");
        ParamSet { set, kind: ParamSetKind::Known, confidence: 1.0, noise: None }
    }

    pub fn contains(&self, theta: &Matrix, tol: f64) -> Result<bool, SetError> {
        Ok(self.set.contains(theta, tol)?.member)
    }

    pub fn summary(&self) -> Result<ParamSummary, SetError> {
        let hull = self.set.inner().interval_hull()?;
        let (n, p) = self.set.shape();
        let c = self.set.center_matrix();
        let half = unvec(((&hull.hi - &hull.lo) * 0.5).as_slice(), n, p);
        let rows = |m: &Matrix| (0..n).map(|i| m.row(i).iter().copied().collect()).collect();
        Ok(ParamSummary {
            kind: self.kind,
            shape: (n, p),
            center: rows(&c),
            radii: rows(&half),
            generators: self.set.num_generators(),
            constraints: self.set.inner().num_constraints(),
            confidence: self.confidence,
        })
    }
}

fn finish(inner: Ccg, data: &DataRecord, kind: ParamSetKind, confidence: f64, noise: Option<NoiseSpec>) -> Result<ParamSet, IdentError> {
    match inner.is_nonempty() {
        Ok(true) => {}
        Ok(false) | Err(SetError::Infeasible) => return Err(IdentError::EmptyParamSet),
        Err(e) => return Err(e.into()),
    }
    let set = Cmcg::from_vectorized(data.param_shape(), inner)?;
    Ok(ParamSet { set, kind, confidence, noise })
}

fn check_noise_dim(noise: &Ccg, data: &DataRecord) -> Result<(), IdentError> {
    let q = data.n() * data.horizon();
    if noise.dim() != q {
        return Err(SetError::DimensionMismatch { context: "noise set over vec(W)", expected: q, found: noise.dim() }.into());
    }
    Ok(())
}

/// Pullback of a noise CCG over `vec(W)` through the data equation, in
/// Kronecker form: `vec(YM†) = (M†ᵀ ⊗ I)vec(Y)`, `vec(YM⊥) = (M⊥ᵀ ⊗ I)vec(Y)`.
pub fn pullback(noise: &Ccg, data: &DataRecord) -> Result<ParamSet, IdentError> {
    check_noise_dim(noise, data)?;
    let n = data.n();
    let eye = Matrix::identity(n, n);
    let k_dag = kron(&data.m_dagger.transpose(), &eye);
    let k_perp = kron(&data.m_perp.transpose(), &eye);
    let shifted = vec_of(&data.x_plus) - noise.center();
    let center = &k_dag * &shifted;
    let generators = -(&k_dag * noise.generators());

    let kernel_a = &k_perp * noise.generators();
    let kernel_b = &k_perp * &shifted;
    let constraint = stack_constraints(noise.constraint(), kernel_a, kernel_b);
    let inner = Ccg::validated(center, generators, noise.groups().to_vec(), constraint)?;
    finish(inner, data, ParamSetKind::PullbackGeneric, 1.0, None)
}

fn stack_constraints(base: Option<&Constraint>, a: Matrix, b: Vector) -> Option<Constraint> {
    match base {
        None => Some(Constraint { a, b }),
        Some(c) => {
            let (r0, r1) = (c.a.nrows(), a.nrows());
            let mut aa = Matrix::zeros(r0 + r1, a.ncols());
            aa.view_mut((0, 0), (r0, a.ncols())).copy_from(&c.a);
            aa.view_mut((r0, 0), (r1, a.ncols())).copy_from(&a);
            let mut bb = Vector::zeros(r0 + r1);
            bb.rows_mut(0, r0).copy_from(&c.b);
            bb.rows_mut(r0, r1).copy_from(&b);
            Some(Constraint { a: aa, b: bb })
        }
    }
}

/// `g_j` placed in column `k` of `W`, for every step `k` and column `j` of `gb`.
pub fn stacked_noise_zonotope(gb: &Matrix, horizon: usize) -> Ccg {
    let n = gb.nrows();
    let p = gb.ncols();
    let mut g = Matrix::zeros(n * horizon, p * horizon);
    for k in 0..horizon {
        for j in 0..p {
            g.view_mut((k * n, k * p + j), (n, 1)).copy_from(&gb.column(j));
        }
    }
    Ccg::zonotope(Vector::zeros(n * horizon), g).expect("well-formed zonotope")
}

/// Entrywise box `|W_ik| ≤ a` over `vec(W)`.
pub fn box_noise(n: usize, horizon: usize, a: f64) -> Ccg {
    stacked_noise_zonotope(&(Matrix::identity(n, n) * a), horizon)
}

/// Frobenius ball `‖W‖_F ≤ σ√χ²_{nT,1−α}`: the HDR of i.i.d. Gaussian noise.
pub fn gaussian_noise_ball(n: usize, horizon: usize, sigma: f64, alpha: f64) -> Result<Ccg, IdentError> {
    let q = n * horizon;
    let r = sigma * chi2_quantile(q, 1.0 - alpha)?.sqrt();
    Ok(Ccg::ellipsoid(Vector::zeros(q), Matrix::identity(q, q) * r)?)
}

fn gaussian_radius(data: &DataRecord, sigma: f64, alpha: f64) -> Result<f64, IdentError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(IdentError::InvalidNoise("sigma must be non-negative".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(IdentError::InvalidNoise(format!("alpha {alpha} not in (0, 1)")));
    }
    Ok(sigma * chi2_quantile(data.param_dim(), 1.0 - alpha)?.sqrt())
}

/// Generators `r·e_i e_jᵀ L⁻¹` with `MMᵀ = LLᵀ`, in `vec` order of `(i, j)`.
fn ellipsoid_generators(data: &DataRecord, r: f64) -> Result<Matrix, IdentError> {
    let (n, p) = data.param_shape();
    let gram = &data.m * data.m.transpose();
    let chol = Cholesky::new(gram).ok_or(IdentError::RankDeficientData(crate::error::NumericError::RankDeficient {
        rank: 0,
        rows: p,
    }))?;
    let l_inv = chol.l().try_inverse().expect("triangular factor of a positive definite matrix");
    let mut g = Matrix::zeros(n * p, n * p);
    for j in 0..p {
        for i in 0..n {
            let mut e = Matrix::zeros(n, p);
            e.row_mut(i).copy_from(&(l_inv.row(j) * r));
            g.set_column(i + n * j, &vec_of(&e));
        }
    }
    Ok(g)
}

/// Gaussian CMCG `{Θ : tr((Θ−Θ̂)MMᵀ(Θ−Θ̂)ᵀ) ≤ σ²χ²_{d,1−α}}`, `d = n(n+m)`.
pub fn gaussian_param_set(data: &DataRecord, sigma: f64, alpha: f64) -> Result<ParamSet, IdentError> {
    let r = gaussian_radius(data, sigma, alpha)?;
    let center = vec_of(&data.theta_hat());
    let inner = if r == 0.0 {
        Ccg::point(center)
    } else {
        Ccg::ellipsoid(center, ellipsoid_generators(data, r)?)?
    };
    finish(inner, data, ParamSetKind::GaussianEllipsoid, 1.0 - alpha, Some(NoiseSpec::Gaussian { sigma }))
}

/// MLE confidence ellipsoid over `vec(Θ)`, from its quadratic form:
/// `Q = σ²χ²_{d,1−α} · (MMᵀ ⊗ I_n)⁻¹`.
pub fn mle_ellipsoid(data: &DataRecord, sigma: f64, alpha: f64) -> Result<Ellipsoid, IdentError> {
    let r = gaussian_radius(data, sigma, alpha)?;
    if r == 0.0 {
        return Err(IdentError::InvalidNoise("the MLE ellipsoid needs sigma > 0".into()));
    }
    let n = data.n();
    let precision = kron(&(&data.m * data.m.transpose()), &Matrix::identity(n, n));
    let inv = precision
        .try_inverse()
        .ok_or(IdentError::RankDeficientData(crate::error::NumericError::RankDeficient { rank: 0, rows: n }))?;
    let shape = (&inv + inv.transpose()) * (0.5 * r * r);
    Ok(Ellipsoid::new(vec_of(&data.theta_hat()), shape)?)
}

/// Constrained matrix zonotope from an ∞-singleton noise zonotope, built in
/// matrix form: `G_Σ⁽ⁱ⁾ = −G_w⁽ⁱ⁾M†`, `A_w⁽ⁱ⁾ = G_w⁽ⁱ⁾M⊥`, `B_w = (X₊ − C_w)M⊥`.
pub fn bounded_param_set(data: &DataRecord, noise_zonotope: &Ccg) -> Result<ParamSet, IdentError> {
    check_noise_dim(noise_zonotope, data)?;
    if noise_zonotope.is_constrained() || noise_zonotope.groups().iter().any(|g| g.p != Norm::Inf || g.len() != 1) {
        return Err(SetError::Unsupported("bounded noise must be a zonotope with ∞ singleton groups".into()).into());
    }
    let (n, t) = (data.n(), data.horizon());
    let c_w = unvec(noise_zonotope.center().as_slice(), n, t);
    let r = &data.x_plus - &c_w;
    let center = vec_of(&(&r * &data.m_dagger));
    let b = vec_of(&(&r * &data.m_perp));
    let gens = noise_zonotope.num_generators();
    let mut g = Matrix::zeros(data.param_dim(), gens);
    let mut a = Matrix::zeros(b.len(), gens);
    for i in 0..gens {
        let gw = unvec(noise_zonotope.generators().column(i).as_slice(), n, t);
        g.set_column(i, &vec_of(&(-(&gw * &data.m_dagger))));
        a.set_column(i, &vec_of(&(&gw * &data.m_perp)));
    }
    let groups = (0..gens).map(|i| NormGroup::singleton(i, Norm::Inf)).collect();
    let constraint = (!b.is_empty()).then_some(Constraint { a, b });
    let inner = Ccg::validated(center, g, groups, constraint)?;
    finish(inner, data, ParamSetKind::BoundedCmz, 1.0, None)
}

/// Mixed bounded-Gaussian parameter set.
///
/// For `σ > 0` this is the Minkowski sum of the bounded block
/// `{X₊M† − Σ β_k G_{W_b}⁽ᵏ⁾M†}` and the `χ²_d` Gaussian ellipsoid. The
/// kernel rows are not imposed on the bounded block: the true noise has a
/// Gaussian component in `ker M` far larger than the `χ²_d` radius, so they
/// would make the set empty. For `σ = 0` the kernel rows are exact and the
/// result is the bounded CMZ.
pub fn mixed_param_set(data: &DataRecord, bounded_gens: &Matrix, sigma: f64, alpha: f64) -> Result<ParamSet, IdentError> {
    let n = data.n();
    if bounded_gens.ncols() > 0 && bounded_gens.nrows() != n {
        return Err(IdentError::InvalidNoise("bounded generators must have n rows".into()));
    }
    let noise = Some(NoiseSpec::Mixed { bounded_generators: bounded_gens.clone(), sigma });
    let zono = stacked_noise_zonotope(bounded_gens, data.horizon());
    if sigma == 0.0 {
        let mut ps = bounded_param_set(data, &zono)?;
        ps.kind = ParamSetKind::MixedCmcg;
        ps.noise = noise;
        return Ok(ps);
    }
    let r = gaussian_radius(data, sigma, alpha)?;
    let t = data.horizon();
    let gb = zono.num_generators();
    let d = data.param_dim();
    let mut g = Matrix::zeros(d, gb + d);
    for i in 0..gb {
        let gw = unvec(zono.generators().column(i).as_slice(), n, t);
        g.set_column(i, &vec_of(&(-(&gw * &data.m_dagger))));
    }
    g.view_mut((0, gb), (d, d)).copy_from(&ellipsoid_generators(data, r)?);
    let mut groups: Vec<NormGroup> = (0..gb).map(|i| NormGroup::singleton(i, Norm::Inf)).collect();
    groups.push(NormGroup::range(gb, d, Norm::Two));
    let inner = Ccg::validated(vec_of(&data.theta_hat()), g, groups, None)?;
    finish(inner, data, ParamSetKind::MixedCmcg, 1.0 - alpha, noise)
}

/// CMZ baseline: the Gaussian part replaced by the entrywise box `mσ`.
pub fn box_cmz_baseline(data: &DataRecord, sigma: f64, m_box: f64, bounded_gens: &Matrix) -> Result<ParamSet, IdentError> {
    if !(m_box > 0.0) {
        return Err(IdentError::InvalidNoise("m_box must be positive".into()));
    }
    let (n, t) = (data.n(), data.horizon());
    let mut noise = box_noise(n, t, m_box * sigma);
    if bounded_gens.ncols() > 0 {
        noise = stacked_noise_zonotope(bounded_gens, t).minkowski_sum(&noise)?;
    }
    let noise = noise.compact();
    let mut ps = bounded_param_set(data, &noise)?;
    ps.kind = ParamSetKind::BoxCmz;
    ps.noise = Some(NoiseSpec::Mixed { bounded_generators: bounded_gens.clone(), sigma });
    Ok(ps)
}
