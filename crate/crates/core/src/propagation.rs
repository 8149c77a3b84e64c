//! CMCG × CCG products, containment diagnostics and reachable tubes.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, SetError};
use crate::identification::{NoiseSpec, ParamSet};
use crate::numeric::{spectral_norm, unvec, Matrix, Vector};
use crate::par::{sample_rng, Execution};
use crate::sets::{Ccg, Cmcg, Constraint, IntervalBox, Norm, NormGroup};
use crate::stats::{chi2_quantile, hdr_1d, Density1D, DEFAULT_GRID};

/// How 2-norm groups of the factors are read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaussianMode {
    /// Groups are already confidence balls: `ρ_Θ = ρ_z = 1`.
    #[default]
    Truncated,
    /// Groups carry standard Gaussian coefficients; the product restricts
    /// them to `‖ξ‖₂ ≤ √χ²_{γ, 1−δ/2}` and returns a truncated set.
    Raw,
}

/// How the confidence budget is spent along a tube.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetPolicy {
    /// Every step uses the full level.
    #[default]
    PerStep,
    /// Bonferroni split of the level over the `K` steps.
    Shared,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ProductConfig {
    /// Budget split evenly between `ρ_Θ` and `ρ_z`.
    pub delta: f64,
    pub tighten_bounds: bool,
    pub reduction_order: Option<usize>,
    pub gaussian_mode: GaussianMode,
    pub budget: BudgetPolicy,
    /// Level of the per-step Gaussian noise ball.
    pub noise_alpha: f64,
    pub execution: Execution,
}

impl Default for ProductConfig {
    fn default() -> Self {
        ProductConfig {
            delta: 0.05,
            tighten_bounds: false,
            reduction_order: None,
            gaussian_mode: GaussianMode::Truncated,
            budget: BudgetPolicy::PerStep,
            noise_alpha: 0.05,
            execution: Execution::default(),
        }
    }
}

/// Generator count above which a warning is logged.
pub const GENERATOR_WARN: usize = 10_000;

impl ProductConfig {
    pub fn validate(&self) -> Result<(), SetError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(SetError::Unsupported(format!("delta {} not in (0, 1)", self.delta)));
        }
        if !(self.noise_alpha > 0.0 && self.noise_alpha < 1.0) {
            return Err(SetError::Unsupported(format!("noise alpha {} not in (0, 1)", self.noise_alpha)));
        }
        Ok(())
    }

    /// `(ρ_Θ, ρ_z)` for the given Gaussian coefficient counts.
    pub fn radii(&self, gamma_theta: usize, gamma_z: usize) -> Result<(f64, f64), SetError> {
        match self.gaussian_mode {
            GaussianMode::Truncated => Ok((1.0, 1.0)),
            GaussianMode::Raw => {
                let rho = |g: usize| -> Result<f64, SetError> {
                    if g == 0 {
                        return Ok(1.0);
                    }
                    chi2_quantile(g, 1.0 - self.delta / 2.0)
                        .map(f64::sqrt)
                        .map_err(|e| SetError::Unsupported(e.to_string()))
                };
                Ok((rho(gamma_theta)?, rho(gamma_z)?))
            }
        }
    }
}

/// Coefficients living in 2-norm groups.
fn gaussian_mask(set: &Ccg) -> Vec<bool> {
    let mut mask = vec![false; set.num_generators()];
    for g in set.groups().iter().filter(|g| g.p == Norm::Two) {
        for &i in &g.indices {
            mask[i] = true;
        }
    }
    mask
}

/// Bounds `β̄_k` on `|β_k|` for every coefficient of `N`.
pub fn coefficient_bounds(n_set: &Cmcg, tighten: bool) -> Result<Vec<f64>, SetError> {
    n_set.inner().coefficient_bounds(tighten)
}

/// `G⁽ᵏ⁾ G_z` for every generator matrix of `N`.
fn bilinear_images(n_set: &Cmcg, e: &Ccg) -> Vec<Matrix> {
    let (n, p) = n_set.shape();
    let g = n_set.inner().generators();
    (0..g.ncols()).map(|k| unvec(g.column(k).as_slice(), n, p) * e.generators()).collect()
}

struct Columns {
    cols: Vec<Vector>,
    groups: Vec<NormGroup>,
}

impl Columns {
    fn push_group(&mut self, cols: Vec<Vector>, p: Norm) {
        if cols.is_empty() {
            return;
        }
        let start = self.cols.len();
        let len = cols.len();
        self.cols.extend(cols);
        if p == Norm::Two {
            self.groups.push(NormGroup::range(start, len, p));
        } else {
            self.groups.extend((start..start + len).map(|i| NormGroup::singleton(i, p)));
        }
    }
}

/// Replaces the fresh, unconstrained columns from `start` on by a reduced
/// outer approximation before any constraint padding is materialized.
fn reduce_fresh(out: &mut Columns, start: usize, n: usize, order: usize) -> Result<(), SetError> {
    if out.cols.len() - start <= order {
        return Ok(());
    }
    let fresh = out.cols.split_off(start);
    let mut g = Matrix::zeros(n, fresh.len());
    for (i, c) in fresh.iter().enumerate() {
        g.set_column(i, c);
    }
    let groups: Vec<NormGroup> = out.groups.iter().filter(|grp| grp.indices[0] >= start).map(|grp| NormGroup::new(grp.indices.iter().map(|i| i - start).collect(), grp.p)).collect();
    out.groups.retain(|grp| grp.indices[0] < start);
    let part = Ccg::new(Vector::zeros(n), g, groups, None)?.reduce_order(order)?;
    let pg = part.generators();
    for i in 0..pg.ncols() {
        out.cols.push(pg.column(i).into_owned());
    }
    out.groups.extend(part.groups().iter().map(|grp| grp.shifted(start)));
    Ok(())
}

/// Over-approximation of `{Θz : Θ ∈ N, z ∈ E}` as a CCG.
///
/// Column order: `N`'s coefficients times `c_z`, `C_Σ` times `E`'s
/// generators, then the fresh bounded×bounded and Gaussian×Gaussian
/// segments, bounded×Gaussian 2-groups (one per bounded `k` and 2-group of
/// `E`) and Gaussian×bounded 2-groups (one per bounded `ℓ` and 2-group of
/// `N`). Equality constraints act on the two original blocks only.
pub fn cmcg_ccg_product(n_set: &Cmcg, e: &Ccg, cfg: &ProductConfig) -> Result<Ccg, SetError> {
    cfg.validate()?;
    let (n, p) = n_set.shape();
    if p != e.dim() {
        return Err(SetError::DimensionMismatch { context: "product operand", expected: p, found: e.dim() });
    }
    let nin = n_set.inner();
    let (mn, me) = (nin.num_generators(), e.num_generators());
    let (gn, ge) = (gaussian_mask(nin), gaussian_mask(e));
    let gamma_theta = gn.iter().filter(|&&b| b).count();
    let gamma_z = ge.iter().filter(|&&b| b).count();
    let (rho_t, rho_z) = cfg.radii(gamma_theta, gamma_z)?;
    let bn = nin.coefficient_bounds(cfg.tighten_bounds)?;
    let be = e.coefficient_bounds(cfg.tighten_bounds)?;
    let sn: Vec<f64> = gn.iter().map(|&g| if g { rho_t } else { 1.0 }).collect();
    let se: Vec<f64> = ge.iter().map(|&g| if g { rho_z } else { 1.0 }).collect();

    let c_sigma = n_set.center_matrix();
    let cz = e.center();
    let images = bilinear_images(n_set, e);

    let mut out = Columns { cols: Vec::new(), groups: Vec::new() };
    for k in 0..mn {
        out.cols.push(unvec(nin.generators().column(k).as_slice(), n, p) * cz * sn[k]);
    }
    out.groups.extend(nin.groups().iter().cloned());
    let lin = &c_sigma * e.generators();
    for l in 0..me {
        out.cols.push(lin.column(l) * se[l]);
    }
    out.groups.extend(e.groups().iter().map(|g| g.shifted(mn)));

    let bounded_n: Vec<usize> = (0..mn).filter(|&k| !gn[k]).collect();
    let bounded_e: Vec<usize> = (0..me).filter(|&l| !ge[l]).collect();
    let two_n: Vec<&NormGroup> = nin.groups().iter().filter(|g| g.p == Norm::Two).collect();
    let two_e: Vec<&NormGroup> = e.groups().iter().filter(|g| g.p == Norm::Two).collect();

    let mut bb = Vec::with_capacity(bounded_n.len() * bounded_e.len());
    for &k in &bounded_n {
        for &l in &bounded_e {
            bb.push(images[k].column(l) * (bn[k] * be[l]));
        }
    }
    out.push_group(bb, Norm::Inf);
    let mut gg = Vec::new();
    for j in (0..mn).filter(|&j| gn[j]) {
        for r in (0..me).filter(|&r| ge[r]) {
            gg.push(images[j].column(r) * (rho_t * rho_z));
        }
    }
    out.push_group(gg, Norm::Inf);
    for &k in &bounded_n {
        for grp in &two_e {
            let cols = grp.indices.iter().map(|&r| images[k].column(r) * (bn[k] * rho_z)).collect();
            out.push_group(cols, Norm::Two);
        }
    }
    for &l in &bounded_e {
        for grp in &two_n {
            let cols = grp.indices.iter().map(|&j| images[j].column(l) * (be[l] * rho_t)).collect();
            out.push_group(cols, Norm::Two);
        }
    }

    if let Some(order) = cfg.reduction_order {
        reduce_fresh(&mut out, mn + me, n, order)?;
    }
    let total = out.cols.len();
    let mut g = Matrix::zeros(n, total);
    for (i, c) in out.cols.iter().enumerate() {
        g.set_column(i, c);
    }
    let constraint = padded_constraints(nin.constraint(), &sn, e.constraint(), &se, total);
    let center = &c_sigma * cz;
    Ok(Ccg::from_parts(center, g, out.groups, constraint))
}

/// `blkdiag(A_N, A_E)` with columns rescaled by the coefficient scales and
/// zero-padded to `total` columns.
fn padded_constraints(
    cn: Option<&Constraint>,
    sn: &[f64],
    ce: Option<&Constraint>,
    se: &[f64],
    total: usize,
) -> Option<Constraint> {
    let rn = cn.map_or(0, |c| c.a.nrows());
    let re = ce.map_or(0, |c| c.a.nrows());
    if rn + re == 0 {
        return None;
    }
    let mut a = Matrix::zeros(rn + re, total);
    let mut b = Vector::zeros(rn + re);
    if let Some(c) = cn {
        for (k, s) in sn.iter().enumerate() {
            a.view_mut((0, k), (rn, 1)).copy_from(&(c.a.column(k) * *s));
        }
        b.rows_mut(0, rn).copy_from(&c.b);
    }
    if let Some(c) = ce {
        let off = sn.len();
        for (l, s) in se.iter().enumerate() {
            a.view_mut((rn, off + l), (re, 1)).copy_from(&(c.a.column(l) * *s));
        }
        b.rows_mut(rn, re).copy_from(&c.b);
    }
    Some(Constraint { a, b })
}

/// Outcome of a sampled containment test.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub samples: usize,
    pub corners: usize,
    pub max_margin: f64,
    pub violations: usize,
}

impl ContainmentReport {
    fn absorb(&mut self, margin: f64, tol: f64) {
        self.max_margin = self.max_margin.max(margin);
        if margin > 1.0 + tol {
            self.violations += 1;
        }
    }
}

/// Margin tolerance of the containment diagnostics.
pub const CONTAINMENT_TOL: f64 = 1e-5;

/// Largest total coefficient count for which all sign corners are tried.
pub const CORNER_LIMIT: usize = 12;

/// Checks `Θz ∈ N × E` for sampled admissible `(Θ, z)` and, on small
/// instances, for every sign corner of the coefficient balls.
pub fn product_containment_check(
    n_set: &Cmcg,
    e: &Ccg,
    cfg: &ProductConfig,
    samples: usize,
    seed: u64,
) -> Result<ContainmentReport, SetError> {
    let out = cmcg_ccg_product(n_set, e, cfg)?;
    let (gt, gz) = (
        gaussian_mask(n_set.inner()).iter().filter(|&&b| b).count(),
        gaussian_mask(e).iter().filter(|&&b| b).count(),
    );
    let (rho_t, rho_z) = cfg.radii(gt, gz)?;
    let sn = n_set.inner().coefficient_sampler()?.with_two_radius(rho_t);
    let se = e.coefficient_sampler()?.with_two_radius(rho_z);
    let margin = |beta: &Vector, alpha: &Vector| -> Result<f64, SetError> {
        let theta = n_set.unvec(&sn.point(beta));
        let y = theta * se.point(alpha);
        Ok(out.contains_point(&y, CONTAINMENT_TOL)?.margin)
    };

    let sampled = cfg.execution.map_range(samples, |i| {
        let mut rng = sample_rng(seed, i as u64);
        let beta = sn.sample(&mut rng);
        let alpha = se.sample(&mut rng);
        margin(&beta, &alpha)
    });
    let mut report = ContainmentReport { samples, ..Default::default() };
    for m in sampled {
        report.absorb(m?, CONTAINMENT_TOL);
    }

    let (mn, me) = (n_set.num_generators(), e.num_generators());
    if mn + me <= CORNER_LIMIT {
        let count = 1usize << (mn + me);
        let cornered = cfg.execution.map_range(count, |mask| {
            let bit = |i: usize| mask >> i & 1 == 1;
            let beta = sn.corner(&(0..mn).map(bit).collect::<Vec<_>>());
            let alpha = se.corner(&(mn..mn + me).map(bit).collect::<Vec<_>>());
            margin(&beta, &alpha)
        });
        report.corners = count;
        for m in cornered {
            report.absorb(m?, CONTAINMENT_TOL);
        }
    }
    Ok(report)
}

/// `H_{jr} = G_{Σ,g}⁽ʲ⁾ G_{z,g}⁽ʳ⁾` over all Gaussian pairs, with the group sizes.
fn gg_blocks(n_set: &Cmcg, e: &Ccg) -> (Vec<Vec<Vector>>, usize, usize) {
    let (gn, ge) = (gaussian_mask(n_set.inner()), gaussian_mask(e));
    let images = bilinear_images(n_set, e);
    let js: Vec<usize> = (0..gn.len()).filter(|&j| gn[j]).collect();
    let rs: Vec<usize> = (0..ge.len()).filter(|&r| ge[r]).collect();
    let h = js.iter().map(|&j| rs.iter().map(|&r| images[j].column(r).into_owned()).collect()).collect();
    (h, js.len(), rs.len())
}

/// Bound on the support gap of the Gaussian×Gaussian relaxation:
/// `ρ_Θρ_z(√(γ_Θγ_z) − 1)(Σ‖H_{jr}‖²_F)^{1/2}`.
///
/// Not a true upper bound when `M_h` is far from rank one, e.g.
/// `[[1, 1], [1, −1]]`; replacing `1` by `1/√min(γ_Θ, γ_z)` makes it one.
pub fn gg_gap_bound(n_set: &Cmcg, e: &Ccg, cfg: &ProductConfig) -> Result<f64, SetError> {
    let (h, gt, gz) = gg_blocks(n_set, e);
    if gt == 0 || gz == 0 {
        return Ok(0.0);
    }
    let (rt, rz) = cfg.radii(gt, gz)?;
    let fro2: f64 = h.iter().flatten().map(|v| v.norm_squared()).sum();
    Ok(rt * rz * (((gt * gz) as f64).sqrt() - 1.0) * fro2.sqrt())
}

/// Supports of the exact truncated Gaussian×Gaussian set and of its
/// segment relaxation along one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgSupports {
    /// `ρ_Θρ_z‖M_h‖₂`.
    pub exact: f64,
    /// `ρ_Θρ_z Σ|(M_h)_{jr}|`.
    pub relaxed: f64,
}

impl GgSupports {
    pub fn gap(&self) -> f64 {
        self.relaxed - self.exact
    }
}

pub fn gg_supports(n_set: &Cmcg, e: &Ccg, cfg: &ProductConfig, h: &Vector) -> Result<GgSupports, SetError> {
    let (blocks, gt, gz) = gg_blocks(n_set, e);
    if gt == 0 || gz == 0 {
        return Ok(GgSupports { exact: 0.0, relaxed: 0.0 });
    }
    let (rt, rz) = cfg.radii(gt, gz)?;
    let m = Matrix::from_fn(gt, gz, |j, r| h.dot(&blocks[j][r]));
    Ok(GgSupports { exact: rt * rz * spectral_norm(&m), relaxed: rt * rz * m.abs().sum() })
}

/// Noise sets `(W_b, W_g)` for one step of an `n`-state system.
///
/// Gaussian noise becomes the ball `σ√χ²_{n,1−α}`; a scalar mixture the
/// interval hull of its HDR, per coordinate at level `(1−α)^{1/n}`.
pub fn noise_sets(noise: &NoiseSpec, n: usize, alpha: f64) -> Result<(Ccg, Ccg), Error> {
    noise.validate(n)?;
    let zero = || Ccg::point(Vector::zeros(n));
    let ball = |sigma: f64| -> Result<Ccg, Error> {
        if sigma == 0.0 {
            return Ok(zero());
        }
        let r = sigma * chi2_quantile(n, 1.0 - alpha)?.sqrt();
        Ok(Ccg::ellipsoid(Vector::zeros(n), Matrix::identity(n, n) * r)?)
    };
    Ok(match noise {
        NoiseSpec::Bounded { a } => (Ccg::zonotope(Vector::zeros(n), Matrix::identity(n, n) * *a)?, zero()),
        NoiseSpec::Gaussian { sigma } => (zero(), ball(*sigma)?),
        NoiseSpec::Mixed { bounded_generators, sigma } => {
            let wb = if bounded_generators.ncols() == 0 {
                zero()
            } else {
                Ccg::zonotope(Vector::zeros(n), bounded_generators.clone())?
            };
            (wb, ball(*sigma)?)
        }
        NoiseSpec::GaussianMixture { weights, means, sigmas } => {
            let f = Density1D::GaussianMixture { weights: weights.clone(), means: means.clone(), sigmas: sigmas.clone() };
            let level = (1.0 - alpha).powf(1.0 / n as f64);
            let (lo, hi) = hdr_1d(&f, 1.0 - level, DEFAULT_GRID)?.hull();
            let wb = Ccg::from_box(&Vector::from_element(n, lo), &Vector::from_element(n, hi))?;
            (wb, zero())
        }
    })
}

/// One step `N × (X_k × U) ⊕ W_b ⊕ W_g`, compacted and optionally reduced.
pub fn reach_step(n_set: &ParamSet, x: &Ccg, u: &Ccg, wb: &Ccg, wg: &Ccg, cfg: &ProductConfig) -> Result<Ccg, SetError> {
    let z = x.cartesian_product(u);
    let y = cmcg_ccg_product(&n_set.set, &z, cfg)?.minkowski_sum(wb)?.minkowski_sum(wg)?;
    let y = y.compact();
    match cfg.reduction_order {
        Some(order) => y.reduce_order(order),
        None => Ok(y),
    }
}

/// Reachable sets `X_0..X_K` with their interval hulls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReachTube {
    /// `steps[k]` is `X_k`; `steps[0]` is the initial set.
    pub steps: Vec<Ccg>,
    pub hulls: Vec<IntervalBox>,
    /// `Π(hi − lo)` of the matching hull.
    pub volumes: Vec<f64>,
    /// Seconds spent producing each step (0 for the initial set).
    pub timings: Vec<f64>,
    pub generators: Vec<usize>,
}

impl ReachTube {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_time(&self) -> f64 {
        self.timings.iter().sum()
    }
}

fn step_alpha(cfg: &ProductConfig, k: usize) -> f64 {
    match cfg.budget {
        BudgetPolicy::PerStep => cfg.noise_alpha,
        BudgetPolicy::Shared => cfg.noise_alpha / k as f64,
    }
}

fn step_config(cfg: &ProductConfig, k: usize) -> ProductConfig {
    let mut c = cfg.clone();
    if cfg.budget == BudgetPolicy::Shared {
        c.delta = cfg.delta / k as f64;
    }
    c
}

/// Iterates [`reach_step`] `k` times from `x0`.
pub fn reach_tube(n_set: &ParamSet, x0: &Ccg, u: &Ccg, noise: &NoiseSpec, k: usize, cfg: &ProductConfig) -> Result<ReachTube, Error> {
    if k == 0 {
        return Err(Error::Config("a tube needs at least one step".into()));
    }
    let n = x0.dim();
    let (wb, wg) = noise_sets(noise, n, step_alpha(cfg, k))?;
    let step_cfg = step_config(cfg, k);
    let hull0 = x0.interval_hull_with(cfg.execution)?;
    let mut tube = ReachTube {
        volumes: vec![hull0.volume()],
        hulls: vec![hull0],
        steps: vec![x0.clone()],
        timings: vec![0.0],
        generators: vec![x0.num_generators()],
    };
    for step in 1..=k {
        let start = Instant::now();
        let next = reach_step(n_set, tube.steps.last().expect("non-empty"), u, &wb, &wg, &step_cfg)?;
        let hull = next.interval_hull_with(cfg.execution)?;
        tube.timings.push(start.elapsed().as_secs_f64());
        if next.num_generators() > GENERATOR_WARN {
            log::warn!("step {step}: {} generators; consider a reduction order", next.num_generators());
        }
        tube.generators.push(next.num_generators());
        tube.volumes.push(hull.volume());
        tube.hulls.push(hull);
        tube.steps.push(next);
    }
    Ok(tube)
}

/// Samples admissible realizations `(Θ, x_0, u_k, w_k)`, simulates them and
/// checks every state against the matching tube step.
pub fn tube_containment_check(
    n_set: &ParamSet,
    u: &Ccg,
    noise: &NoiseSpec,
    tube: &ReachTube,
    cfg: &ProductConfig,
    samples: usize,
    seed: u64,
) -> Result<ContainmentReport, Error> {
    let k = tube.len() - 1;
    let x0 = &tube.steps[0];
    let (wb, wg) = noise_sets(noise, x0.dim(), step_alpha(cfg, k.max(1)))?;
    let w = wb.minkowski_sum(&wg)?;
    let sn = n_set.set.inner().coefficient_sampler()?;
    let sx = x0.coefficient_sampler()?;
    let su = u.coefficient_sampler()?;
    let sw = w.coefficient_sampler()?;
    let results = cfg.execution.map_range(samples, |i| -> Result<f64, SetError> {
        let mut rng = sample_rng(seed, i as u64);
        let theta = n_set.set.unvec(&sn.point(&sn.sample(&mut rng)));
        let mut x = sx.point(&sx.sample(&mut rng));
        let mut worst: f64 = 0.0;
        for step in 1..=k {
            let uk = su.point(&su.sample(&mut rng));
            let wk = sw.point(&sw.sample(&mut rng));
            let z = Vector::from_iterator(x.len() + uk.len(), x.iter().chain(uk.iter()).copied());
            x = &theta * z + wk;
            worst = worst.max(tube.steps[step].contains_point(&x, CONTAINMENT_TOL)?.margin);
        }
        Ok(worst)
    });
    let mut report = ContainmentReport { samples, ..Default::default() };
    for m in results {
        report.absorb(m?, CONTAINMENT_TOL);
    }
    Ok(report)
}

/// Largest `‖Θ‖₂` over samples of `N`; a lower estimate of `κ`.
pub fn sampled_kappa(n_set: &ParamSet, samples: usize, seed: u64) -> Result<f64, SetError> {
    let s = n_set.set.inner().coefficient_sampler()?;
    let mut kappa: f64 = 0.0;
    for i in 0..samples.max(1) {
        let mut rng = sample_rng(seed, i as u64);
        let theta = n_set.set.unvec(&s.point(&s.sample(&mut rng)));
        kappa = kappa.max(spectral_norm(&theta));
    }
    Ok(kappa)
}

/// Accumulated wrapping error after `k` steps: `(1 − κᴷ)/(1 − κ)·ε`.
pub fn wrapping_bound(kappa: f64, eps_prod: f64, k: usize) -> f64 {
    if (kappa - 1.0).abs() < 1e-12 {
        return k as f64 * eps_prod;
    }
    (1.0 - kappa.powi(k as i32)) / (1.0 - kappa) * eps_prod
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_n() -> Cmcg {
        Cmcg::new(
            Matrix::from_element(1, 1, 1.0),
            &[Matrix::from_element(1, 1, 0.1)],
            vec![NormGroup::singleton(0, Norm::Inf)],
            None,
        )
        .unwrap()
    }

    fn scalar_e() -> Ccg {
        Ccg::ellipsoid(Vector::from_element(1, 2.0), Matrix::from_element(1, 1, 0.5)).unwrap()
    }

    #[test]
    fn scalar_product_blocks() {
        let y = cmcg_ccg_product(&scalar_n(), &scalar_e(), &ProductConfig::default()).unwrap();
        assert_eq!(y.center()[0], 2.0);
        let g: Vec<f64> = y.generators().iter().copied().collect();
        assert_eq!(g.len(), 3);
        assert!((g[0] - 0.2).abs() < 1e-15 && (g[1] - 0.5).abs() < 1e-15 && (g[2] - 0.05).abs() < 1e-15);
        assert_eq!(y.groups()[0].p, Norm::Inf);
        assert_eq!(y.groups()[1].p, Norm::Two);
        assert_eq!(y.groups()[2].p, Norm::Two);
        let h = y.interval_hull().unwrap();
        assert!((h.lo[0] - 1.25).abs() < 1e-12 && (h.hi[0] - 2.75).abs() < 1e-12);
    }

    #[test]
    fn singleton_factor_is_linear_map() {
        let c = Matrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.7]);
        let n = Cmcg::from_vectorized((2, 2), Ccg::point(crate::numeric::vec_of(&c))).unwrap();
        let e = Ccg::zonotope(Vector::from_row_slice(&[1.0, -1.0]), Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 0.3])).unwrap();
        let y = cmcg_ccg_product(&n, &e, &ProductConfig::default()).unwrap();
        let lin = e.linear_map(&c).unwrap();
        assert_eq!(y.center(), lin.center());
        assert_eq!(y.generators(), lin.generators());
    }

    #[test]
    fn tightened_bounds() {
        let con = |row: [f64; 2], b: f64| Constraint { a: Matrix::from_row_slice(1, 2, &row), b: Vector::from_element(1, b) };
        let groups = || vec![NormGroup::singleton(0, Norm::Inf), NormGroup::singleton(1, Norm::Inf)];
        let set = |c| Ccg::new(Vector::zeros(1), Matrix::from_row_slice(1, 2, &[1.0, 1.0]), groups(), Some(c)).unwrap();
        let b = set(con([1.0, 1.0], 1.8)).coefficient_bounds(true).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-6 && b.iter().all(|v| *v <= 1.0 + 1e-8));
        let b = set(con([1.0, -1.0], 2.0)).coefficient_bounds(true).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-6 && (b[1] - 1.0).abs() < 1e-6);
        let b = set(con([1.0, 0.0], 0.5)).coefficient_bounds(true).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-6 && (b[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_containment() {
        let r = product_containment_check(&scalar_n(), &scalar_e(), &ProductConfig::default(), 2000, 3).unwrap();
        assert_eq!(r.violations, 0);
        assert_eq!(r.corners, 4);
    }

    #[test]
    fn wrapping_examples() {
        assert!((wrapping_bound(0.5, 1.0, 30) - 2.0).abs() < 1e-8);
        assert_eq!(wrapping_bound(0.3, 0.7, 1), 0.7);
        assert!((wrapping_bound(1.0, 0.1, 5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn contraction_shrinks_volume() {
        let a = Matrix::from_row_slice(2, 3, &[0.6, 0.2, 0.0, -0.1, 0.5, 0.0]);
        let n = ParamSet::known(&a);
        let x0 = Ccg::from_box(&Vector::from_element(2, -1.0), &Vector::from_element(2, 1.0)).unwrap();
        let u = Ccg::point(Vector::zeros(1));
        let tube = reach_tube(&n, &x0, &u, &NoiseSpec::Bounded { a: 0.0 }, 4, &ProductConfig::default()).unwrap();
        assert!(tube.volumes.windows(2).all(|w| w[1] < w[0]));
    }
}
