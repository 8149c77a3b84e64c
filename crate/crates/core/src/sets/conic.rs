//! Dense primal-dual interior-point solver for small cone programs.
//!
//! Solves `min cᵀx  s.t.  Gx + s = h,  s ∈ K` where `K` is a product of a
//! nonnegative orthant and second-order cones. Equality constraints are
//! eliminated by the caller (see [`AffineReduction`]), so the Newton system
//! is a single positive definite normal matrix. Nesterov-Todd scaling with a
//! Mehrotra predictor-corrector step.

use nalgebra::linalg::{Cholesky, SVD};

use crate::error::SetError;
use crate::numeric::{Matrix, Vector};

const MAX_ITERS: usize = 120;
const FEAS_TOL: f64 = 1e-10;
const GAP_TOL: f64 = 1e-10;
const LOOSE_TOL: f64 = 1e-7;
const STEP: f64 = 0.99;

/// Cone layout: `lp` orthant slots first, then one block per second-order cone.
#[derive(Debug, Clone, Default)]
pub struct Cones {
    pub lp: usize,
    pub soc: Vec<usize>,
}

impl Cones {
    pub fn rows(&self) -> usize {
        self.lp + self.soc.iter().sum::<usize>()
    }

    fn degree(&self) -> f64 {
        (self.lp + self.soc.len()) as f64
    }

    fn soc_blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut off = self.lp;
        self.soc.iter().map(move |&d| {
            let o = off;
            off += d;
            (o, d)
        })
    }
}

#[derive(Debug, Clone)]
pub struct ConeProgram {
    pub c: Vector,
    pub g: Matrix,
    pub h: Vector,
    pub cones: Cones,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    /// Stalled short of the tight tolerances but within the loose ones.
    Inaccurate,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vector,
    pub primal: f64,
    pub dual: f64,
    pub iterations: usize,
    pub status: Status,
}

impl Solution {
    pub fn value(&self) -> f64 {
        0.5 * (self.primal + self.dual)
    }
}

struct SocScaling {
    eta: f64,
    w: Vector,
}

struct Scaling {
    lp: Vec<f64>,
    soc: Vec<SocScaling>,
}

fn soc_det(v: &[f64]) -> f64 {
    let tail: f64 = v[1..].iter().map(|x| x * x).sum();
    v[0] * v[0] - tail
}

// W̄ v for the unit-determinant SOC scaling.
fn wbar_apply(w: &Vector, v: &[f64], out: &mut [f64]) {
    let w0 = w[0];
    let dot: f64 = (1..v.len()).map(|i| w[i] * v[i]).sum();
    out[0] = w0 * v[0] + dot;
    let k = v[0] + dot / (1.0 + w0);
    for i in 1..v.len() {
        out[i] = v[i] + k * w[i];
    }
}

// W̄⁻¹ v = J W̄ J v.
fn wbar_inv_apply(w: &Vector, v: &[f64], out: &mut [f64]) {
    let w0 = w[0];
    let dot: f64 = (1..v.len()).map(|i| w[i] * v[i]).sum();
    out[0] = w0 * v[0] - dot;
    let k = -v[0] + dot / (1.0 + w0);
    for i in 1..v.len() {
        out[i] = v[i] + k * w[i];
    }
}

impl Scaling {
    fn new(cones: &Cones, s: &Vector, z: &Vector) -> Self {
        let lp = (0..cones.lp).map(|i| (s[i] / z[i]).sqrt()).collect();
        let soc = cones
            .soc_blocks()
            .map(|(o, d)| {
                let sb = &s.as_slice()[o..o + d];
                let zb = &z.as_slice()[o..o + d];
                let sn = soc_det(sb).max(f64::MIN_POSITIVE).sqrt();
                let zn = soc_det(zb).max(f64::MIN_POSITIVE).sqrt();
                let eta = (sn / zn).sqrt();
                let sbar: Vec<f64> = sb.iter().map(|v| v / sn).collect();
                let zbar: Vec<f64> = zb.iter().map(|v| v / zn).collect();
                let dot: f64 = sbar.iter().zip(&zbar).map(|(a, b)| a * b).sum();
                let gamma = ((1.0 + dot) / 2.0).max(f64::MIN_POSITIVE).sqrt();
                let mut w = Vector::zeros(d);
                w[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                for i in 1..d {
                    w[i] = (sbar[i] - zbar[i]) / (2.0 * gamma);
                }
                SocScaling { eta, w }
            })
            .collect();
        Scaling { lp, soc }
    }

    fn apply(&self, cones: &Cones, v: &[f64], inverse: bool) -> Vector {
        let mut out = Vector::zeros(v.len());
        for i in 0..cones.lp {
            out[i] = if inverse { v[i] / self.lp[i] } else { v[i] * self.lp[i] };
        }
        for ((o, d), sc) in cones.soc_blocks().zip(&self.soc) {
            let dst = &mut out.as_mut_slice()[o..o + d];
            if inverse {
                wbar_inv_apply(&sc.w, &v[o..o + d], dst);
                dst.iter_mut().for_each(|x| *x /= sc.eta);
            } else {
                wbar_apply(&sc.w, &v[o..o + d], dst);
                dst.iter_mut().for_each(|x| *x *= sc.eta);
            }
        }
        out
    }
}

// Jordan product u∘v.
fn jprod(cones: &Cones, u: &Vector, v: &Vector) -> Vector {
    let mut out = Vector::zeros(u.len());
    for i in 0..cones.lp {
        out[i] = u[i] * v[i];
    }
    for (o, d) in cones.soc_blocks() {
        out[o] = (o..o + d).map(|i| u[i] * v[i]).sum();
        for i in o + 1..o + d {
            out[i] = u[o] * v[i] + v[o] * u[i];
        }
    }
    out
}

// Solve λ∘x = r for x.
fn jdiv(cones: &Cones, lambda: &Vector, r: &Vector) -> Vector {
    let mut out = Vector::zeros(r.len());
    for i in 0..cones.lp {
        out[i] = r[i] / lambda[i];
    }
    for (o, d) in cones.soc_blocks() {
        let l0 = lambda[o];
        let det = soc_det(&lambda.as_slice()[o..o + d]);
        let dot: f64 = (o + 1..o + d).map(|i| lambda[i] * r[i]).sum();
        let x0 = (l0 * r[o] - dot) / det;
        out[o] = x0;
        for i in o + 1..o + d {
            out[i] = (r[i] - x0 * lambda[i]) / l0;
        }
    }
    out
}

fn add_identity(cones: &Cones, v: &mut Vector, t: f64) {
    for i in 0..cones.lp {
        v[i] += t;
    }
    for (o, _) in cones.soc_blocks() {
        v[o] += t;
    }
}

// Smallest t with v + t·e in the closed cone.
fn cone_violation(cones: &Cones, v: &Vector) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..cones.lp {
        worst = worst.max(-v[i]);
    }
    for (o, d) in cones.soc_blocks() {
        let tail: f64 = (o + 1..o + d).map(|i| v[i] * v[i]).sum::<f64>().sqrt();
        worst = worst.max(tail - v[o]);
    }
    worst
}

// Largest α ≤ cap keeping x + α·dx in the cone.
fn max_step(cones: &Cones, x: &Vector, dx: &Vector, cap: f64) -> f64 {
    let mut alpha = cap;
    for i in 0..cones.lp {
        if dx[i] < 0.0 {
            alpha = alpha.min(-x[i] / dx[i]);
        }
    }
    for (o, d) in cones.soc_blocks() {
        let xs = &x.as_slice()[o..o + d];
        let ds = &dx.as_slice()[o..o + d];
        let a = soc_det(ds);
        let b = xs[0] * ds[0] - (1..d).map(|i| xs[i] * ds[i]).sum::<f64>();
        let c = soc_det(xs).max(0.0);
        let mut root = f64::INFINITY;
        if a.abs() < 1e-300 {
            if b < 0.0 {
                root = -c / (2.0 * b);
            }
        } else {
            let disc = b * b - a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                let q = -(b + b.signum() * sq);
                for r in [q / a, if q != 0.0 { c / q } else { f64::INFINITY }] {
                    if r > 0.0 && r < root {
                        root = r;
                    }
                }
            }
        }
        if ds[0] < 0.0 {
            root = root.min(-xs[0] / ds[0]);
        }
        alpha = alpha.min(root);
    }
    alpha.max(0.0)
}

fn factor(h: Matrix) -> Result<Cholesky<f64, nalgebra::Dyn>, SetError> {
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += reg;
        }
        if let Some(ch) = Cholesky::new(hr) {
            return Ok(ch);
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    Err(SetError::Solver("normal matrix is not positive definite".into()))
}

struct Kkt<'a> {
    prog: &'a ConeProgram,
    scaling: Scaling,
    wg: Matrix,
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl<'a> Kkt<'a> {
    fn new(prog: &'a ConeProgram, scaling: Scaling) -> Result<Self, SetError> {
        let (rows, cols) = prog.g.shape();
        let mut wg = Matrix::zeros(rows, cols);
        for j in 0..cols {
            let col: Vec<f64> = prog.g.column(j).iter().copied().collect();
            wg.set_column(j, &scaling.apply(&prog.cones, &col, true));
        }
        let chol = factor(wg.tr_mul(&wg))?;
        Ok(Kkt { prog, scaling, wg, chol })
    }

    /// Solves `Gᵀdz = bx`, `G dx − W² dz = bz`.
    fn solve(&self, bx: &Vector, bz: &Vector) -> (Vector, Vector) {
        let cones = &self.prog.cones;
        let wbz = self.scaling.apply(cones, bz.as_slice(), true);
        let rhs = bx + self.wg.tr_mul(&wbz);
        let dx = self.chol.solve(&rhs);
        let t = &self.wg * &dx - wbz;
        let dz = self.scaling.apply(cones, t.as_slice(), true);
        (dx, dz)
    }
}

/// Solves the cone program from an infeasible start.
pub fn solve(prog: &ConeProgram) -> Result<Solution, SetError> {
    let cones = &prog.cones;
    let (rows, n) = prog.g.shape();
    debug_assert_eq!(rows, cones.rows());
    debug_assert_eq!(prog.h.len(), rows);
    if n == 0 {
        if cone_violation(cones, &prog.h) > LOOSE_TOL {
            return Err(SetError::Infeasible);
        }
        return Ok(Solution {
            x: Vector::zeros(0),
            primal: 0.0,
            dual: 0.0,
            iterations: 0,
            status: Status::Optimal,
        });
    }

    let identity = Scaling {
        lp: vec![1.0; cones.lp],
        soc: cones
            .soc
            .iter()
            .map(|&d| {
                let mut w = Vector::zeros(d);
                w[0] = 1.0;
                SocScaling { eta: 1.0, w }
            })
            .collect(),
    };
    let kkt = Kkt::new(prog, identity)?;
    let (mut x, _) = kkt.solve(&Vector::zeros(n), &prog.h);
    let mut s = &prog.h - &prog.g * &x;
    let (_, zneg) = kkt.solve(&(-&prog.c), &Vector::zeros(rows));
    let mut z = zneg;
    for v in [&mut s, &mut z] {
        let viol = cone_violation(cones, v);
        if viol >= -1e-8 * v.norm().max(1.0) {
            add_identity(cones, v, 1.0 + viol);
        }
    }

    let hnorm = prog.h.norm().max(1.0);
    let cnorm = prog.c.norm().max(1.0);
    let nu = cones.degree();
    let mut best: Option<(f64, Solution)> = None;

    for iter in 0..MAX_ITERS {
        let rx = prog.g.tr_mul(&z) + &prog.c;
        let rz = &prog.g * &x + &s - &prog.h;
        let gap = s.dot(&z);
        let pcost = prog.c.dot(&x);
        let dcost = -prog.h.dot(&z);
        let pres = rz.norm() / hnorm;
        let dres = rx.norm() / cnorm;
        let relgap = gap / pcost.abs().max(dcost.abs()).max(1.0);

        let score = pres.max(dres).max(relgap);
        let candidate = Solution {
            x: x.clone(),
            primal: pcost,
            dual: dcost,
            iterations: iter,
            status: Status::Optimal,
        };
        if pres <= FEAS_TOL && dres <= FEAS_TOL && (gap <= GAP_TOL || relgap <= GAP_TOL) {
            return Ok(candidate);
        }
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, candidate));
        }

        let scaling = Scaling::new(cones, &s, &z);
        let lambda = scaling.apply(cones, z.as_slice(), false);
        let kkt = match Kkt::new(prog, scaling) {
            Ok(k) => k,
            Err(_) => break,
        };
        let mu = gap / nu;
        let ll = jprod(cones, &lambda, &lambda);

        let newton = |rc: &Vector| -> (Vector, Vector, Vector) {
            let q = jdiv(cones, &lambda, rc);
            let wq = kkt.scaling.apply(cones, q.as_slice(), false);
            let (dx, dz) = kkt.solve(&(-&rx), &(-&rz - wq));
            let wdz = kkt.scaling.apply(cones, dz.as_slice(), false);
            let ds = kkt.scaling.apply(cones, (q - wdz).as_slice(), false);
            (dx, ds, dz)
        };

        let (_, ds_a, dz_a) = newton(&(-&ll));
        let alpha_a = max_step(cones, &s, &ds_a, 1.0).min(max_step(cones, &z, &dz_a, 1.0));
        let s_a = &s + alpha_a * &ds_a;
        let z_a = &z + alpha_a * &dz_a;
        let rho = (s_a.dot(&z_a) / gap).clamp(0.0, 1.0);
        let sigma = rho.powi(3);

        let ds_t = kkt.scaling.apply(cones, ds_a.as_slice(), true);
        let dz_t = kkt.scaling.apply(cones, dz_a.as_slice(), false);
        let mut rc = -&ll - jprod(cones, &ds_t, &dz_t);
        add_identity(cones, &mut rc, sigma * mu);
        let (dx, ds, dz) = newton(&rc);
        let alpha = (STEP * max_step(cones, &s, &ds, f64::INFINITY).min(max_step(cones, &z, &dz, f64::INFINITY)))
            .min(1.0);
        if alpha < 1e-14 || !dx.iter().all(|v| v.is_finite()) {
            break;
        }
        x += alpha * dx;
        s += alpha * ds;
        z += alpha * dz;
    }

    match best {
        Some((score, mut sol)) if score <= LOOSE_TOL => {
            sol.status = Status::Inaccurate;
            Ok(sol)
        }
        Some((score, _)) => Err(SetError::Solver(format!(
            "interior-point method stalled (residual {score:.2e})"
        ))),
        None => Err(SetError::Solver("no iterations performed".into())),
    }
}

/// Affine subspace `{β : Aβ = b}` written as `β0 + N z` with orthonormal `N`.
#[derive(Debug, Clone)]
pub struct AffineReduction {
    pub particular: Vector,
    pub null: Matrix,
}

impl AffineReduction {
    /// Returns `None` when the system is inconsistent.
    pub fn new(a: &Matrix, b: &Vector) -> Option<Self> {
        let m = a.ncols();
        if a.nrows() == 0 {
            return Some(AffineReduction {
                particular: Vector::zeros(m),
                null: Matrix::identity(m, m),
            });
        }
        let svd = SVD::new(a.clone(), true, true);
        let u = svd.u.as_ref()?;
        let vt = svd.v_t.as_ref()?;
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let tol = 1e-10 * smax.max(1e-300) * (a.nrows().max(m) as f64);
        let mut particular = Vector::zeros(m);
        let mut rank_rows = Vec::new();
        for (k, &sv) in svd.singular_values.iter().enumerate() {
            if sv > tol {
                let coeff = u.column(k).dot(b) / sv;
                particular += coeff * vt.row(k).transpose();
                rank_rows.push(k);
            }
        }
        let resid = (a * &particular - b).norm();
        if resid > 1e-9 * (1.0 + b.norm()) {
            return None;
        }
        // Complete the row space to an orthonormal basis of ℝ^m.
        let rank = rank_rows.len();
        let null = if rank == m {
            Matrix::zeros(m, 0)
        } else {
            let mut basis = Matrix::zeros(m, rank);
            for (c, &k) in rank_rows.iter().enumerate() {
                basis.set_column(c, &vt.row(k).transpose());
            }
            let (q, _) = crate::numeric::qr_factor(&basis);
            q.columns(rank, m - rank).into_owned()
        };
        Some(AffineReduction { particular, null })
    }

    pub fn dim(&self) -> usize {
        self.null.ncols()
    }
}
