use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::conic::AffineReduction;
use super::interval::IntervalBox;
use super::norm::{validate_groups, Norm, NormGroup};
use super::program::{self, Structure};
use crate::error::SetError;
use crate::numeric::{Matrix, Vector};
use crate::par::Execution;

/// Feasibility slack accepted by the construction-time emptiness check.
pub const NONEMPTY_TOL: f64 = 1e-7;

/// Linear equality `Aβ = b` on the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub a: Matrix,
    pub b: Vector,
}

/// Constrained convex generator set
/// `{c + Gβ : ‖β_I‖_p ≤ 1 for every group, Aβ = b}`.
#[derive(Debug, Clone)]
pub struct Ccg {
    center: Vector,
    generators: Matrix,
    groups: Vec<NormGroup>,
    constraint: Option<Constraint>,
    structure: OnceLock<Arc<Structure>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    pub member: bool,
    /// Optimal gauge value `t*`; infinite when `x` is outside the affine span.
    pub margin: f64,
}

fn check_finite<'a>(it: impl IntoIterator<Item = &'a f64>) -> Result<(), SetError> {
    if it.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SetError::NonFinite)
    }
}

impl Ccg {
    /// Validated constructor; rejects empty sets.
    pub fn new(
        center: Vector,
        generators: Matrix,
        groups: Vec<NormGroup>,
        constraint: Option<Constraint>,
    ) -> Result<Self, SetError> {
        let set = Self::validated(center, generators, groups, constraint)?;
        if !set.is_nonempty()? {
            return Err(SetError::Infeasible);
        }
        Ok(set)
    }

    /// Shape checks only; callers guarantee non-emptiness.
    pub(crate) fn validated(
        center: Vector,
        generators: Matrix,
        groups: Vec<NormGroup>,
        constraint: Option<Constraint>,
    ) -> Result<Self, SetError> {
        let n = center.len();
        if generators.nrows() != n {
            return Err(SetError::DimensionMismatch {
                context: "generator rows",
                expected: n,
                found: generators.nrows(),
            });
        }
        let m = generators.ncols();
        validate_groups(&groups, m)?;
        check_finite(center.iter())?;
        check_finite(generators.iter())?;
        if let Some(con) = &constraint {
            if con.a.ncols() != m {
                return Err(SetError::DimensionMismatch {
                    context: "constraint columns",
                    expected: m,
                    found: con.a.ncols(),
                });
            }
            if con.a.nrows() != con.b.len() {
                return Err(SetError::DimensionMismatch {
                    context: "constraint rows",
                    expected: con.a.nrows(),
                    found: con.b.len(),
                });
            }
            check_finite(con.a.iter())?;
            check_finite(con.b.iter())?;
        }
        let constraint = constraint.filter(|c| c.a.nrows() > 0);
        Ok(Ccg { center, generators, groups, constraint, structure: OnceLock::new() })
    }

    /// Internal constructor for sets derived from valid sets.
    pub(crate) fn from_parts(
        center: Vector,
        generators: Matrix,
        groups: Vec<NormGroup>,
        constraint: Option<Constraint>,
    ) -> Self {
        debug_assert_eq!(center.len(), generators.nrows());
        debug_assert!(validate_groups(&groups, generators.ncols()).is_ok());
        debug_assert!(constraint.as_ref().is_none_or(|c| c.a.ncols() == generators.ncols()));
        let constraint = constraint.filter(|c| c.a.nrows() > 0);
        Ccg { center, generators, groups, constraint, structure: OnceLock::new() }
    }

    pub fn point(center: Vector) -> Self {
        let n = center.len();
        Self::from_parts(center, Matrix::zeros(n, 0), vec![], None)
    }

    /// Zonotope: every generator in its own ∞ group.
    pub fn zonotope(center: Vector, generators: Matrix) -> Result<Self, SetError> {
        let groups = (0..generators.ncols()).map(|i| NormGroup::singleton(i, Norm::Inf)).collect();
        Self::validated(center, generators, groups, None)
    }

    /// Ellipsoid `{c + Gβ : ‖β‖₂ ≤ 1}`.
    pub fn ellipsoid(center: Vector, generators: Matrix) -> Result<Self, SetError> {
        let m = generators.ncols();
        let groups = if m == 0 { vec![] } else { vec![NormGroup::range(0, m, Norm::Two)] };
        Self::validated(center, generators, groups, None)
    }

    /// Axis-aligned box with the given bounds.
    pub fn from_box(lo: &Vector, hi: &Vector) -> Result<Self, SetError> {
        let bx = IntervalBox::new(lo.clone(), hi.clone())?;
        Ok(bx.to_ccg())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn generators(&self) -> &Matrix {
        &self.generators
    }

    pub fn groups(&self) -> &[NormGroup] {
        &self.groups
    }

    pub fn constraint(&self) -> Option<&Constraint> {
        self.constraint.as_ref()
    }

    pub fn is_constrained(&self) -> bool {
        self.constraint.is_some()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraint.as_ref().map_or(0, |c| c.a.nrows())
    }

    pub(crate) fn structure(&self) -> &Structure {
        self.structure.get_or_init(|| {
            let con = self.constraint.as_ref().map(|c| (&c.a, &c.b));
            Arc::new(Structure::build(self.num_generators(), &self.groups, con))
        })
    }

    /// Coefficient positions touched by at least one equality row.
    pub fn constrained_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.num_generators()];
        for comp in &self.structure().components {
            if comp.reduction.is_some() {
                for &i in &comp.coefs {
                    mask[i] = true;
                }
            }
        }
        mask
    }

    /// Feasibility of the coefficient constraints (groupwise gauge ≤ 1).
    pub fn is_nonempty(&self) -> Result<bool, SetError> {
        let st = self.structure();
        if !st.consistent {
            return Ok(false);
        }
        for comp in &st.components {
            if let Some(red) = &comp.reduction {
                if program::gauge_solver(&comp.groups, red)? > 1.0 + NONEMPTY_TOL {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    fn check_dir(&self, l: &Vector) -> Result<(), SetError> {
        if l.len() != self.dim() {
            return Err(SetError::DimensionMismatch {
                context: "support direction",
                expected: self.dim(),
                found: l.len(),
            });
        }
        Ok(())
    }

    /// `max wᵀβ` over the coefficient set. Unconstrained blocks use the
    /// dual-norm closed form, constrained ones the conic solver.
    pub fn coef_support(&self, w: &Vector) -> Result<f64, SetError> {
        self.coef_support_impl(w, false)
    }

    fn coef_support_impl(&self, w: &Vector, force_solver: bool) -> Result<f64, SetError> {
        let st = self.structure();
        if !st.consistent {
            return Err(SetError::Infeasible);
        }
        let mut total = 0.0;
        for comp in &st.components {
            let wl = Vector::from_iterator(comp.coefs.len(), comp.coefs.iter().map(|&i| w[i]));
            match &comp.reduction {
                Some(red) => total += program::support_solver(&comp.groups, red, &wl)?,
                None if force_solver => {
                    let red = AffineReduction::new(&Matrix::zeros(0, wl.len()), &Vector::zeros(0))
                        .expect("empty system is consistent");
                    total += program::support_solver(&comp.groups, &red, &wl)?;
                }
                None => {
                    for g in &comp.groups {
                        total += g.p.dual(g.idx.iter().map(|&i| wl[i]));
                    }
                }
            }
        }
        Ok(total)
    }

    /// Support function `h(l) = max_{x∈E} lᵀx`.
    pub fn support(&self, l: &Vector) -> Result<f64, SetError> {
        self.check_dir(l)?;
        let w = self.generators.tr_mul(l);
        Ok(l.dot(&self.center) + self.coef_support(&w)?)
    }

    /// A maximizer `x*` of `lᵀx` over the set, with `h(l) = lᵀx*`.
    /// Ties on flat faces resolve to face centers in the closed form.
    pub fn support_point(&self, l: &Vector) -> Result<(f64, Vector), SetError> {
        self.check_dir(l)?;
        let st = self.structure();
        if !st.consistent {
            return Err(SetError::Infeasible);
        }
        let w = self.generators.tr_mul(l);
        let mut beta = Vector::zeros(self.num_generators());
        for comp in &st.components {
            let wl = Vector::from_iterator(comp.coefs.len(), comp.coefs.iter().map(|&i| w[i]));
            let bl = match &comp.reduction {
                Some(red) => program::support_argmax(&comp.groups, red, &wl)?,
                None => {
                    let mut b = Vector::zeros(wl.len());
                    for g in &comp.groups {
                        match g.p {
                            Norm::Inf => g.idx.iter().for_each(|&i| b[i] = if wl[i] == 0.0 { 0.0 } else { wl[i].signum() }),
                            Norm::Two => {
                                let nrm = g.idx.iter().map(|&i| wl[i] * wl[i]).sum::<f64>().sqrt();
                                if nrm > 0.0 {
                                    g.idx.iter().for_each(|&i| b[i] = wl[i] / nrm);
                                }
                            }
                            Norm::One => {
                                if let Some(&i) = g.idx.iter().max_by(|&&a, &&c| wl[a].abs().total_cmp(&wl[c].abs())) {
                                    if wl[i] != 0.0 {
                                        b[i] = wl[i].signum();
                                    }
                                }
                            }
                        }
                    }
                    b
                }
            };
            for (k, &i) in comp.coefs.iter().enumerate() {
                beta[i] = bl[k];
            }
        }
        let x = &self.center + &self.generators * beta;
        Ok((l.dot(&x), x))
    }

    /// Support evaluated by the conic solver on every block, bypassing the
    /// closed form. Used to cross-check the two routes.
    pub fn support_via_solver(&self, l: &Vector) -> Result<f64, SetError> {
        self.check_dir(l)?;
        let w = self.generators.tr_mul(l);
        Ok(l.dot(&self.center) + self.coef_support_impl(&w, true)?)
    }

    pub fn support_batch(&self, dirs: &[Vector], exec: Execution) -> Result<Vec<f64>, SetError> {
        exec.map(dirs, |l| self.support(l)).into_iter().collect()
    }

    /// Upper bounds on `|β_k|` for every coefficient. All are 1 unless
    /// `tighten`, in which case constrained coefficients get
    /// `max |β_k|` over the feasible coefficient set (two support problems).
    pub fn coefficient_bounds(&self, tighten: bool) -> Result<Vec<f64>, SetError> {
        let mut bounds = vec![1.0; self.num_generators()];
        if !tighten {
            return Ok(bounds);
        }
        let st = self.structure();
        if !st.consistent {
            return Err(SetError::Infeasible);
        }
        for comp in &st.components {
            let Some(red) = &comp.reduction else { continue };
            for (l, &i) in comp.coefs.iter().enumerate() {
                let mut e = Vector::zeros(comp.coefs.len());
                e[l] = 1.0;
                let hi = program::support_solver(&comp.groups, red, &e)?;
                let lo = -program::support_solver(&comp.groups, red, &(-e))?;
                bounds[i] = hi.abs().max(lo.abs()).min(1.0);
            }
        }
        Ok(bounds)
    }

    /// Gauge-based membership: `t* = min t` with `Gβ = x − c`, `Aβ = b`
    /// and every group norm at most `t`.
    pub fn contains_point(&self, x: &Vector, tol: f64) -> Result<Membership, SetError> {
        if x.len() != self.dim() {
            return Err(SetError::DimensionMismatch {
                context: "membership point",
                expected: self.dim(),
                found: x.len(),
            });
        }
        let d = x - &self.center;
        let m = self.num_generators();
        let r = self.num_constraints();
        let n = self.dim();
        let mut a = Matrix::zeros(n + r, m);
        a.view_mut((0, 0), (n, m)).copy_from(&self.generators);
        let mut b = Vector::zeros(n + r);
        b.rows_mut(0, n).copy_from(&d);
        if let Some(con) = &self.constraint {
            a.view_mut((n, 0), (r, m)).copy_from(&con.a);
            b.rows_mut(n, r).copy_from(&con.b);
        }
        let margin = match AffineReduction::new(&a, &b) {
            None => f64::INFINITY,
            Some(red) => program::gauge_solver(&program::global_groups(&self.groups), &red)?,
        };
        Ok(Membership { member: margin <= 1.0 + tol, margin })
    }

    pub fn interval_hull(&self) -> Result<IntervalBox, SetError> {
        self.interval_hull_with(Execution::default())
    }

    pub fn interval_hull_with(&self, exec: Execution) -> Result<IntervalBox, SetError> {
        let n = self.dim();
        let vals: Result<Vec<f64>, SetError> = exec
            .map_range(2 * n, |k| {
                let mut l = Vector::zeros(n);
                l[k / 2] = if k % 2 == 0 { 1.0 } else { -1.0 };
                self.support(&l)
            })
            .into_iter()
            .collect();
        let vals = vals?;
        let hi = Vector::from_fn(n, |i, _| vals[2 * i]);
        let lo = Vector::from_fn(n, |i, _| -vals[2 * i + 1]);
        // Solver round-off can invert degenerate (flat) coordinates slightly.
        let mid = (&lo + &hi) * 0.5;
        let lo = lo.zip_map(&mid, f64::min);
        let hi = hi.zip_map(&mid, f64::max);
        IntervalBox::new(lo, hi)
    }

    /// Image `R·E`.
    pub fn linear_map(&self, r: &Matrix) -> Result<Ccg, SetError> {
        if r.ncols() != self.dim() {
            return Err(SetError::DimensionMismatch {
                context: "linear map columns",
                expected: self.dim(),
                found: r.ncols(),
            });
        }
        let out = Ccg {
            center: r * &self.center,
            generators: r * &self.generators,
            groups: self.groups.clone(),
            constraint: self.constraint.clone(),
            structure: self.structure.clone(),
        };
        Ok(out)
    }

    pub fn translate(&self, v: &Vector) -> Result<Ccg, SetError> {
        if v.len() != self.dim() {
            return Err(SetError::DimensionMismatch {
                context: "translation",
                expected: self.dim(),
                found: v.len(),
            });
        }
        let mut out = self.clone();
        out.center += v;
        Ok(out)
    }

    /// `E ⊕ F` by block-diagonal coefficient augmentation.
    pub fn minkowski_sum(&self, other: &Ccg) -> Result<Ccg, SetError> {
        if other.dim() != self.dim() {
            return Err(SetError::DimensionMismatch {
                context: "Minkowski sum",
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let generators = hcat(&[&self.generators, &other.generators]);
        Ok(Self::from_parts(
            &self.center + &other.center,
            generators,
            concat_groups(&[self, other]),
            blkdiag_constraints(&[self, other]),
        ))
    }

    /// `E × F` with separate coefficient blocks.
    pub fn cartesian_product(&self, other: &Ccg) -> Ccg {
        let (n1, n2) = (self.dim(), other.dim());
        let (m1, m2) = (self.num_generators(), other.num_generators());
        let mut center = Vector::zeros(n1 + n2);
        center.rows_mut(0, n1).copy_from(&self.center);
        center.rows_mut(n1, n2).copy_from(&other.center);
        let mut g = Matrix::zeros(n1 + n2, m1 + m2);
        g.view_mut((0, 0), (n1, m1)).copy_from(&self.generators);
        g.view_mut((n1, m1), (n2, m2)).copy_from(&other.generators);
        Self::from_parts(center, g, concat_groups(&[self, other]), blkdiag_constraints(&[self, other]))
    }
}

pub(crate) fn hcat(blocks: &[&Matrix]) -> Matrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut off = 0;
    for b in blocks {
        out.view_mut((0, off), (rows, b.ncols())).copy_from(*b);
        off += b.ncols();
    }
    out
}

pub(crate) fn concat_groups(sets: &[&Ccg]) -> Vec<NormGroup> {
    let mut out = Vec::new();
    let mut off = 0;
    for s in sets {
        out.extend(s.groups.iter().map(|g| g.shifted(off)));
        off += s.num_generators();
    }
    out
}

/// Block-diagonal constraint over the concatenated coefficients.
pub(crate) fn blkdiag_constraints(sets: &[&Ccg]) -> Option<Constraint> {
    let rows: usize = sets.iter().map(|s| s.num_constraints()).sum();
    if rows == 0 {
        return None;
    }
    let cols: usize = sets.iter().map(|s| s.num_generators()).sum();
    let mut a = Matrix::zeros(rows, cols);
    let mut b = Vector::zeros(rows);
    let (mut r0, mut c0) = (0, 0);
    for s in sets {
        if let Some(con) = &s.constraint {
            a.view_mut((r0, c0), con.a.shape()).copy_from(&con.a);
            b.rows_mut(r0, con.b.len()).copy_from(&con.b);
            r0 += con.a.nrows();
        }
        c0 += s.num_generators();
    }
    Some(Constraint { a, b })
}

/// Plain-data form used for serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcgData {
    pub center: Vec<f64>,
    /// Row-major: one inner list per state coordinate.
    pub generators: Vec<Vec<f64>>,
    pub groups: Vec<NormGroup>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<(usize, usize)>,
}

pub(crate) fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], cols_if_empty: usize) -> Result<Matrix, SetError> {
    let cols = rows.first().map_or(cols_if_empty, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        return Err(SetError::InvalidGroups("ragged matrix rows".into()));
    }
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl From<&Ccg> for CcgData {
    fn from(s: &Ccg) -> Self {
        CcgData {
            center: s.center.iter().copied().collect(),
            generators: rows_of(&s.generators),
            groups: s.groups.clone(),
            a: s.constraint.as_ref().map(|c| rows_of(&c.a)),
            b: s.constraint.as_ref().map(|c| c.b.iter().copied().collect()),
            shape: None,
        }
    }
}

impl TryFrom<CcgData> for Ccg {
    type Error = SetError;

    fn try_from(d: CcgData) -> Result<Self, SetError> {
        let center = Vector::from_vec(d.center);
        let m: usize = d.groups.iter().map(|g| g.len()).sum();
        let generators = if d.generators.is_empty() {
            Matrix::zeros(center.len(), m)
        } else {
            matrix_from_rows(&d.generators, m)?
        };
        let constraint = match (d.a, d.b) {
            (Some(a), Some(b)) => Some(Constraint {
                a: matrix_from_rows(&a, generators.ncols())?,
                b: Vector::from_vec(b),
            }),
            (None, None) => None,
            _ => return Err(SetError::InvalidGroups("A and b must be given together".into())),
        };
        Ccg::new(center, generators, d.groups, constraint)
    }
}

impl Serialize for Ccg {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CcgData::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ccg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let data = CcgData::deserialize(d)?;
        Ccg::try_from(data).map_err(serde::de::Error::custom)
    }
}
