//! Generator bookkeeping: lossless compaction and outer order reduction.
//!
//! Only coefficients in blocks untouched by equality constraints are ever
//! rewritten; constrained blocks are carried over verbatim.

use std::collections::HashMap;

use super::ccg::{hcat, Ccg, Constraint};
use super::norm::{Norm, NormGroup};
use crate::error::SetError;
use crate::numeric::{psd_factor, Matrix, Vector};

// Quantization used to recognise parallel generators.
const PARALLEL_QUANT: f64 = 1e11;
// Relative Frobenius distance under which two Gram shapes count as equal.
const SHAPE_TOL: f64 = 1e-12;

/// Free (unconstrained) part of a set, split by kind.
struct FreeParts {
    singles: Vec<Vector>,
    ones: Vec<Matrix>,
    twos: Vec<Matrix>,
}

struct Kept {
    generators: Matrix,
    groups: Vec<NormGroup>,
    constraint: Option<Constraint>,
}

fn split(set: &Ccg) -> (Kept, FreeParts) {
    let n = set.dim();
    let mask = set.constrained_mask();
    let g = set.generators();
    let kept_cols: Vec<usize> = (0..set.num_generators()).filter(|&i| mask[i]).collect();
    let mut new_pos = vec![usize::MAX; set.num_generators()];
    for (k, &i) in kept_cols.iter().enumerate() {
        new_pos[i] = k;
    }
    let kept_gen = Matrix::from_fn(n, kept_cols.len(), |r, c| g[(r, kept_cols[c])]);
    let mut kept_groups = Vec::new();
    let mut parts = FreeParts { singles: vec![], ones: vec![], twos: vec![] };
    for grp in set.groups() {
        if mask[grp.indices[0]] {
            kept_groups.push(NormGroup::new(grp.indices.iter().map(|&i| new_pos[i]).collect(), grp.p));
            continue;
        }
        let cols: Vec<Vector> = grp
            .indices
            .iter()
            .map(|&i| g.column(i).into_owned())
            .filter(|c| c.iter().any(|&v| v != 0.0))
            .collect();
        if cols.is_empty() {
            continue;
        }
        match grp.p {
            // A free ∞ group is a product of segments.
            Norm::Inf => parts.singles.extend(cols),
            _ if cols.len() == 1 => parts.singles.extend(cols),
            Norm::One => parts.ones.push(columns_to_matrix(n, &cols)),
            Norm::Two => parts.twos.push(columns_to_matrix(n, &cols)),
        }
    }
    let constraint = set.constraint().and_then(|con| {
        let rows: Vec<usize> = (0..con.a.nrows())
            .filter(|&r| kept_cols.iter().any(|&j| con.a[(r, j)] != 0.0))
            .collect();
        if rows.is_empty() {
            return None;
        }
        Some(Constraint {
            a: Matrix::from_fn(rows.len(), kept_cols.len(), |r, c| con.a[(rows[r], kept_cols[c])]),
            b: Vector::from_fn(rows.len(), |r, _| con.b[rows[r]]),
        })
    });
    (Kept { generators: kept_gen, groups: kept_groups, constraint }, parts)
}

fn columns_to_matrix(n: usize, cols: &[Vector]) -> Matrix {
    Matrix::from_fn(n, cols.len(), |r, c| cols[c][r])
}

fn assemble(center: Vector, kept: Kept, parts: FreeParts) -> Ccg {
    let mut blocks = vec![kept.generators];
    let mut groups = kept.groups;
    let mut off = blocks[0].ncols();
    for (p, mats) in [(Norm::One, parts.ones), (Norm::Two, parts.twos)] {
        for m in mats {
            groups.push(NormGroup::range(off, m.ncols(), p));
            off += m.ncols();
            blocks.push(m);
        }
    }
    let n = center.len();
    for (k, _) in parts.singles.iter().enumerate() {
        groups.push(NormGroup::singleton(off + k, Norm::Inf));
    }
    blocks.push(columns_to_matrix(n, &parts.singles));
    let refs: Vec<&Matrix> = blocks.iter().collect();
    let mut generators = hcat(&refs);
    if generators.nrows() != n {
        generators = Matrix::zeros(n, 0);
    }
    let total = generators.ncols();
    let constraint = kept.constraint.map(|c| {
        let mut a = Matrix::zeros(c.a.nrows(), total);
        a.view_mut((0, 0), (c.a.nrows(), c.a.ncols())).copy_from(&c.a);
        Constraint { a, b: c.b }
    });
    Ccg::from_parts(center, generators, groups, constraint)
}

/// Merges exactly parallel segments (up to quantization).
fn merge_parallel(singles: Vec<Vector>) -> Vec<Vector> {
    let mut index: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut dirs: Vec<(Vector, f64)> = Vec::new();
    for g in singles {
        let norm = g.norm();
        if norm == 0.0 {
            continue;
        }
        let mut u = g / norm;
        let lead = u.iamax();
        if u[lead] < 0.0 {
            u = -u;
        }
        let key: Vec<i64> = u.iter().map(|v| (v * PARALLEL_QUANT).round() as i64).collect();
        match index.get(&key) {
            Some(&k) => dirs[k].1 += norm,
            None => {
                index.insert(key, dirs.len());
                dirs.push((u, norm));
            }
        }
    }
    dirs.into_iter().map(|(u, len)| u * len).collect()
}

/// Replaces wide 2-groups by an `n`-column factor, demotes rank-one groups to
/// segments and merges groups with proportional Gram matrices.
fn compact_twos(n: usize, twos: Vec<Matrix>, singles: &mut Vec<Vector>) -> Vec<Matrix> {
    struct Class {
        shape: Matrix,
        scale: f64,
        members: Vec<Matrix>,
    }
    let mut classes: Vec<Class> = Vec::new();
    for g in twos {
        let g = if g.ncols() > n { psd_factor(&(&g * g.transpose())) } else { g };
        match g.ncols() {
            0 => continue,
            1 => {
                singles.push(g.column(0).into_owned());
                continue;
            }
            _ => {}
        }
        let q = &g * g.transpose();
        let tr = q.trace();
        if tr <= 0.0 {
            continue;
        }
        let shape = q / tr;
        match classes.iter_mut().find(|c| (&c.shape - &shape).norm() <= SHAPE_TOL) {
            Some(c) => {
                c.scale += tr.sqrt();
                c.members.push(g);
            }
            None => classes.push(Class { shape, scale: tr.sqrt(), members: vec![g] }),
        }
    }
    classes
        .into_iter()
        .map(|mut c| {
            if c.members.len() == 1 {
                c.members.pop().unwrap()
            } else {
                psd_factor(&c.shape) * c.scale
            }
        })
        .collect()
}

/// Minimum-trace outer ellipsoid of `E(q1) ⊕ E(q2)`.
fn outer_sum(q1: &Matrix, q2: &Matrix) -> Matrix {
    let (t1, t2) = (q1.trace(), q2.trace());
    if t1 <= 0.0 {
        return q2.clone();
    }
    if t2 <= 0.0 {
        return q1.clone();
    }
    let p = (t1 / t2).sqrt();
    q1 * (1.0 + 1.0 / p) + q2 * (1.0 + p)
}

impl Ccg {
    /// Lossless simplification of the free coefficient blocks.
    ///
    /// Zero generators are dropped, free ∞ groups split into segments,
    /// parallel segments merged, wide 2-groups refactored to `n` columns and
    /// 2-groups of proportional shape merged. Constrained blocks are kept.
    pub fn compact(&self) -> Ccg {
        let n = self.dim();
        let (kept, mut parts) = split(self);
        let twos = std::mem::take(&mut parts.twos);
        parts.twos = compact_twos(n, twos, &mut parts.singles);
        parts.singles = merge_parallel(std::mem::take(&mut parts.singles));
        assemble(self.center().clone(), kept, parts)
    }

    /// Outer approximation with at most `target` generators where possible.
    ///
    /// After [`Ccg::compact`], free 2-groups are merged into one minimum-trace
    /// outer ellipsoid, then the smallest segments are folded into an
    /// axis-aligned box. If the constrained block alone exceeds the target
    /// the smallest achievable set is returned.
    pub fn reduce_order(&self, target: usize) -> Result<Ccg, SetError> {
        if self.num_generators() <= target {
            return Ok(self.clone());
        }
        let n = self.dim();
        let compacted = self.compact();
        if compacted.num_generators() <= target {
            return Ok(compacted);
        }
        let (kept, mut parts) = split(&compacted);
        let fixed = kept.generators.ncols();
        if parts.singles.is_empty() && parts.ones.is_empty() && parts.twos.is_empty() {
            return Err(SetError::CannotReduce);
        }
        let budget = target.saturating_sub(fixed);

        if parts.twos.len() > 1 {
            let q = parts
                .twos
                .iter()
                .map(|g| g * g.transpose())
                .reduce(|a, b| outer_sum(&a, &b))
                .unwrap();
            parts.twos = compact_twos(n, vec![psd_factor(&q)], &mut parts.singles);
        }

        let count = |p: &FreeParts| {
            p.singles.len()
                + p.ones.iter().map(|m| m.ncols()).sum::<usize>()
                + p.twos.iter().map(|m| m.ncols()).sum::<usize>()
        };
        if count(&parts) <= budget {
            return Ok(assemble(compacted.center().clone(), kept, parts));
        }

        // Fold into a box: 1-groups first (their hull is cheap), then the
        // smallest segments, and finally the ellipsoid if still over budget.
        let mut half = Vector::zeros(n);
        for m in parts.ones.drain(..) {
            for i in 0..n {
                half[i] += m.row(i).iter().map(|v| v.abs()).fold(0.0, f64::max);
            }
        }
        let two_cols: usize = parts.twos.iter().map(|m| m.ncols()).sum();
        let fold_twos = budget < two_cols + n;
        let keep_singles = if fold_twos { budget.saturating_sub(n) } else { budget - two_cols - n };
        if fold_twos {
            for m in parts.twos.drain(..) {
                let q = &m * m.transpose();
                for i in 0..n {
                    half[i] += q[(i, i)].max(0.0).sqrt();
                }
            }
        }
        let mut singles = std::mem::take(&mut parts.singles);
        singles.sort_by(|a, b| {
            let score = |g: &Vector| g.lp_norm(1) - g.amax();
            score(b).total_cmp(&score(a))
        });
        let keep = keep_singles.min(singles.len());
        for g in singles.drain(keep..) {
            for i in 0..n {
                half[i] += g[i].abs();
            }
        }
        for i in 0..n {
            if half[i] > 0.0 {
                let mut e = Vector::zeros(n);
                e[i] = half[i];
                singles.push(e);
            }
        }
        parts.singles = merge_parallel(singles);
        Ok(assemble(compacted.center().clone(), kept, parts))
    }
}
