//! Coefficient-space programs: decomposition into independent blocks and
//! the cone encodings of the support and gauge problems.

use super::conic::{self, AffineReduction, ConeProgram, Cones};
use super::norm::{Norm, NormGroup};
use crate::error::SetError;
use crate::numeric::{Matrix, Vector};

/// A group with indices local to its component.
#[derive(Debug, Clone)]
pub(crate) struct LocalGroup {
    pub p: Norm,
    pub idx: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct Component {
    /// Global coefficient positions, increasing.
    pub coefs: Vec<usize>,
    pub groups: Vec<LocalGroup>,
    /// Present when equality rows touch this component.
    pub reduction: Option<AffineReduction>,
}

/// Independent coefficient blocks of a CCG.
#[derive(Debug, Clone)]
pub(crate) struct Structure {
    pub components: Vec<Component>,
    pub consistent: bool,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        parent[ra.max(rb)] = ra.min(rb);
    }
}

impl Structure {
    pub fn build(m: usize, groups: &[NormGroup], constraint: Option<(&Matrix, &Vector)>) -> Self {
        let mut parent: Vec<usize> = (0..m).collect();
        for g in groups {
            for w in g.indices.windows(2) {
                union(&mut parent, w[0], w[1]);
            }
        }
        let mut consistent = true;
        let mut row_touch = vec![false; m];
        if let Some((a, b)) = constraint {
            for r in 0..a.nrows() {
                let nz: Vec<usize> = (0..m).filter(|&j| a[(r, j)] != 0.0).collect();
                if nz.is_empty() && b[r].abs() > 1e-12 * (1.0 + b.amax()) {
                    consistent = false;
                }
                for &j in &nz {
                    row_touch[j] = true;
                }
                for w in nz.windows(2) {
                    union(&mut parent, w[0], w[1]);
                }
            }
        }

        let mut root_slot = vec![usize::MAX; m];
        let mut members: Vec<Vec<usize>> = Vec::new();
        for i in 0..m {
            let r = find(&mut parent, i);
            if root_slot[r] == usize::MAX {
                root_slot[r] = members.len();
                members.push(Vec::new());
            }
            members[root_slot[r]].push(i);
        }

        let mut local_pos = vec![0usize; m];
        for coefs in &members {
            for (k, &i) in coefs.iter().enumerate() {
                local_pos[i] = k;
            }
        }
        let mut comp_groups: Vec<Vec<LocalGroup>> = vec![Vec::new(); members.len()];
        for g in groups {
            let slot = root_slot[find(&mut parent, g.indices[0])];
            comp_groups[slot].push(LocalGroup {
                p: g.p,
                idx: g.indices.iter().map(|&i| local_pos[i]).collect(),
            });
        }

        let mut components = Vec::with_capacity(members.len());
        for (coefs, groups) in members.into_iter().zip(comp_groups) {
            let reduction = match constraint {
                Some((a, b)) if coefs.iter().any(|&i| row_touch[i]) => {
                    let rows: Vec<usize> = (0..a.nrows())
                        .filter(|&r| coefs.iter().any(|&j| a[(r, j)] != 0.0))
                        .collect();
                    let sub = Matrix::from_fn(rows.len(), coefs.len(), |r, c| a[(rows[r], coefs[c])]);
                    let rhs = Vector::from_fn(rows.len(), |r, _| b[rows[r]]);
                    match AffineReduction::new(&sub, &rhs) {
                        Some(red) => Some(red),
                        None => {
                            consistent = false;
                            None
                        }
                    }
                }
                _ => None,
            };
            components.push(Component { coefs, groups, reduction });
        }
        Structure { components, consistent }
    }
}

enum Mode<'a> {
    Support(&'a Vector),
    Gauge,
}

/// Cone encoding over `y = (z, u, t)` with `β = β0 + N z`.
fn encode(groups: &[LocalGroup], red: &AffineReduction, mode: Mode<'_>) -> ConeProgram {
    let nz = red.dim();
    let n_u: usize = groups.iter().filter(|g| g.p == Norm::One).map(|g| g.idx.len()).sum();
    let gauge = matches!(mode, Mode::Gauge);
    let t_col = nz + n_u;
    let nvar = nz + n_u + usize::from(gauge);
    let r_h = if gauge { 0.0 } else { 1.0 };

    let lp_rows: usize = groups
        .iter()
        .map(|g| match g.p {
            Norm::Inf => 2 * g.idx.len(),
            Norm::One => 2 * g.idx.len() + 1,
            Norm::Two => 0,
        })
        .sum();
    let soc: Vec<usize> = groups.iter().filter(|g| g.p == Norm::Two).map(|g| g.idx.len() + 1).collect();
    let rows = lp_rows + soc.iter().sum::<usize>();
    let mut g = Matrix::zeros(rows, nvar);
    let mut h = Vector::zeros(rows);
    let b0 = &red.particular;
    let n = &red.null;

    let mut row = 0;
    let mut u_next = nz;
    for grp in groups {
        match grp.p {
            Norm::Inf => {
                for &i in &grp.idx {
                    for sign in [1.0, -1.0] {
                        for k in 0..nz {
                            g[(row, k)] = sign * n[(i, k)];
                        }
                        if gauge {
                            g[(row, t_col)] = -1.0;
                        }
                        h[row] = r_h - sign * b0[i];
                        row += 1;
                    }
                }
            }
            Norm::One => {
                let first_u = u_next;
                for &i in &grp.idx {
                    for sign in [1.0, -1.0] {
                        for k in 0..nz {
                            g[(row, k)] = sign * n[(i, k)];
                        }
                        g[(row, u_next)] = -1.0;
                        h[row] = -sign * b0[i];
                        row += 1;
                    }
                    u_next += 1;
                }
                for u in first_u..u_next {
                    g[(row, u)] = 1.0;
                }
                if gauge {
                    g[(row, t_col)] = -1.0;
                }
                h[row] = r_h;
                row += 1;
            }
            Norm::Two => {}
        }
    }
    for grp in groups.iter().filter(|g| g.p == Norm::Two) {
        if gauge {
            g[(row, t_col)] = -1.0;
        }
        h[row] = r_h;
        row += 1;
        for &i in &grp.idx {
            for k in 0..nz {
                g[(row, k)] = -n[(i, k)];
            }
            h[row] = b0[i];
            row += 1;
        }
    }
    debug_assert_eq!(row, rows);

    let mut c = Vector::zeros(nvar);
    match mode {
        Mode::Support(w) => {
            let nw = n.tr_mul(w);
            for k in 0..nz {
                c[k] = -nw[k];
            }
        }
        Mode::Gauge => c[t_col] = 1.0,
    }
    ConeProgram { c, g, h, cones: Cones { lp: lp_rows, soc } }
}

/// `max wᵀβ` over `{β0 + Nz : group norms ≤ 1}`.
pub(crate) fn support_solver(groups: &[LocalGroup], red: &AffineReduction, w: &Vector) -> Result<f64, SetError> {
    let base = w.dot(&red.particular);
    if red.dim() == 0 {
        return Ok(base);
    }
    let nw = red.null.tr_mul(w);
    let scale = nw.norm();
    if scale <= 1e-300 {
        return Ok(base);
    }
    let unit = w / scale;
    let sol = conic::solve(&encode(groups, red, Mode::Support(&unit)))?;
    Ok(base - scale * sol.value())
}

/// `min t` over `{β0 + Nz : group norms ≤ t}`.
pub(crate) fn gauge_solver(groups: &[LocalGroup], red: &AffineReduction) -> Result<f64, SetError> {
    if red.dim() == 0 {
        let b0 = &red.particular;
        return Ok(groups
            .iter()
            .map(|g| g.p.eval(g.idx.iter().map(|&i| b0[i])))
            .fold(0.0, f64::max));
    }
    let sol = conic::solve(&encode(groups, red, Mode::Gauge))?;
    Ok(sol.value().max(0.0))
}

/// Maximizer of `wᵀβ` in local coordinates (interior-point accuracy).
pub(crate) fn support_argmax(groups: &[LocalGroup], red: &AffineReduction, w: &Vector) -> Result<Vector, SetError> {
    if red.dim() == 0 {
        return Ok(red.particular.clone());
    }
    let nw = red.null.tr_mul(w);
    let scale = nw.norm();
    if scale <= 1e-300 {
        return Ok(red.particular.clone());
    }
    let sol = conic::solve(&encode(groups, red, Mode::Support(&(w / scale))))?;
    Ok(&red.particular + &red.null * sol.x.rows(0, red.dim()))
}

/// Minimizer of the gauge: `(t*, β*)` in local coordinates.
pub(crate) fn gauge_point(groups: &[LocalGroup], red: &AffineReduction) -> Result<(f64, Vector), SetError> {
    if red.dim() == 0 {
        return Ok((gauge_solver(groups, red)?, red.particular.clone()));
    }
    let sol = conic::solve(&encode(groups, red, Mode::Gauge))?;
    let nz = red.dim();
    let beta = &red.particular + &red.null * sol.x.rows(0, nz);
    let t = groups.iter().map(|g| g.p.eval(g.idx.iter().map(|&i| beta[i]))).fold(0.0, f64::max);
    Ok((t, beta))
}

/// Groups re-expressed over the full coefficient vector.
pub(crate) fn global_groups(groups: &[NormGroup]) -> Vec<LocalGroup> {
    groups.iter().map(|g| LocalGroup { p: g.p, idx: g.indices.clone() }).collect()
}
