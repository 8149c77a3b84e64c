//! Random instances and set-calculus invariants shared by the property suite
//! and the acceptance runner.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reachset::numeric::{Matrix, Vector};
use reachset::sets::{Ccg, Cmcg, Constraint, Norm, NormGroup};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss<R: Rng>(r: &mut R) -> f64 {
    reachset::stats::standard_normal(r)
}

pub fn rand_vec<R: Rng>(r: &mut R, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| gauss(r))
}

pub fn rand_mat<R: Rng>(r: &mut R, n: usize, m: usize) -> Matrix {
    Matrix::from_fn(n, m, |_, _| gauss(r))
}

pub fn unit<R: Rng>(r: &mut R, n: usize) -> Vector {
    let v = rand_vec(r, n);
    let norm = v.norm().max(1e-12);
    v / norm
}

/// Random partition of `0..m` into groups with random norms.
pub fn rand_groups<R: Rng>(r: &mut R, m: usize) -> Vec<NormGroup> {
    let mut groups = Vec::new();
    let mut i = 0;
    while i < m {
        let len = r.random_range(1..=(m - i).min(3));
        let p = match r.random_range(0..3) {
            0 => Norm::One,
            1 => Norm::Two,
            _ => Norm::Inf,
        };
        groups.push(NormGroup::range(i, len, p));
        i += len;
    }
    groups
}

/// A point strictly inside every group ball (gauge `scale`).
fn interior_point<R: Rng>(r: &mut R, groups: &[NormGroup], m: usize, scale: f64) -> Vector {
    let mut beta = Vector::zeros(m);
    for g in groups {
        let raw: Vec<f64> = g.indices.iter().map(|_| r.random_range(-1.0..1.0)).collect();
        let gauge = g.p.eval(raw.iter().copied()).max(1e-12);
        for (k, &i) in g.indices.iter().enumerate() {
            beta[i] = scale * raw[k] / gauge.max(1.0);
        }
    }
    beta
}

/// Random CCG of dimension `n` with up to `max_gens` generators and,
/// with probability `p_constrained`, one or two feasible equality constraints.
pub fn rand_ccg<R: Rng>(r: &mut R, n: usize, max_gens: usize, p_constrained: f64) -> Ccg {
    let constrained = r.random_bool(p_constrained);
    let m = r.random_range(1..=max_gens);
    let groups = rand_groups(r, m);
    let center = rand_vec(r, n);
    let gens = rand_mat(r, n, m);
    let constraint = (constrained && m >= 2).then(|| {
        let rows = r.random_range(1..=(m - 1).min(2));
        let a = rand_mat(r, rows, m);
        let beta0 = interior_point(r, &groups, m, 0.5);
        Constraint { b: &a * beta0, a }
    });
    Ccg::new(center, gens, groups, constraint).expect("feasible by construction")
}

pub fn rand_zonotope<R: Rng>(r: &mut R, n: usize, max_gens: usize) -> Ccg {
    let m = r.random_range(1..=max_gens);
    Ccg::zonotope(rand_vec(r, n), rand_mat(r, n, m)).expect("zonotope")
}

fn close(a: f64, b: f64, tol: f64) -> Result<(), String> {
    if (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs())) {
        Ok(())
    } else {
        Err(format!("{a} vs {b} (tol {tol:e})"))
    }
}

/// `h_{X⊕Y}(l) = h_X(l) + h_Y(l)`.
pub fn additivity(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.random_range(1..=3);
    let x = rand_ccg(&mut r, n, 5, 0.5);
    let y = rand_ccg(&mut r, n, 5, 0.5);
    let s = x.minkowski_sum(&y).map_err(|e| e.to_string())?;
    for _ in 0..5 {
        let l = unit(&mut r, n);
        let (hx, hy, hs) = (sup(&x, &l)?, sup(&y, &l)?, sup(&s, &l)?);
        close(hs, hx + hy, 1e-6)?;
    }
    Ok(())
}

/// `h_{RX}(l) = h_X(Rᵀl)`.
pub fn linear_map_commutes(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.random_range(1..=3);
    let k = r.random_range(1..=3);
    let x = rand_ccg(&mut r, n, 5, 0.5);
    let map = rand_mat(&mut r, k, n);
    let y = x.linear_map(&map).map_err(|e| e.to_string())?;
    for _ in 0..5 {
        let l = unit(&mut r, k);
        close(sup(&y, &l)?, sup(&x, &(map.transpose() * &l))?, 1e-6)?;
    }
    Ok(())
}

/// Closed-form zonotope support against the conic program.
pub fn zonotope_closed_form(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.random_range(1..=4);
    let z = rand_zonotope(&mut r, n, 8);
    for _ in 0..5 {
        let l = unit(&mut r, n);
        let by_hand = l.dot(z.center()) + (z.generators().transpose() * &l).abs().sum();
        let solver = z.support_via_solver(&l).map_err(|e| e.to_string())?;
        close(sup(&z, &l)?, by_hand, 1e-12)?;
        close(solver, by_hand, 1e-8)?;
    }
    Ok(())
}

/// Support points are members, points pushed past them are not, and sampled
/// members never exceed the support.
pub fn membership_support(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.random_range(1..=3);
    let x = rand_ccg(&mut r, n, 5, 0.5);
    let sampler = x.coefficient_sampler().map_err(|e| e.to_string())?;
    for _ in 0..3 {
        let l = unit(&mut r, n);
        let (h, p) = x.support_point(&l).map_err(|e| e.to_string())?;
        close(l.dot(&p), h, 1e-6)?;
        let on = x.contains_point(&p, 1e-6).map_err(|e| e.to_string())?;
        if !on.member {
            return Err(format!("support point has gauge {}", on.margin));
        }
        let step = 1e-3 * (1.0 + h.abs());
        let off = x.contains_point(&(&p + &l * step), 1e-9).map_err(|e| e.to_string())?;
        if off.member {
            return Err(format!("point beyond the support is a member (gauge {})", off.margin));
        }
        for _ in 0..5 {
            let y = sampler.point(&sampler.sample(&mut r));
            if l.dot(&y) > h + 1e-6 * (1.0 + h.abs()) {
                return Err(format!("sample exceeds support: {} > {h}", l.dot(&y)));
            }
            let m = x.contains_point(&y, 1e-6).map_err(|e| e.to_string())?;
            if !m.member {
                return Err(format!("sampled point has gauge {}", m.margin));
            }
        }
    }
    Ok(())
}

/// Order reduction never loses support.
pub fn reduce_superset(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.random_range(1..=3);
    // Constrained blocks are never reduced, so keep some free generators.
    let free = rand_ccg(&mut r, n, 8, 0.0);
    let x = rand_ccg(&mut r, n, 4, 0.5).minkowski_sum(&free).map_err(|e| e.to_string())?;
    let target = r.random_range(n..=n + 4);
    let red = x.reduce_order(target).map_err(|e| e.to_string())?;
    for _ in 0..8 {
        let l = unit(&mut r, n);
        let (h, hr) = (sup(&x, &l)?, sup(&red, &l)?);
        if hr < h - 1e-8 * (1.0 + h.abs()) {
            return Err(format!("reduced support {hr} below {h}"));
        }
    }
    Ok(())
}

/// `vec`/`unvec` round trip and generator-matrix layout of a CMCG.
pub fn cmcg_round_trip(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let (n, p) = (r.random_range(1..=3), r.random_range(1..=3));
    let k = r.random_range(1..=4);
    let center = rand_mat(&mut r, n, p);
    let gens: Vec<Matrix> = (0..k).map(|_| rand_mat(&mut r, n, p)).collect();
    let set = Cmcg::new(center.clone(), &gens, rand_groups(&mut r, k), None).map_err(|e| e.to_string())?;
    let theta = rand_mat(&mut r, n, p);
    if (set.unvec(&set.vec(&theta)) - &theta).abs().max() != 0.0 {
        return Err("vec round trip".into());
    }
    if set.center_matrix() != center || set.generator_matrices() != gens {
        return Err("generator matrices changed".into());
    }
    let back = Cmcg::from_vectorized((n, p), set.inner().clone()).map_err(|e| e.to_string())?;
    let l = rand_mat(&mut r, n, p);
    close(back.support(&l).map_err(|e| e.to_string())?, set.support(&l).map_err(|e| e.to_string())?, 1e-12)
}

fn sup(x: &Ccg, l: &Vector) -> Result<f64, String> {
    x.support(l).map_err(|e| e.to_string())
}

pub type Property = fn(u64) -> Result<(), String>;

/// Every invariant of the suite, by name.
pub const PROPERTIES: [(&str, Property); 6] = [
    ("support additivity under Minkowski sum", additivity),
    ("linear map commutes with support", linear_map_commutes),
    ("zonotope closed form matches solver", zonotope_closed_form),
    ("membership consistent with support", membership_support),
    ("reduce_order is a superset", reduce_superset),
    ("CMCG vec round trip", cmcg_round_trip),
];

pub const PROPERTY_CASES: u32 = 128;
