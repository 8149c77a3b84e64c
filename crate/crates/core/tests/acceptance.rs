//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so every line is printed; exits nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use nalgebra::SVD;
use rand::Rng;
use reachset::harness::{
    run_experiment1, run_experiment2, run_experiment3, simulate_trajectory, ExperimentConfig, SystemRecipe,
};
use reachset::identification::{
    box_noise, build_data_equation, gaussian_param_set, mixed_param_set, pullback, NoiseSpec,
};
use reachset::numeric::{Matrix, Vector};
use reachset::par::Execution;
use reachset::propagation::{
    cmcg_ccg_product, gg_gap_bound, gg_supports, product_containment_check, GaussianMode, ProductConfig, CORNER_LIMIT,
};
use reachset::sets::{Ccg, Cmcg, Norm, NormGroup};
use reachset::stats::{chi2_quantile, volume_inflation_ratio};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn scalar_system() -> reachset::harness::SystemSpec {
    SystemRecipe::Scalar { a: 0.8, b: 0.5 }.build().expect("scalar system")
}

// 1. Gaussian CMCG boundary equals the likelihood ellipsoid.
fn gaussian_equals_mle() -> Outcome {
    let cfg = ExperimentConfig::experiment1();
    let r = run_experiment1(&cfg).map_err(err)?;
    check(
        cfg.angles == 256 && r.boundary_max_deviation <= 1e-8,
        format!("max deviation {:.2e} over {} directions (tol 1e-8)", r.boundary_max_deviation, cfg.angles),
    )
}

/// Gauge of a residual row in the noise ball `{w : ‖w‖_p ≤ radius}`.
fn residual_gauge(r: &Matrix, p: Norm, radius: f64) -> f64 {
    p.eval(r.iter().copied()) / radius
}

// 2. Pulled-back membership against the residual test.
fn pullback_oracle() -> Outcome {
    const A: f64 = 0.05;
    const GRID: usize = 50;
    let sys = scalar_system();
    let mut checked = 0usize;
    let mut skipped = 0usize;
    let mut disagreements = Vec::new();
    for t in 2..=4 {
        for ds in 0..20u64 {
            let sim = simulate_trajectory(&sys, &NoiseSpec::Bounded { a: A }, t, &Vector::from_element(1, 0.3), 1.0, 100 * t as u64 + ds)
                .map_err(err)?;
            let data = build_data_equation(&sim.trajectory).map_err(err)?;
            let tf = t as f64;
            let noises = [
                (box_noise(1, t, A), Norm::Inf, A),
                (Ccg::ellipsoid(Vector::zeros(t), Matrix::identity(t, t) * (A * tf.sqrt())).map_err(err)?, Norm::Two, A * tf.sqrt()),
                (
                    Ccg::new(Vector::zeros(t), Matrix::identity(t, t) * (A * tf), vec![NormGroup::range(0, t, Norm::One)], None)
                        .map_err(err)?,
                    Norm::One,
                    A * tf,
                ),
            ];
            for (noise, p, radius) in &noises {
                let set = pullback(noise, &data).map_err(err)?;
                let hull = set.set.inner().interval_hull().map_err(err)?;
                let (lo, w) = (&hull.lo, hull.widths());
                let results = Execution::Parallel.map_range(GRID * GRID, |k| {
                    let (i, j) = (k / GRID, k % GRID);
                    let frac = |s: usize| -0.25 + 1.5 * s as f64 / (GRID - 1) as f64;
                    let theta = Matrix::from_row_slice(1, 2, &[lo[0] + frac(i) * w[0], lo[1] + frac(j) * w[1]]);
                    let g = residual_gauge(&data.residual(&theta), *p, *radius);
                    let m = set.set.contains(&theta, 0.0).map(|m| m.margin);
                    (theta, g, m)
                });
                for (theta, g, m) in results {
                    let m = m.map_err(err)?;
                    if (g - 1.0).abs() <= 1e-6 {
                        skipped += 1;
                        continue;
                    }
                    checked += 1;
                    if (m <= 1.0) != (g <= 1.0) {
                        disagreements.push(format!("T={t} ds={ds} {p:?} Θ={:?} gauge {g} vs {m}", theta.as_slice()));
                    }
                }
            }
        }
    }
    check(
        disagreements.is_empty(),
        format!(
            "{checked} grid points ({skipped} within 1e-6 of the boundary skipped), {} disagreements{}",
            disagreements.len(),
            disagreements.first().map(|d| format!("; first: {d}")).unwrap_or_default()
        ),
    )
}

// 3. Empirical coverage of the true parameters.
fn coverage() -> Outcome {
    const TRIALS: usize = 2000;
    let sys = scalar_system();
    let base = ExperimentConfig::experiment1();
    let (sigma, a, alpha) = (0.02, 1e-4, 0.05);
    let mixed = NoiseSpec::mixed_box(1, a, sigma);
    let gaussian = NoiseSpec::Gaussian { sigma };
    let x0 = Vector::from_vec(base.data_x0.clone());
    let hits = Execution::Parallel.map_range(TRIALS, |i| -> Result<(bool, bool), String> {
        let seed = 50_000 + i as u64;
        let sim = simulate_trajectory(&sys, &gaussian, base.horizon, &x0, base.data_input_bound, seed).map_err(err)?;
        let data = build_data_equation(&sim.trajectory).map_err(err)?;
        let g = gaussian_param_set(&data, sigma, alpha).map_err(err)?.contains(&sim.theta_star, 1e-9).map_err(err)?;
        let sim = simulate_trajectory(&sys, &mixed, base.horizon, &x0, base.data_input_bound, seed).map_err(err)?;
        let data = build_data_equation(&sim.trajectory).map_err(err)?;
        let m = mixed_param_set(&data, &(Matrix::identity(1, 1) * a), sigma, alpha)
            .map_err(err)?
            .contains(&sim.theta_star, 1e-9)
            .map_err(err)?;
        Ok((g, m))
    });
    let (mut g, mut m) = (0usize, 0usize);
    for h in hits {
        let (a, b) = h?;
        g += usize::from(a);
        m += usize::from(b);
    }
    let (cg, cm) = (g as f64 / TRIALS as f64, m as f64 / TRIALS as f64);
    let band = |c: f64| (0.935..=0.965).contains(&c);
    check(band(cg) && band(cm), format!("gaussian {cg:.4}, mixed {cm:.4} over {TRIALS} trials (band [0.935, 0.965])"))
}

// 4. Sampled and cornered products stay inside the product set.
fn product_containment() -> Outcome {
    const INSTANCES: u64 = 20;
    const SAMPLES: usize = 500;
    let (mut samples, mut corners, mut violations, mut worst) = (0, 0, 0, 0.0f64);
    for k in 0..INSTANCES {
        let mut r = common::rng(9_000 + k);
        let n = r.random_range(1..=2);
        let p = n + 1;
        let inner = common::rand_ccg(&mut r, n * p, 5, 0.4);
        let n_set = Cmcg::from_vectorized((n, p), inner).map_err(err)?;
        let e = common::rand_ccg(&mut r, p, CORNER_LIMIT - 2 - n_set.num_generators(), 0.4);
        let cfg = ProductConfig {
            gaussian_mode: if k % 2 == 0 { GaussianMode::Truncated } else { GaussianMode::Raw },
            tighten_bounds: k % 3 == 0,
            ..ProductConfig::default()
        };
        let rep = product_containment_check(&n_set, &e, &cfg, SAMPLES, k).map_err(err)?;
        samples += rep.samples;
        corners += rep.corners;
        violations += rep.violations;
        worst = worst.max(rep.max_margin);
    }
    check(
        violations == 0 && samples >= 10_000 && corners > 0,
        format!("{samples} samples, {corners} corners, {violations} violations, max gauge {worst:.6} (limit 1+1e-5)"),
    )
}

/// Pure-Gaussian factor: one 2-group of `gamma` coefficients around zero.
fn gaussian_factor<R: Rng>(r: &mut R, rows: usize, gamma: usize) -> Ccg {
    Ccg::new(Vector::zeros(rows), common::rand_mat(r, rows, gamma), vec![NormGroup::range(0, gamma, Norm::Two)], None)
        .expect("ellipsoid")
}

/// `(gap, stated bound, bound with ‖M_h‖₂ ≥ ‖M_h‖_F/√min γ)` along `h`.
fn gap_at(n_set: &Cmcg, e: &Ccg, cfg: &ProductConfig, prod: &Ccg, h: &Vector) -> Result<(f64, f64, f64), String> {
    let gens = n_set.generator_matrices();
    let (gt, gz) = (gens.len(), e.num_generators());
    let (rt, rz) = cfg.radii(gt, gz).map_err(err)?;
    let mh = Matrix::from_fn(gt, gz, |j, s| h.dot(&(&gens[j] * e.generators().column(s))));
    let exact = rt * rz * SVD::new(mh, false, false).singular_values.max();
    let lib = gg_supports(n_set, e, cfg, h).map_err(err)?;
    if (lib.exact - exact).abs() > 1e-9 * (1.0 + exact) {
        return Err(format!("exact support {} vs {exact}", lib.exact));
    }
    let relaxed = prod.support(h).map_err(err)?;
    let stated = gg_gap_bound(n_set, e, cfg).map_err(err)?;
    let g = ((gt * gz) as f64).sqrt();
    let corrected = if g == 1.0 { 0.0 } else { stated / (g - 1.0) * (g - 1.0 / (gt.min(gz) as f64).sqrt()) };
    Ok((relaxed - exact, stated, corrected))
}

// 5. Relaxation gap of the Gaussian×Gaussian block.
//
// The stated bound subtracts the upper estimate ‖M_h‖₂ ≤ ‖M_h‖_F, so it does
// not hold in general: M_h = [[1, 1], [1, −1]] has gap 4 − √2 > (2 − 1)·2.
// The lower estimate ‖M_h‖₂ ≥ ‖M_h‖_F/√min(γ_Θ, γ_z) gives a valid bound,
// which is tracked alongside.
fn gg_gap() -> Outcome {
    let (mut checked, mut over_stated, mut over_corrected, mut zero_cases) = (0, 0, 0, 0);
    let mut bad_instances = Vec::new();
    let mut worst = 0.0f64;
    for k in 0..50u64 {
        let mut r = common::rng(70_000 + k);
        let (n, m) = (r.random_range(1..=3), r.random_range(1..=2));
        let p = n + m;
        let (gt, gz) = if k % 5 == 0 { (1, 1) } else { (r.random_range(1..=4), r.random_range(1..=4)) };
        let n_set = Cmcg::from_vectorized((n, p), gaussian_factor(&mut r, n * p, gt)).map_err(err)?;
        let e = gaussian_factor(&mut r, p, gz);
        let cfg = ProductConfig {
            gaussian_mode: if k % 2 == 0 { GaussianMode::Truncated } else { GaussianMode::Raw },
            ..ProductConfig::default()
        };
        // Centers are zero, so the product set is the relaxed block alone.
        let prod = cmcg_ccg_product(&n_set, &e, &cfg).map_err(err)?;
        for _ in 0..100 {
            let h = common::unit(&mut r, n);
            let (gap, stated, corrected) = gap_at(&n_set, &e, &cfg, &prod, &h).map_err(|e| format!("instance {k}: {e}"))?;
            let tol = 1e-7 * (1.0 + gap.abs() + stated);
            if gap < -tol {
                return Err(format!("instance {k}: negative gap {gap}"));
            }
            if gt == 1 && gz == 1 && (stated != 0.0 || gap.abs() > tol) {
                return Err(format!("instance {k}: singleton groups give gap {gap}, bound {stated}"));
            }
            checked += 1;
            if gap > stated + tol {
                over_stated += 1;
                if bad_instances.last() != Some(&k) {
                    bad_instances.push(k);
                }
            }
            over_corrected += usize::from(gap > corrected + tol);
            if stated > 0.0 {
                worst = worst.max(gap / stated);
            }
        }
        zero_cases += usize::from(gt == 1 && gz == 1);
    }

    let n_set = Cmcg::new(
        Matrix::zeros(1, 2),
        &[Matrix::from_row_slice(1, 2, &[1.0, 0.0]), Matrix::from_row_slice(1, 2, &[0.0, 1.0])],
        vec![NormGroup::range(0, 2, Norm::Two)],
        None,
    )
    .map_err(err)?;
    let e = Ccg::new(Vector::zeros(2), Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]), vec![NormGroup::range(0, 2, Norm::Two)], None)
        .map_err(err)?;
    let cfg = ProductConfig::default();
    let prod = cmcg_ccg_product(&n_set, &e, &cfg).map_err(err)?;
    let (hg, hs, hc) = gap_at(&n_set, &e, &cfg, &prod, &Vector::from_element(1, 1.0))?;

    check(
        over_stated == 0 && over_corrected == 0,
        format!(
            "{checked} directions over 50 instances: {over_stated} exceed the stated bound (instances {bad_instances:?}, worst gap/bound {worst:.3}), \
             {over_corrected} exceed the corrected bound; {zero_cases} singleton instances exact; \
             Hadamard block gap {hg:.4} vs stated {hs:.4}, corrected {hc:.4}"
        ),
    )
}

// 6. Reachable-set hierarchy and magnitudes.
fn experiment2() -> Outcome {
    let r = run_experiment2(&ExperimentConfig::experiment2()).map_err(err)?;
    check(
        r.hierarchy_holds && r.volume_ratio >= 10.0 && r.time_ratio >= 10.0,
        format!(
            "hierarchy {}, volume ratio {:.1}, time ratio {:.1}, final volumes model {:.3e} cmcg {:.3e} cmz {:.3e}",
            r.hierarchy_holds,
            r.volume_ratio,
            r.time_ratio,
            r.model.final_volume(),
            r.cmcg.final_volume(),
            r.cmz.final_volume()
        ),
    )
}

/// `Γ(q/2 + 1)` by the half-integer recursion.
fn gamma_half_plus_one(q: usize) -> f64 {
    let mut g = if q.is_multiple_of(2) { 1.0 } else { std::f64::consts::PI.sqrt() / 2.0 };
    let mut x = if q.is_multiple_of(2) { 1.0 } else { 1.5 };
    while x < q as f64 / 2.0 + 1.0 - 1e-9 {
        g *= x;
        x += 1.0;
    }
    g
}

// 7. Box-to-ball volume inflation.
fn inflation() -> Outcome {
    let oracle = |q: usize| 2f64.powi(q as i32) * gamma_half_plus_one(q) / std::f64::consts::PI.powf(q as f64 / 2.0);
    let mut ok = true;
    let mut parts = Vec::new();
    for (q, want, rel) in [(2, 1.2732, 0.01), (5, 6.079, 0.01), (10, 401.5, 0.001)] {
        let got = volume_inflation_ratio(q).map_err(err)?;
        ok &= (got - want).abs() <= rel * want && (got - oracle(q)).abs() <= 1e-9 * got;
        parts.push(format!("q={q}: {got:.4}"));
    }
    parts.push("q=10 differs from the published 310; the closed form gives 401.5".into());
    check(ok, parts.join(", "))
}

/// `P(χ²_d ≤ q)` by Simpson integration of the density after `x = u²`.
fn chi2_cdf_oracle(d: usize, q: f64) -> f64 {
    let gamma_half = if d == 1 { std::f64::consts::PI.sqrt() } else { gamma_half_plus_one(d - 2) };
    let norm = 2f64.powf(d as f64 / 2.0) * gamma_half;
    let f = |u: f64| 2.0 * u.powi(d as i32 - 1) * (-u * u / 2.0).exp() / norm;
    let (b, n) = (q.sqrt(), 20_000);
    let h = b / n as f64;
    let mut s = f(0.0) + f(b);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn chi2_quantile_oracle(d: usize, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 10.0 * d as f64 + 50.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf_oracle(d, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// 8. Chi-square quantiles.
fn chi2() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (d, want) in [(1, 3.8415), (2, 5.9915), (30, 43.773)] {
        let got = chi2_quantile(d, 0.95).map_err(err)?;
        let oracle = chi2_quantile_oracle(d, 0.95);
        ok &= (got - oracle).abs() <= 1e-3 && (got - want).abs() <= 1e-3;
        parts.push(format!("d={d}: {got:.5} (oracle {oracle:.5})"));
    }
    check(ok, parts.join(", "))
}

// 9. Mixture noise through the convex surrogate.
fn experiment3() -> Outcome {
    let cfg = ExperimentConfig::experiment3();
    let r = run_experiment3(&cfg).map_err(err)?;
    let ok = r.hdr_intervals.len() == 2
        && r.hdr_intervals[0].1 < r.hdr_intervals[1].0
        && r.surrogate_contains_hdr
        && cfg.mc_samples >= 100_000
        && r.surrogate_coverage >= 0.94
        && r.nested.iter().all(|&b| b);
    check(
        ok,
        format!(
            "HDR {:?}, surrogate [{:.4}, {:.4}], coverage {:.4}, nested {:?}",
            r.hdr_intervals, r.surrogate.0, r.surrogate.1, r.surrogate_coverage, r.nested
        ),
    )
}

// 10. Set-calculus invariants.
fn properties() -> Outcome {
    let mut master = common::rng(2024);
    for (name, prop) in common::PROPERTIES {
        for _ in 0..common::PROPERTY_CASES {
            let seed: u64 = master.random();
            prop(seed).map_err(|e| format!("{name} failed at seed {seed}: {e}"))?;
        }
    }
    check(true, format!("{} invariants x {} instances", common::PROPERTIES.len(), common::PROPERTY_CASES))
}

/// Criteria that cannot hold as stated. Their lines still print FAIL; they do
/// not fail the test target. Criterion 5: the published gap bound is false
/// (see `gg_gap`).
const KNOWN_FAILURES: [usize; 1] = [5];

fn main() {
    let criteria: [Criterion; 10] = [
        ("gaussian parameter set equals likelihood ellipsoid", Duration::from_secs(1), gaussian_equals_mle),
        ("pullback membership matches residual test", Duration::from_secs(120), pullback_oracle),
        ("coverage of the true parameters", Duration::from_secs(300), coverage),
        ("product containment", Duration::from_secs(120), product_containment),
        ("gaussian product relaxation gap", Duration::from_secs(60), gg_gap),
        ("reachable set hierarchy and ratios", Duration::from_secs(600), experiment2),
        ("volume inflation", Duration::from_secs(1), inflation),
        ("chi-square quantiles", Duration::from_secs(1), chi2),
        ("mixture noise surrogate", Duration::from_secs(120), experiment3),
        ("set calculus properties", Duration::from_secs(120), properties),
    ];
    let mut failed = Vec::new();
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = run();
        let elapsed = t.elapsed();
        let in_time = elapsed <= *limit;
        let (ok, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        if !ok {
            failed.push(i + 1);
        }
        println!(
            "{} [{:>2}] {name}: {detail} ({:.2} s, limit {} s{})",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", too slow" }
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed.len(), criteria.len());
    let unexpected: Vec<usize> = failed.iter().copied().filter(|c| !KNOWN_FAILURES.contains(c)).collect();
    if !failed.is_empty() {
        println!("failed: {failed:?}; known and documented: {KNOWN_FAILURES:?}");
    }
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
