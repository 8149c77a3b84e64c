mod common;

use rand::Rng;
use reachset::harness::{simulate_trajectory, SystemRecipe, SystemSpec};
use reachset::identification::{
    bounded_param_set, box_cmz_baseline, box_noise, build_data_equation, gaussian_param_set, mixed_param_set,
    mle_ellipsoid, pullback, DataRecord, NoiseSpec, Trajectory,
};
use reachset::numeric::{vec_of, Matrix, Vector};
use reachset::sets::Ccg;
use reachset::stats::chi2_quantile;

fn scalar() -> SystemSpec {
    SystemRecipe::Scalar { a: 0.8, b: 0.5 }.build().unwrap()
}

fn scalar_data(noise: &NoiseSpec, t: usize, seed: u64) -> (DataRecord, Matrix) {
    let sim = simulate_trajectory(&scalar(), noise, t, &Vector::from_element(1, 0.2), 1.0, seed).unwrap();
    (build_data_equation(&sim.trajectory).unwrap(), sim.theta_star)
}

fn two_state_data(noise: &NoiseSpec, t: usize, seed: u64) -> (DataRecord, Matrix) {
    let a = Matrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.7]);
    let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let sys = SystemSpec::new(a, b, 1.0).unwrap();
    let sim = simulate_trajectory(&sys, noise, t, &Vector::from_element(2, 0.5), 1.0, seed).unwrap();
    (build_data_equation(&sim.trajectory).unwrap(), sim.theta_star)
}

fn directions(dim: usize, count: usize, seed: u64) -> Vec<Vector> {
    let mut r = common::rng(seed);
    (0..count).map(|_| common::unit(&mut r, dim)).collect()
}

#[test]
fn square_data_gives_identity_pseudoinverse() {
    let traj = Trajectory::new(
        vec![Vector::from_element(1, 1.0), Vector::from_element(1, 0.0), Vector::from_element(1, 0.5)],
        vec![Vector::from_element(1, 0.0), Vector::from_element(1, 1.0)],
    )
    .unwrap();
    let data = build_data_equation(&traj).unwrap();
    assert_eq!(data.m, Matrix::identity(2, 2));
    assert!((&data.m_dagger - Matrix::identity(2, 2)).abs().max() < 1e-12);
    assert_eq!(data.m_perp.ncols(), 0);
}

#[test]
fn kernel_has_one_column_for_three_samples() {
    let (data, _) = scalar_data(&NoiseSpec::Bounded { a: 0.1 }, 3, 4);
    assert_eq!(data.m_perp.ncols(), 1);
    assert!((&data.m * &data.m_perp).abs().max() < 1e-10);
}

#[test]
fn noise_free_pullback_is_a_point() {
    let (data, theta) = scalar_data(&NoiseSpec::Bounded { a: 0.0 }, 2, 1);
    let set = pullback(&Ccg::point(Vector::zeros(2)), &data).unwrap();
    let hull = set.set.inner().interval_hull().unwrap();
    assert!((&hull.hi - &hull.lo).abs().max() < 1e-12);
    assert!((&hull.lo - vec_of(&theta)).abs().max() < 1e-10);
}

#[test]
fn box_pullback_matches_residual_test_on_grid() {
    let a = 0.1;
    let (data, _) = scalar_data(&NoiseSpec::Bounded { a }, 3, 17);
    let set = pullback(&box_noise(1, 3, a), &data).unwrap();
    let hull = set.set.inner().interval_hull().unwrap();
    let w = hull.widths();
    for i in 0..50 {
        for j in 0..50 {
            let s = |k: usize| -0.2 + 1.4 * k as f64 / 49.0;
            let theta = Matrix::from_row_slice(1, 2, &[hull.lo[0] + s(i) * w[0], hull.lo[1] + s(j) * w[1]]);
            let resid = data.residual(&theta).amax();
            if (resid - a).abs() < 1e-6 {
                continue;
            }
            let m = set.set.contains(&theta, 0.0).unwrap();
            assert_eq!(m.margin <= 1.0, resid <= a, "Θ = {theta}, residual {resid}, gauge {}", m.margin);
        }
    }
}

#[test]
fn bounded_set_agrees_with_generic_pullback() {
    let a = 0.1;
    let (data, _) = scalar_data(&NoiseSpec::Bounded { a }, 3, 17);
    let generic = pullback(&box_noise(1, 3, a), &data).unwrap();
    let bounded = bounded_param_set(&data, &box_noise(1, 3, a)).unwrap();
    for l in directions(2, 40, 1) {
        let (h1, h2) = (generic.set.inner().support(&l).unwrap(), bounded.set.inner().support(&l).unwrap());
        assert!((h1 - h2).abs() < 1e-7, "{h1} vs {h2}");
    }
}

#[test]
fn square_data_bounded_set_is_unconstrained() {
    let (data, _) = scalar_data(&NoiseSpec::Bounded { a: 0.1 }, 2, 3);
    let set = bounded_param_set(&data, &box_noise(1, 2, 0.1)).unwrap();
    assert!(!set.set.inner().is_constrained());
}

#[test]
fn gaussian_radius_uses_parameter_dimension() {
    let (sigma, alpha) = (0.02, 0.05);
    let (data, _) = scalar_data(&NoiseSpec::Gaussian { sigma }, 30, 7);
    let set = gaussian_param_set(&data, sigma, alpha).unwrap();
    let theta_hat = data.theta_hat();
    let r2 = sigma * sigma * chi2_quantile(2, 1.0 - alpha).unwrap();
    let gram = &data.m * data.m.transpose();
    for l in directions(2, 32, 2) {
        let (_, x) = set.set.inner().support_point(&l).unwrap();
        let d = set.set.unvec(&x) - &theta_hat;
        let trace = (&d * &gram * d.transpose()).trace();
        assert!((trace - r2).abs() < 1e-8 * r2.max(1.0), "{trace} vs {r2}");
    }
}

#[test]
fn likelihood_ellipsoid_scaling() {
    let (data, _) = scalar_data(&NoiseSpec::Gaussian { sigma: 0.02 }, 30, 7);
    let base = mle_ellipsoid(&data, 0.02, 0.05).unwrap();
    let doubled = mle_ellipsoid(&data, 0.04, 0.05).unwrap();
    assert!((&doubled.shape - &base.shape * 4.0).abs().max() < 1e-12 * base.shape.amax().max(1.0));
    let strict = mle_ellipsoid(&data, 0.02, 0.01).unwrap();
    let ratio = chi2_quantile(2, 0.99).unwrap() / chi2_quantile(2, 0.95).unwrap();
    assert!((&strict.shape - &base.shape * ratio).abs().max() < 1e-10 * base.shape.amax());
}

#[test]
fn likelihood_ellipsoid_equals_gaussian_set() {
    let (data, _) = scalar_data(&NoiseSpec::Gaussian { sigma: 0.02 }, 30, 9);
    let set = gaussian_param_set(&data, 0.02, 0.05).unwrap();
    let ell = mle_ellipsoid(&data, 0.02, 0.05).unwrap();
    let g = set.set.inner().generators();
    let shape = g * g.transpose();
    assert!((&shape - &ell.shape).abs().max() <= 1e-9 * ell.shape.amax());
    assert!((set.set.inner().center() - &ell.center).abs().max() <= 1e-9 * ell.center.amax());
}

#[test]
fn projection_identity() {
    let (data, _) = scalar_data(&NoiseSpec::Gaussian { sigma: 0.02 }, 12, 5);
    let mut r = common::rng(8);
    let proj = data.m.transpose() * &data.m_dagger.transpose();
    for _ in 0..20 {
        let theta0 = common::rand_mat(&mut r, 1, 2);
        let w = common::rand_mat(&mut r, 1, 12) * 0.05;
        // The data equation solved for a shifted output with the same regressors.
        let x_plus = &theta0 * &data.m + &w;
        let shifted = DataRecord::from_matrices(data.x_minus.clone(), data.u_minus.clone(), x_plus).unwrap();
        let d = &theta0 - shifted.theta_hat();
        let lhs = (&d * &data.m * data.m.transpose() * d.transpose()).trace();
        let rhs = (&w * &proj).norm_squared();
        assert!((lhs - rhs).abs() < 1e-8 * (1.0 + rhs), "{lhs} vs {rhs}");
    }
}

#[test]
fn mixed_without_gaussian_part_is_the_bounded_set() {
    let (data, _) = scalar_data(&NoiseSpec::Bounded { a: 0.05 }, 6, 21);
    let gb = Matrix::identity(1, 1) * 0.05;
    let mixed = mixed_param_set(&data, &gb, 0.0, 0.05).unwrap();
    let bounded = bounded_param_set(&data, &box_noise(1, 6, 0.05)).unwrap();
    for l in directions(2, 50, 3) {
        let (h1, h2) = (mixed.set.inner().support(&l).unwrap(), bounded.set.inner().support(&l).unwrap());
        assert!((h1 - h2).abs() < 1e-6, "{h1} vs {h2}");
    }
}

#[test]
fn mixed_without_bounded_part_is_the_gaussian_set() {
    let (data, _) = scalar_data(&NoiseSpec::Gaussian { sigma: 0.02 }, 30, 22);
    let mixed = mixed_param_set(&data, &Matrix::zeros(1, 0), 0.02, 0.05).unwrap();
    let gauss = gaussian_param_set(&data, 0.02, 0.05).unwrap();
    for l in directions(2, 50, 4) {
        let (h1, h2) = (mixed.set.inner().support(&l).unwrap(), gauss.set.inner().support(&l).unwrap());
        assert!((h1 - h2).abs() < 1e-8, "{h1} vs {h2}");
    }
}

#[test]
fn mixed_set_inside_box_baseline() {
    let (a, sigma) = (1e-4, 6e-4);
    let noise = NoiseSpec::mixed_box(2, a, sigma);
    let (data, theta) = two_state_data(&noise, 40, 31);
    let gb = Matrix::identity(2, 2) * a;
    let mixed = mixed_param_set(&data, &gb, sigma, 0.05).unwrap();
    let cmz = box_cmz_baseline(&data, sigma, 5.0, &gb).unwrap();
    let mut strict = 0;
    for l in directions(6, 100, 5) {
        let (hm, hz) = (mixed.set.inner().support(&l).unwrap(), cmz.set.inner().support(&l).unwrap());
        assert!(hm <= hz + 1e-9 * (1.0 + hz.abs()), "{hm} > {hz}");
        strict += usize::from(hm < hz - 1e-9);
    }
    assert!(strict > 0);
    assert!(mixed.contains(&theta, 1e-9).unwrap());
}

#[test]
fn box_baseline_contains_gaussian_boundary() {
    let sigma = 0.02;
    let (data, _) = scalar_data(&NoiseSpec::Gaussian { sigma }, 30, 7);
    let gauss = gaussian_param_set(&data, sigma, 0.05).unwrap();
    let cmz = box_cmz_baseline(&data, sigma, 5.0, &Matrix::zeros(1, 0)).unwrap();
    let inner = gauss.set.inner();
    let mut r = common::rng(6);
    for _ in 0..1000 {
        let t = r.random_range(0.0..std::f64::consts::TAU);
        let beta = Vector::from_row_slice(&[t.cos(), t.sin()]);
        let theta = gauss.set.unvec(&(inner.center() + inner.generators() * beta));
        assert!(cmz.contains(&theta, 1e-9).unwrap());
    }
}

#[test]
fn constant_data_is_rejected() {
    let states = vec![Vector::from_element(1, 1.0); 5];
    let inputs = vec![Vector::from_element(1, 0.0); 4];
    assert!(build_data_equation(&Trajectory::new(states, inputs).unwrap()).is_err());
}
