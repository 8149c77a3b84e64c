//! Simulation, noise sampling, experiment drivers and plot-data export.

mod exp1;
mod exp2;
mod exp3;
mod output;

pub use exp1::{run_experiment1, Exp1Report};
pub use exp2::{run_experiment2, Exp2Report, PipelineSummary};
pub use exp3::{run_experiment3, Exp3Report};
pub use output::{write_json, write_table};

use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IdentError, SetError};
use crate::identification::{NoiseSpec, Trajectory};
use crate::numeric::{spectral_radius, Matrix, Vector};
use crate::par::sample_rng;
use crate::propagation::ProductConfig;
use crate::sets::Ccg;
use crate::stats::standard_normal;

/// `x_{k+1} = A x_k + B u_k + w_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(with = "crate::numeric::serde_matrix")]
    pub a: Matrix,
    #[serde(with = "crate::numeric::serde_matrix")]
    pub b: Matrix,
    /// Sampling period in seconds (metadata).
    #[serde(default)]
    pub dt: f64,
}

impl SystemSpec {
    pub fn new(a: Matrix, b: Matrix, dt: f64) -> Result<Self, Error> {
        let s = SystemSpec { a, b, dt };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let n = self.a.nrows();
        if n == 0 || self.a.ncols() != n || self.b.nrows() != n || self.b.ncols() == 0 {
            return Err(Error::Config("A must be n×n and B n×m with n, m ≥ 1".into()));
        }
        if self.a.iter().chain(self.b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("system matrices must be finite".into()));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }

    /// `Θ★ = [A B]`.
    pub fn theta(&self) -> Matrix {
        let (n, m) = (self.state_dim(), self.input_dim());
        let mut t = Matrix::zeros(n, n + m);
        t.view_mut((0, 0), (n, n)).copy_from(&self.a);
        t.view_mut((0, n), (n, m)).copy_from(&self.b);
        t
    }
}

/// How the true system is specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SystemRecipe {
    Explicit(SystemSpec),
    /// `x⁺ = a x + b u`.
    Scalar { a: f64, b: f64 },
    /// Chain of `n` integrators sampled exactly at `dt` with the input on the
    /// last state; `A` is then scaled to spectral radius `radius`.
    IntegratorChain { n: usize, dt: f64, radius: f64 },
    /// Continuous-time `ẋ = A_c x + B_c u` under a zero-order hold at `dt`.
    Sampled {
        #[serde(with = "crate::numeric::serde_matrix")]
        a_c: Matrix,
        #[serde(with = "crate::numeric::serde_matrix")]
        b_c: Matrix,
        dt: f64,
    },
}

impl SystemRecipe {
    pub fn build(&self) -> Result<SystemSpec, Error> {
        match self {
            SystemRecipe::Explicit(s) => {
                s.validate()?;
                Ok(s.clone())
            }
            SystemRecipe::Scalar { a, b } => SystemSpec::new(Matrix::from_element(1, 1, *a), Matrix::from_element(1, 1, *b), 1.0),
            SystemRecipe::IntegratorChain { n, dt, radius } => {
                let n = *n;
                if n == 0 || !(*dt > 0.0) || !(*radius > 0.0) {
                    return Err(Error::Config("integrator chain needs n ≥ 1, dt > 0 and radius > 0".into()));
                }
                let shift = Matrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 });
                // The shift is nilpotent, so both series terminate after n terms.
                let mut phi = Matrix::zeros(n, n);
                let mut gamma = Matrix::zeros(n, n);
                let mut power = Matrix::identity(n, n);
                let mut fact = 1.0;
                for k in 0..n {
                    phi += &power * (dt.powi(k as i32) / fact);
                    gamma += &power * (dt.powi(k as i32 + 1) / (fact * (k + 1) as f64));
                    fact *= (k + 1) as f64;
                    power = &power * &shift;
                }
                let mut e_last = Matrix::zeros(n, 1);
                e_last[(n - 1, 0)] = 1.0;
                SystemSpec::new(phi * *radius, gamma * e_last, *dt)
            }
            SystemRecipe::Sampled { a_c, b_c, dt } => {
                SystemSpec::new(a_c.clone(), b_c.clone(), *dt)?;
                if !(*dt > 0.0) {
                    return Err(Error::Config("sampling period must be positive".into()));
                }
                let (n, m) = (a_c.nrows(), b_c.ncols());
                // exp([[A B], [0 0]] dt) = [[A_d B_d], [0 I]].
                let mut aug = Matrix::zeros(n + m, n + m);
                aug.view_mut((0, 0), (n, n)).copy_from(a_c);
                aug.view_mut((0, n), (n, m)).copy_from(b_c);
                let e = (aug * *dt).exp();
                SystemSpec::new(e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned(), *dt)
            }
        }
    }

    /// Five-state benchmark with modes `−1 ± 4i`, `−3 ± i`, `−2` and the
    /// input entering every state.
    pub fn five_state(dt: f64) -> Self {
        #[rustfmt::skip]
        let a_c = Matrix::from_row_slice(5, 5, &[
            -1.0, -4.0, 0.0, 0.0, 0.0,
            4.0, -1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, -3.0, 1.0, 0.0,
            0.0, 0.0, -1.0, -3.0, 0.0,
            0.0, 0.0, 0.0, 0.0, -2.0,
        ]);
        SystemRecipe::Sampled { a_c, b_c: Matrix::from_element(5, 1, 1.0), dt }
    }
}

/// Draws `count` noise vectors of dimension `n`.
///
/// Gaussian entries use the Box–Muller transform of uniform bits; bounded
/// coefficients are uniform on `[−1, 1]`; mixtures pick a component per
/// entry by its weight.
pub fn sample_noise(spec: &NoiseSpec, n: usize, count: usize, seed: u64) -> Result<Vec<Vector>, IdentError> {
    spec.validate(n)?;
    let mut rng = sample_rng(seed, 0);
    Ok((0..count).map(|_| draw_noise(spec, n, &mut rng)).collect())
}

fn draw_noise<R: Rng + ?Sized>(spec: &NoiseSpec, n: usize, rng: &mut R) -> Vector {
    match spec {
        NoiseSpec::Bounded { a } => Vector::from_fn(n, |_, _| a * rng.random_range(-1.0..=1.0)),
        NoiseSpec::Gaussian { sigma } => Vector::from_fn(n, |_, _| sigma * standard_normal(rng)),
        NoiseSpec::Mixed { bounded_generators, sigma } => {
            let beta = Vector::from_fn(bounded_generators.ncols(), |_, _| rng.random_range(-1.0..=1.0));
            let mut w = if bounded_generators.ncols() == 0 { Vector::zeros(n) } else { bounded_generators * beta };
            for v in w.iter_mut() {
                *v += sigma * standard_normal(rng);
            }
            w
        }
        NoiseSpec::GaussianMixture { weights, means, sigmas } => Vector::from_fn(n, |_, _| {
            let total: f64 = weights.iter().sum();
            let mut pick = rng.random::<f64>() * total;
            let mut k = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if pick < *w {
                    k = i;
                    break;
                }
                pick -= w;
            }
            means[k] + sigmas[k] * standard_normal(rng)
        }),
    }
}

/// A simulated dataset together with the truth that generated it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Simulation {
    pub trajectory: Trajectory,
    #[serde(with = "crate::numeric::serde_matrix")]
    pub theta_star: Matrix,
    /// Realized noise `w_0..w_{T−1}`, one row per step.
    pub noise: Vec<Vec<f64>>,
}

/// Rolls the system forward `horizon` steps from `x0` with inputs uniform
/// on `[−input_bound, input_bound]^m` and noise drawn from `noise`.
pub fn simulate_trajectory(
    sys: &SystemSpec,
    noise: &NoiseSpec,
    horizon: usize,
    x0: &Vector,
    input_bound: f64,
    seed: u64,
) -> Result<Simulation, Error> {
    sys.validate()?;
    let (n, m) = (sys.state_dim(), sys.input_dim());
    if x0.len() != n {
        return Err(Error::Config(format!("initial state has {} entries, expected {n}", x0.len())));
    }
    noise.validate(n)?;
    let mut inputs_rng = sample_rng(seed, 1);
    let mut noise_rng = sample_rng(seed, 2);
    let mut states = vec![x0.clone()];
    let mut inputs = Vec::with_capacity(horizon);
    let mut realized = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let u = Vector::from_fn(m, |_, _| input_bound * inputs_rng.random_range(-1.0..=1.0));
        let w = draw_noise(noise, n, &mut noise_rng);
        let x = &sys.a * states.last().expect("non-empty") + &sys.b * &u + &w;
        realized.push(w.iter().copied().collect());
        inputs.push(u);
        states.push(x);
    }
    Ok(Simulation { trajectory: Trajectory::new(states, inputs)?, theta_star: sys.theta(), noise: realized })
}

/// Axis-aligned box given by center and half-widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
}

impl BoxSpec {
    pub fn cube(n: usize, center: f64, radius: f64) -> Self {
        BoxSpec { center: vec![center; n], radius: vec![radius; n] }
    }

    pub fn to_ccg(&self) -> Result<Ccg, SetError> {
        if self.center.len() != self.radius.len() {
            return Err(SetError::DimensionMismatch { context: "box radius", expected: self.center.len(), found: self.radius.len() });
        }
        let c = Vector::from_vec(self.center.clone());
        let r = Vector::from_vec(self.radius.clone());
        Ccg::from_box(&(&c - &r), &(&c + &r))
    }
}

/// Everything an experiment run depends on. A fixed config gives identical
/// numeric outputs; wall-clock timings go to a separate file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub system: SystemRecipe,
    pub noise: NoiseSpec,
    /// Number of data transitions `T`.
    pub horizon: usize,
    /// Number of propagation steps `K`.
    pub steps: usize,
    pub alpha: f64,
    /// Box multiplier of the CMZ baseline.
    pub m_box: f64,
    /// Initial state of the data trajectory.
    pub data_x0: Vec<f64>,
    /// Data inputs are uniform on `[−b, b]^m`.
    pub data_input_bound: f64,
    pub reach_x0: BoxSpec,
    pub reach_input: BoxSpec,
    #[serde(default)]
    pub product: ProductConfig,
    /// Monte Carlo samples for validation loops.
    pub mc_samples: usize,
    /// Directions used for boundary export and sampled support comparisons.
    pub angles: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Scalar system, Gaussian noise: parameter-set hierarchy.
    pub fn experiment1() -> Self {
        ExperimentConfig {
            seed: 7,
            system: SystemRecipe::Scalar { a: 0.8, b: 0.5 },
            noise: NoiseSpec::Gaussian { sigma: 0.02 },
            horizon: 30,
            steps: 1,
            alpha: 0.05,
            m_box: 5.0,
            data_x0: vec![0.0],
            data_input_bound: 1.0,
            reach_x0: BoxSpec::cube(1, 0.0, 0.1),
            reach_input: BoxSpec::cube(1, 0.0, 0.1),
            product: ProductConfig::default(),
            mc_samples: 1000,
            angles: 256,
            output_dir: None,
        }
    }

    /// Five-state benchmark, mixed noise: CMCG against CMZ reachability.
    pub fn experiment2() -> Self {
        let n = 5;
        ExperimentConfig {
            seed: 11,
            system: SystemRecipe::five_state(0.05),
            noise: NoiseSpec::mixed_box(n, 1e-4, 6e-4),
            horizon: 120,
            steps: 5,
            alpha: 0.05,
            m_box: 5.0,
            data_x0: vec![1.0; n],
            data_input_bound: 10.0,
            reach_x0: BoxSpec::cube(n, 1.0, 0.1),
            reach_input: BoxSpec::cube(1, 10.0, 0.25),
            // Without reduction the bilinear blocks multiply the generator
            // count by the parameter-set size at every step.
            product: ProductConfig { reduction_order: Some(100), ..ProductConfig::default() },
            mc_samples: 200,
            angles: 64,
            output_dir: None,
        }
    }

    /// Scalar system, bimodal Gaussian-mixture noise.
    pub fn experiment3() -> Self {
        ExperimentConfig {
            seed: 5,
            system: SystemRecipe::Scalar { a: 0.8, b: 0.5 },
            noise: NoiseSpec::GaussianMixture { weights: vec![0.5, 0.5], means: vec![-0.15, 0.15], sigmas: vec![0.05, 0.05] },
            horizon: 30,
            steps: 5,
            alpha: 0.05,
            m_box: 5.0,
            data_x0: vec![0.0],
            data_input_bound: 1.0,
            reach_x0: BoxSpec::cube(1, 0.0, 0.1),
            reach_input: BoxSpec::cube(1, 0.0, 0.1),
            product: ProductConfig::default(),
            mc_samples: 100_000,
            angles: 256,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<SystemSpec, Error> {
        let sys = self.system.build()?;
        let (n, m) = (sys.state_dim(), sys.input_dim());
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} not in (0, 1)", self.alpha)));
        }
        if self.horizon < n + m {
            return Err(Error::Config(format!("horizon {} is shorter than n + m = {}", self.horizon, n + m)));
        }
        if self.steps == 0 || self.angles < 3 {
            return Err(Error::Config("steps ≥ 1 and angles ≥ 3 are required".into()));
        }
        if self.data_x0.len() != n || self.reach_x0.center.len() != n || self.reach_input.center.len() != m {
            return Err(Error::Config("initial state and set dimensions must match the system".into()));
        }
        self.noise.validate(n)?;
        self.product.validate()?;
        Ok(sys)
    }

    pub fn simulate(&self, sys: &SystemSpec) -> Result<Simulation, Error> {
        simulate_trajectory(sys, &self.noise, self.horizon, &Vector::from_vec(self.data_x0.clone()), self.data_input_bound, self.seed)
    }
}

/// Support points of the projection of `set` onto coordinates `plane`, at
/// `angles` equally spaced directions.
pub fn export_set_2d(set: &Ccg, plane: (usize, usize), angles: usize) -> Result<Vec<[f64; 2]>, SetError> {
    let n = set.dim();
    if n < 2 || plane.0 >= n || plane.1 >= n || plane.0 == plane.1 {
        return Err(SetError::DimensionMismatch { context: "projection plane", expected: n, found: plane.0.max(plane.1) + 1 });
    }
    let mut sel = Matrix::zeros(2, n);
    sel[(0, plane.0)] = 1.0;
    sel[(1, plane.1)] = 1.0;
    let proj = set.linear_map(&sel)?;
    (0..angles)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / angles as f64;
            let (_, x) = proj.support_point(&Vector::from_row_slice(&[t.cos(), t.sin()]))?;
            Ok([x[0], x[1]])
        })
        .collect()
}

/// Shoelace area of a closed polygon.
pub fn polygon_area(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (p, q) = (points[i], points[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    0.5 * twice.abs()
}

/// True when consecutive turns never change orientation (collinear and
/// repeated points allowed).
pub fn is_convex_polyline(points: &[[f64; 2]], tol: f64) -> bool {
    let n = points.len();
    let scale = points.iter().flat_map(|p| p.iter()).fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut sign = 0.0;
    for i in 0..n {
        let (a, b, c) = (points[i], points[(i + 1) % n], points[(i + 2) % n]);
        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
        if cross.abs() <= tol * scale * scale {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

/// Unit directions: the `±e_i` axes followed by seeded random ones.
pub fn probe_directions(n: usize, random: usize, seed: u64) -> Vec<Vector> {
    let mut dirs = Vec::with_capacity(2 * n + random);
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = Vector::zeros(n);
            e[i] = s;
            dirs.push(e);
        }
    }
    let mut rng = sample_rng(seed, 99);
    for _ in 0..random {
        let v = Vector::from_fn(n, |_, _| standard_normal(&mut rng));
        dirs.push(&v / v.norm().max(1e-300));
    }
    dirs
}
