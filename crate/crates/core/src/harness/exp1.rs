use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::output::num;
use super::{export_set_2d, polygon_area, write_json, write_table, ExperimentConfig};
use crate::error::Error;
use crate::identification::{
    box_cmz_baseline, build_data_equation, gaussian_noise_ball, gaussian_param_set, mle_ellipsoid, pullback, NoiseSpec,
};
use crate::numeric::{vec_of, Matrix, Vector};

/// Parameter-set hierarchy on a scalar system with Gaussian noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exp1Report {
    pub theta_hat: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub noise_dim: usize,
    pub param_dim: usize,
    /// Largest gap between CMCG and MLE support points over all angles.
    pub boundary_max_deviation: f64,
    pub cmcg_area: f64,
    pub cmz_area: f64,
    pub area_ratio: f64,
    /// `min_l h_CMZ(l) − h_CMCG(l)`.
    pub cmz_margin: f64,
    /// `min_l h_pullback(l) − h_CMCG(l)` for the full-dimensional Frobenius pullback.
    pub pullback_margin: f64,
    pub theta_star_in_cmcg: bool,
    pub passed: bool,
    #[serde(skip)]
    pub elapsed: f64,
}

/// Tolerance on the CMCG/MLE boundary agreement.
pub const BOUNDARY_TOL: f64 = 1e-8;

pub fn run_experiment1(cfg: &ExperimentConfig) -> Result<Exp1Report, Error> {
    let start = Instant::now();
    let sys = cfg.validate()?;
    let NoiseSpec::Gaussian { sigma } = cfg.noise else {
        return Err(Error::Config("experiment 1 expects Gaussian noise".into()));
    };
    if sys.state_dim() != 1 || sys.input_dim() != 1 {
        return Err(Error::Config("experiment 1 expects a scalar system".into()));
    }
    let sim = cfg.simulate(&sys)?;
    let data = build_data_equation(&sim.trajectory)?;

    let cmcg = gaussian_param_set(&data, sigma, cfg.alpha)?;
    let mle = mle_ellipsoid(&data, sigma, cfg.alpha)?;
    let cmz = box_cmz_baseline(&data, sigma, cfg.m_box, &Matrix::zeros(1, 0))?;
    let frob = pullback(&gaussian_noise_ball(1, cfg.horizon, sigma, cfg.alpha)?, &data)?;

    let dirs: Vec<Vector> = (0..cfg.angles)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / cfg.angles as f64;
            Vector::from_row_slice(&[t.cos(), t.sin()])
        })
        .collect();
    let mut deviation: f64 = 0.0;
    let mut cmz_margin = f64::INFINITY;
    let mut pullback_margin = f64::INFINITY;
    for l in &dirs {
        let (h, x) = cmcg.set.inner().support_point(l)?;
        let ql = &mle.shape * l;
        let y = &mle.center + &ql / l.dot(&ql).sqrt();
        deviation = deviation.max((x - y).amax());
        cmz_margin = cmz_margin.min(cmz.set.inner().support(l)? - h);
        pullback_margin = pullback_margin.min(frob.set.inner().support(l)? - h);
    }

    let curves: Vec<(&str, Vec<[f64; 2]>)> = vec![
        ("cmcg", export_set_2d(cmcg.set.inner(), (0, 1), cfg.angles)?),
        ("mle", export_set_2d(&mle.to_ccg()?, (0, 1), cfg.angles)?),
        ("cmz", export_set_2d(cmz.set.inner(), (0, 1), cfg.angles)?),
        ("pullback_q", export_set_2d(frob.set.inner(), (0, 1), cfg.angles)?),
    ];
    let area = |name: &str| curves.iter().find(|c| c.0 == name).map_or(0.0, |c| polygon_area(&c.1));
    let (cmcg_area, cmz_area) = (area("cmcg"), area("cmz"));
    let theta_star_in_cmcg = cmcg.contains(&sim.theta_star, 1e-9)?;

    let mut report = Exp1Report {
        theta_hat: vec_of(&data.theta_hat()).iter().copied().collect(),
        theta_star: vec_of(&sim.theta_star).iter().copied().collect(),
        noise_dim: cfg.horizon,
        param_dim: data.param_dim(),
        boundary_max_deviation: deviation,
        cmcg_area,
        cmz_area,
        area_ratio: cmz_area / cmcg_area,
        cmz_margin,
        pullback_margin,
        theta_star_in_cmcg,
        passed: false,
        elapsed: 0.0,
    };
    report.passed = deviation < BOUNDARY_TOL && report.area_ratio > 1.0 && cmz_margin >= -1e-9 && pullback_margin > 0.0;
    report.elapsed = start.elapsed().as_secs_f64();

    if let Some(dir) = &cfg.output_dir {
        write_json(&dir.join("exp1_report.json"), &report)?;
        let rows = curves
            .iter()
            .flat_map(|(name, pts)| pts.iter().enumerate().map(move |(i, p)| vec![name.to_string(), i.to_string(), num(p[0]), num(p[1])]));
        write_table(&dir.join("exp1_boundaries.tsv"), &["set", "index", "a", "b"], rows)?;
        let markers = [("theta_hat", &report.theta_hat), ("theta_star", &report.theta_star)]
            .map(|(n, v)| vec![n.to_string(), num(v[0]), num(v[1])]);
        write_table(&dir.join("exp1_markers.tsv"), &["marker", "a", "b"], markers)?;
        write_json(&dir.join("exp1_timing.json"), &serde_json::json!({ "total_seconds": report.elapsed }))?;
    }
    Ok(report)
}
