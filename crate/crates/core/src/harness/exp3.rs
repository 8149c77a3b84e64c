use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::exp2::PipelineSummary;
use super::output::num;
use super::{sample_noise, write_json, write_table, ExperimentConfig};
use crate::error::Error;
use crate::identification::{build_data_equation, gaussian_param_set, DataRecord, NoiseSpec, ParamSet};
use crate::numeric::Vector;
use crate::propagation::{reach_tube, tube_containment_check, ContainmentReport};
use crate::stats::{chi2_quantile, hdr_1d, mvee, Density1D, Ellipsoid, DEFAULT_GRID, MVEE_EPS};

/// Gaussian-mixture noise handled through the MVEE of its HDR.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exp3Report {
    pub hdr_intervals: Vec<(f64, f64)>,
    pub hdr_threshold: f64,
    /// MVEE of the HDR endpoints; in one dimension this is their hull.
    pub surrogate: (f64, f64),
    pub surrogate_contains_hdr: bool,
    pub surrogate_coverage: f64,
    /// Scale of the Gaussian whose `1−α` region is the surrogate.
    pub surrogate_sigma: f64,
    pub single_gaussian_sigma: f64,
    pub model: PipelineSummary,
    pub mvee: PipelineSummary,
    pub gaussian: PipelineSummary,
    /// Per step: MVEE hull inside the single-Gaussian hull.
    pub nested: Vec<bool>,
    pub containment: ContainmentReport,
    pub passed: bool,
}

/// Allowed shortfall of the Monte Carlo surrogate coverage.
pub const COVERAGE_SLACK: f64 = 0.01;

/// Samples used for the tube containment check (memberships are solver calls).
const TUBE_SAMPLES: usize = 500;

fn surrogate_of(f: &Density1D, alpha: f64) -> Result<(crate::stats::HdrRegion, Ellipsoid), Error> {
    let hdr = hdr_1d(f, alpha, DEFAULT_GRID)?;
    let ends: Vec<Vector> = hdr.intervals.iter().flat_map(|&(a, b)| [Vector::from_element(1, a), Vector::from_element(1, b)]).collect();
    let ell = mvee(&ends, MVEE_EPS)?;
    Ok((hdr, ell))
}

fn interval_of(e: &Ellipsoid) -> (f64, f64) {
    let r = e.shape[(0, 0)].sqrt();
    (e.center[0] - r, e.center[0] + r)
}

pub fn run_experiment3(cfg: &ExperimentConfig) -> Result<Exp3Report, Error> {
    let sys = cfg.validate()?;
    let NoiseSpec::GaussianMixture { weights, means, sigmas } = &cfg.noise else {
        return Err(Error::Config("experiment 3 expects Gaussian-mixture noise".into()));
    };
    if sys.state_dim() != 1 {
        return Err(Error::Config("experiment 3 expects a scalar state".into()));
    }
    let f = Density1D::GaussianMixture { weights: weights.clone(), means: means.clone(), sigmas: sigmas.clone() };
    let (hdr, ell) = surrogate_of(&f, cfg.alpha)?;
    let surrogate = interval_of(&ell);
    let surrogate_contains_hdr = hdr.intervals.iter().all(|&(a, b)| a >= surrogate.0 - 1e-12 && b <= surrogate.1 + 1e-12);
    let draws = sample_noise(&cfg.noise, 1, cfg.mc_samples, cfg.seed)?;
    let inside = draws.iter().filter(|w| w[0] >= surrogate.0 && w[0] <= surrogate.1).count();
    let surrogate_coverage = inside as f64 / draws.len().max(1) as f64;

    let sim = cfg.simulate(&sys)?;
    let data = build_data_equation(&sim.trajectory)?;
    let x0 = cfg.reach_x0.to_ccg()?;
    let u = cfg.reach_input.to_ccg()?;

    // The surrogate ellipsoid is read as the level set of the Gaussian it
    // calibrates: `{w : (w − c)ᵀ (Q/χ²_{n,1−α})⁻¹ (w − c) ≤ χ²_{n,1−α}}`.
    let t = Instant::now();
    let shift = ell.center[0];
    let shifted = DataRecord::from_matrices(
        data.x_minus.clone(),
        data.u_minus.clone(),
        data.x_plus.map(|v| v - shift),
    )?;
    let surrogate_sigma = 0.5 * (surrogate.1 - surrogate.0) / chi2_quantile(1, 1.0 - cfg.alpha)?.sqrt();
    let n_mvee = gaussian_param_set(&shifted, surrogate_sigma, cfg.alpha)?;
    let mvee_off = t.elapsed().as_secs_f64();
    let mvee_tube = reach_tube(&n_mvee, &x0, &u, &cfg.noise, cfg.steps, &cfg.product)?;

    let t = Instant::now();
    let sigma_eff = (f.variance() + f.mean().powi(2)).sqrt();
    let n_gauss = gaussian_param_set(&data, sigma_eff, cfg.alpha)?;
    let gauss_off = t.elapsed().as_secs_f64();
    let gauss_noise = NoiseSpec::Gaussian { sigma: sigma_eff };
    let gauss_tube = reach_tube(&n_gauss, &x0, &u, &gauss_noise, cfg.steps, &cfg.product)?;

    let n_model = ParamSet::known(&sim.theta_star);
    let model_tube = reach_tube(&n_model, &x0, &u, &cfg.noise, cfg.steps, &cfg.product)?;

    let nested: Vec<bool> = (1..=cfg.steps).map(|k| gauss_tube.hulls[k].contains_box(&mvee_tube.hulls[k], 1e-9)).collect();
    let samples = cfg.mc_samples.min(TUBE_SAMPLES);
    let containment = tube_containment_check(&n_mvee, &u, &cfg.noise, &mvee_tube, &cfg.product, samples, cfg.seed)?;

    let report = Exp3Report {
        hdr_intervals: hdr.intervals.clone(),
        hdr_threshold: hdr.threshold,
        surrogate,
        surrogate_contains_hdr,
        surrogate_coverage,
        surrogate_sigma,
        single_gaussian_sigma: sigma_eff,
        model: PipelineSummary::from_tube("model", &n_model, 0.0, &model_tube),
        mvee: PipelineSummary::from_tube("mvee", &n_mvee, mvee_off, &mvee_tube),
        gaussian: PipelineSummary::from_tube("single_gaussian", &n_gauss, gauss_off, &gauss_tube),
        passed: hdr.intervals.len() == 2
            && surrogate_contains_hdr
            && surrogate_coverage >= 1.0 - cfg.alpha - COVERAGE_SLACK
            && nested.iter().all(|&b| b)
            && containment.violations == 0,
        nested,
        containment,
    };

    if let Some(dir) = &cfg.output_dir {
        write_json(&dir.join("exp3_report.json"), &report)?;
        let (lo, hi) = f.grid_range();
        let rows = (0..=800).map(|i| {
            let x = lo + (hi - lo) * i as f64 / 800.0;
            vec![num(x), num(f.pdf(x)), u8::from(hdr.contains(x)).to_string()]
        });
        write_table(&dir.join("exp3_density.tsv"), &["w", "pdf", "in_hdr"], rows)?;
        let mut rows: Vec<Vec<String>> =
            hdr.intervals.iter().map(|&(a, b)| vec!["hdr".to_string(), num(a), num(b)]).collect();
        rows.push(vec!["mvee".to_string(), num(surrogate.0), num(surrogate.1)]);
        write_table(&dir.join("exp3_intervals.tsv"), &["kind", "lo", "hi"], rows)?;
        let mut rows = Vec::new();
        for (name, tube) in [("model", &model_tube), ("mvee", &mvee_tube), ("single_gaussian", &gauss_tube)] {
            for (k, h) in tube.hulls.iter().enumerate() {
                rows.push(vec![name.to_string(), k.to_string(), "1".to_string(), num(h.lo[0]), num(h.hi[0])]);
            }
        }
        write_table(&dir.join("exp3_hulls.tsv"), &["pipeline", "step", "dim", "lo", "hi"], rows)?;
    }
    Ok(report)
}
