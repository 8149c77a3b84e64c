use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::output::num;
use super::{export_set_2d, probe_directions, write_json, write_table, ExperimentConfig};
use crate::error::Error;
use crate::identification::{box_cmz_baseline, build_data_equation, mixed_param_set, NoiseSpec, ParamSet};
use crate::numeric::Matrix;
use crate::propagation::{reach_tube, tube_containment_check, ContainmentReport, ReachTube};
use crate::sets::Ccg;

/// One reachability pipeline of the comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub name: String,
    pub param_generators: usize,
    pub param_constraints: usize,
    /// Interval-hull volume of `X_0..X_K`.
    pub volumes: Vec<f64>,
    pub generators: Vec<usize>,
    pub hull_lo: Vec<Vec<f64>>,
    pub hull_hi: Vec<Vec<f64>>,
    #[serde(skip)]
    pub offline_seconds: f64,
    #[serde(skip)]
    pub tube_seconds: f64,
}

impl PipelineSummary {
    pub(crate) fn from_tube(name: &str, param: &ParamSet, offline: f64, tube: &ReachTube) -> Self {
        PipelineSummary {
            name: name.into(),
            param_generators: param.set.num_generators(),
            param_constraints: param.set.inner().num_constraints(),
            volumes: tube.volumes.clone(),
            generators: tube.generators.clone(),
            hull_lo: tube.hulls.iter().map(|h| h.lo.iter().copied().collect()).collect(),
            hull_hi: tube.hulls.iter().map(|h| h.hi.iter().copied().collect()).collect(),
            offline_seconds: offline,
            tube_seconds: tube.total_time(),
        }
    }

    pub fn total_seconds(&self) -> f64 {
        self.offline_seconds + self.tube_seconds
    }

    pub fn final_volume(&self) -> f64 {
        *self.volumes.last().expect("tube has steps")
    }
}

/// CMCG against CMZ reachability on the five-state chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exp2Report {
    pub model: PipelineSummary,
    pub cmz: PipelineSummary,
    pub cmcg: PipelineSummary,
    /// Per step `min_l h_CMCG(l) − h_model(l)`.
    pub model_margin: Vec<f64>,
    /// Per step `min_l h_CMZ(l) − h_CMCG(l)`.
    pub cmz_margin: Vec<f64>,
    pub hierarchy_holds: bool,
    pub volume_ratio: f64,
    pub theta_star_in_cmcg: bool,
    pub containment: ContainmentReport,
    pub passed: bool,
    #[serde(skip)]
    pub time_ratio: f64,
}

/// Minimum volume and wall-time ratios asserted by the experiment.
pub const MIN_RATIO: f64 = 10.0;

fn support_tol(h: f64) -> f64 {
    1e-9 + 1e-6 * h.abs()
}

pub fn run_experiment2(cfg: &ExperimentConfig) -> Result<Exp2Report, Error> {
    let sys = cfg.validate()?;
    let NoiseSpec::Mixed { bounded_generators: gb, sigma } = &cfg.noise else {
        return Err(Error::Config("experiment 2 expects mixed noise".into()));
    };
    let (n, sigma) = (sys.state_dim(), *sigma);
    let sim = cfg.simulate(&sys)?;
    let data = build_data_equation(&sim.trajectory)?;
    let x0 = cfg.reach_x0.to_ccg()?;
    let u = cfg.reach_input.to_ccg()?;
    let k = cfg.steps;

    let t = Instant::now();
    let n_model = ParamSet::known(&sim.theta_star);
    let model_off = t.elapsed().as_secs_f64();
    let model_tube = reach_tube(&n_model, &x0, &u, &cfg.noise, k, &cfg.product)?;

    let t = Instant::now();
    let n_cmcg = mixed_param_set(&data, gb, sigma, cfg.alpha)?;
    let cmcg_off = t.elapsed().as_secs_f64();
    let cmcg_tube = reach_tube(&n_cmcg, &x0, &u, &cfg.noise, k, &cfg.product)?;

    // The CMZ pipeline boxes the Gaussian part at mσ in propagation as well.
    let t = Instant::now();
    let n_cmz = box_cmz_baseline(&data, sigma, cfg.m_box, gb)?;
    let cmz_off = t.elapsed().as_secs_f64();
    let boxed = NoiseSpec::Mixed {
        bounded_generators: hstack(gb, &(Matrix::identity(n, n) * (cfg.m_box * sigma))),
        sigma: 0.0,
    };
    let cmz_tube = reach_tube(&n_cmz, &x0, &u, &boxed, k, &cfg.product)?;

    let dirs = probe_directions(n, cfg.angles, cfg.seed);
    let exec = cfg.product.execution;
    let mut model_margin = Vec::with_capacity(k);
    let mut cmz_margin = Vec::with_capacity(k);
    let mut hierarchy_holds = true;
    for step in 1..=k {
        let hm = model_tube.steps[step].support_batch(&dirs, exec)?;
        let hc = cmcg_tube.steps[step].support_batch(&dirs, exec)?;
        let hz = cmz_tube.steps[step].support_batch(&dirs, exec)?;
        let mut mm = f64::INFINITY;
        let mut mz = f64::INFINITY;
        for i in 0..dirs.len() {
            mm = mm.min(hc[i] - hm[i]);
            mz = mz.min(hz[i] - hc[i]);
            hierarchy_holds &= hm[i] <= hc[i] + support_tol(hc[i]) && hc[i] <= hz[i] + support_tol(hz[i]);
        }
        model_margin.push(mm);
        cmz_margin.push(mz);
    }

    let containment = tube_containment_check(&n_cmcg, &u, &cfg.noise, &cmcg_tube, &cfg.product, cfg.mc_samples, cfg.seed)?;
    let model = PipelineSummary::from_tube("model", &n_model, model_off, &model_tube);
    let cmz = PipelineSummary::from_tube("cmz", &n_cmz, cmz_off, &cmz_tube);
    let cmcg = PipelineSummary::from_tube("cmcg", &n_cmcg, cmcg_off, &cmcg_tube);
    let volume_ratio = cmz.final_volume() / cmcg.final_volume();
    let time_ratio = cmz.total_seconds() / cmcg.total_seconds().max(1e-9);
    let report = Exp2Report {
        theta_star_in_cmcg: n_cmcg.contains(&sim.theta_star, 1e-9)?,
        passed: hierarchy_holds && volume_ratio >= MIN_RATIO && time_ratio >= MIN_RATIO && containment.violations == 0,
        model,
        cmz,
        cmcg,
        model_margin,
        cmz_margin,
        hierarchy_holds,
        volume_ratio,
        containment,
        time_ratio,
    };

    if let Some(dir) = &cfg.output_dir {
        write_json(&dir.join("exp2_report.json"), &report)?;
        let tubes = [("model", &model_tube), ("cmz", &cmz_tube), ("cmcg", &cmcg_tube)];
        let mut rows = Vec::new();
        for (name, tube) in tubes {
            for (step, h) in tube.hulls.iter().enumerate() {
                for d in 0..n {
                    rows.push(vec![name.to_string(), step.to_string(), (d + 1).to_string(), num(h.lo[d]), num(h.hi[d])]);
                }
            }
        }
        write_table(&dir.join("exp2_hulls.tsv"), &["pipeline", "step", "dim", "lo", "hi"], rows)?;
        let mut rows = Vec::new();
        for (name, tube) in tubes {
            for (step, set) in tube.steps.iter().enumerate() {
                for plane in [(0, 1), (2, 3), (3, 4)] {
                    for p in projection(set, plane, cfg.angles)? {
                        rows.push(vec![
                            name.to_string(),
                            step.to_string(),
                            format!("x{}x{}", plane.0 + 1, plane.1 + 1),
                            num(p[0]),
                            num(p[1]),
                        ]);
                    }
                }
            }
        }
        write_table(&dir.join("exp2_projections.tsv"), &["pipeline", "step", "plane", "x", "y"], rows)?;
        let timing = [&report.model, &report.cmz, &report.cmcg].map(|p| {
            serde_json::json!({
                "pipeline": p.name,
                "offline_seconds": p.offline_seconds,
                "total_seconds": p.total_seconds(),
                "final_volume": p.final_volume(),
            })
        });
        write_json(&dir.join("exp2_timing.json"), &serde_json::json!({ "rows": timing, "time_ratio": report.time_ratio }))?;
    }
    Ok(report)
}

fn projection(set: &Ccg, plane: (usize, usize), angles: usize) -> Result<Vec<[f64; 2]>, Error> {
    Ok(export_set_2d(set, plane, angles)?)
}

fn hstack(a: &Matrix, b: &Matrix) -> Matrix {
    let n = b.nrows();
    let mut out = Matrix::zeros(n, a.ncols() + b.ncols());
    if a.ncols() > 0 {
        out.view_mut((0, 0), (n, a.ncols())).copy_from(a);
    }
    out.view_mut((0, a.ncols()), (n, b.ncols())).copy_from(b);
    out
}
