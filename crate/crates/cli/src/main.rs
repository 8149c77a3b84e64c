use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::de::DeserializeOwned;

use reachset::error::{Error, IdentError};
use reachset::harness::{
    run_experiment1, run_experiment2, run_experiment3, write_json, write_table, BoxSpec, ExperimentConfig,
};
use reachset::identification::{
    bounded_param_set, box_noise, build_data_equation, gaussian_param_set, mixed_param_set, NoiseSpec, ParamSet,
    Trajectory,
};
use reachset::propagation::{reach_tube, BudgetPolicy, ProductConfig, GENERATOR_WARN};

mod selftest;

#[derive(Parser)]
#[command(name = "reachset", version, about = "Data-driven reachability with mixed-norm generator sets")]
struct Cli {
    /// JSON file with experiment configuration fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for reports and plot tables.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Reduce every reachable set to at most this many generators.
    #[arg(long, global = true)]
    reduce: Option<usize>,
    /// Tighten coefficient bounds with auxiliary support programs.
    #[arg(long, global = true)]
    tighten_bounds: bool,
    #[arg(long, global = true, value_enum)]
    budget: Option<Budget>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Budget {
    PerStep,
    Shared,
}

#[derive(Subcommand)]
enum Command {
    /// Build a parameter set from a recorded trajectory.
    Identify {
        /// Trajectory JSON: `{"states": [[..], ..], "inputs": [[..], ..]}`.
        #[arg(long)]
        data: PathBuf,
        /// Noise JSON, e.g. `{"type": "gaussian", "sigma": 0.02}`.
        #[arg(long)]
        noise: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Propagate a stored parameter set.
    Reach {
        /// Parameter set JSON written by `identify`.
        #[arg(long)]
        param: PathBuf,
        /// Box JSON: `{"center": [..], "radius": [..]}`.
        #[arg(long)]
        x0: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long, default_value_t = 5)]
        steps: usize,
    },
    /// Parameter-set hierarchy on the scalar system.
    Exp1,
    /// CMCG against CMZ reachability on the five-state system.
    Exp2,
    /// Gaussian-mixture noise through the MVEE surrogate.
    Exp3,
    /// Fast numeric checks of the core routines.
    Selftest,
}

enum Failure {
    Check(String),
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Assertion(m) => Failure::Check(m),
            Error::Io(_) | Error::Parse(_) | Error::Config(_) => Failure::Input(e.to_string()),
            Error::Ident(
                IdentError::MalformedTrajectory(_)
                | IdentError::InvalidNoise(_)
                | IdentError::RankDeficientData(_)
                | IdentError::EmptyParamSet,
            ) => Failure::Input(e.to_string()),
            other => Failure::Check(other.to_string()),
        }
    }
}

impl From<IdentError> for Failure {
    fn from(e: IdentError) -> Self {
        Error::from(e).into()
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

impl Cli {
    fn product(&self, mut p: ProductConfig) -> ProductConfig {
        if self.reduce.is_some() {
            p.reduction_order = self.reduce;
        }
        p.tighten_bounds |= self.tighten_bounds;
        if let Some(b) = self.budget {
            p.budget = match b {
                Budget::PerStep => BudgetPolicy::PerStep,
                Budget::Shared => BudgetPolicy::Shared,
            };
        }
        p
    }

    fn experiment(&self, preset: ExperimentConfig) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => read_json(path)?,
            None => preset,
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        cfg.product = self.product(cfg.product);
        Ok(cfg)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn verdict(name: &str, passed: bool) -> Result<(), Failure> {
    if passed {
        println!("{name}: PASS");
        Ok(())
    } else {
        Err(Failure::Check(format!("{name}: checks failed (see report)")))
    }
}

fn identify(cli: &Cli, data: &Path, noise: &Path, alpha: f64) -> Result<(), Failure> {
    let traj: Trajectory = read_json(data)?;
    let noise: NoiseSpec = read_json(noise)?;
    noise.validate(traj.state_dim())?;
    let rec = build_data_equation(&traj)?;
    let set = match &noise {
        NoiseSpec::Gaussian { sigma } => gaussian_param_set(&rec, *sigma, alpha)?,
        NoiseSpec::Bounded { a } => bounded_param_set(&rec, &box_noise(rec.n(), rec.horizon(), *a))?,
        NoiseSpec::Mixed { bounded_generators, sigma } => mixed_param_set(&rec, bounded_generators, *sigma, alpha)?,
        NoiseSpec::GaussianMixture { .. } => {
            return Err(Failure::Input("mixture noise is handled by `exp3` through its convex surrogate".into()))
        }
    };
    let summary = set.summary().map_err(Error::from)?;
    let dir = cli.out_dir();
    write_json(&dir.join("param_set.json"), &set)?;
    write_json(&dir.join("param_summary.json"), &summary)?;
    println!("kind: {:?}, shape {}x{}", summary.kind, summary.shape.0, summary.shape.1);
    println!("generators: {}, constraints: {}, confidence: {}", summary.generators, summary.constraints, summary.confidence);
    for (i, (c, r)) in summary.center.iter().zip(&summary.radii).enumerate() {
        let row: Vec<String> = c.iter().zip(r).map(|(c, r)| format!("{c:.6} ± {r:.3e}")).collect();
        println!("row {}: {}", i + 1, row.join(", "));
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn reach(cli: &Cli, param: &Path, x0: &Path, input: &Path, noise: &Path, steps: usize) -> Result<(), Failure> {
    let set: ParamSet = read_json(param)?;
    let x0: BoxSpec = read_json(x0)?;
    let u: BoxSpec = read_json(input)?;
    let noise: NoiseSpec = read_json(noise)?;
    let cfg = cli.product(ProductConfig::default());
    let x0 = x0.to_ccg().map_err(|e| Failure::Input(e.to_string()))?;
    let u = u.to_ccg().map_err(|e| Failure::Input(e.to_string()))?;
    let (n, p) = set.set.shape();
    if x0.dim() != n || x0.dim() + u.dim() != p {
        return Err(Failure::Input(format!("sets have dimensions {} and {}, parameter set is {n}x{p}", x0.dim(), u.dim())));
    }
    let tube = reach_tube(&set, &x0, &u, &noise, steps, &cfg)?;
    if tube.generators.iter().any(|&g| g > GENERATOR_WARN) {
        warn!("generator count exceeded {GENERATOR_WARN}; consider --reduce");
    }
    let rows = tube.hulls.iter().enumerate().flat_map(|(k, h)| {
        (0..h.lo.len()).map(move |d| vec![k.to_string(), (d + 1).to_string(), format!("{:?}", h.lo[d]), format!("{:?}", h.hi[d])])
    });
    let dir = cli.out_dir();
    write_table(&dir.join("reach_hulls.tsv"), &["step", "dim", "lo", "hi"], rows)?;
    let meta = serde_json::json!({
        "generators": tube.generators,
        "volumes": tube.volumes,
        "timings": tube.timings,
        "product": cfg,
    });
    write_json(&dir.join("reach_meta.json"), &meta)?;
    for (k, v) in tube.volumes.iter().enumerate() {
        println!("step {k}: hull volume {v:.4e}, {} generators", tube.generators[k]);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Identify { data, noise, alpha } => identify(cli, data, noise, *alpha),
        Command::Reach { param, x0, input, noise, steps } => reach(cli, param, x0, input, noise, *steps),
        Command::Exp1 => {
            let cfg = cli.experiment(ExperimentConfig::experiment1())?;
            let r = run_experiment1(&cfg)?;
            println!("boundary deviation {:.3e}, area ratio {:.2}, {:.3} s", r.boundary_max_deviation, r.area_ratio, r.elapsed);
            verdict("exp1", r.passed)
        }
        Command::Exp2 => {
            let cfg = cli.experiment(ExperimentConfig::experiment2())?;
            let r = run_experiment2(&cfg)?;
            for p in [&r.model, &r.cmz, &r.cmcg] {
                println!("{:>6}: offline {:.3} s, total {:.3} s, final volume {:.3e}", p.name, p.offline_seconds, p.total_seconds(), p.final_volume());
            }
            println!("volume ratio {:.1}, time ratio {:.1}, hierarchy {}", r.volume_ratio, r.time_ratio, r.hierarchy_holds);
            verdict("exp2", r.passed)
        }
        Command::Exp3 => {
            let cfg = cli.experiment(ExperimentConfig::experiment3())?;
            let r = run_experiment3(&cfg)?;
            println!("HDR {:?}, surrogate {:?}, coverage {:.4}", r.hdr_intervals, r.surrogate, r.surrogate_coverage);
            println!("nested per step {:?}", r.nested);
            verdict("exp3", r.passed)
        }
        Command::Selftest => {
            let failed = selftest::run();
            if failed == 0 {
                Ok(())
            } else {
                Err(Failure::Check(format!("{failed} self-test checks failed")))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => {
            info!("done");
            ExitCode::SUCCESS
        }
        Err(Failure::Check(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            eprintln!("input error: {m}");
            ExitCode::from(2)
        }
    }
}
