//! Quick numeric checks with known answers. Prints one line per check.

use reachset::harness::{run_experiment1, ExperimentConfig};
use reachset::numeric::{Matrix, Vector};
use reachset::propagation::{cmcg_ccg_product, ProductConfig};
use reachset::sets::{Ccg, Cmcg, Norm, NormGroup};
use reachset::stats::{chi2_quantile, volume_inflation_ratio};

fn report(name: &str, ok: bool, detail: String) -> usize {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    usize::from(!ok)
}

fn close(got: Result<f64, impl std::fmt::Display>, want: f64, tol: f64) -> (bool, String) {
    match got {
        Ok(v) => ((v - want).abs() <= tol, format!("{v:.6} (want {want}, tol {tol:e})")),
        Err(e) => (false, e.to_string()),
    }
}

/// Runs all checks and returns the number of failures.
pub fn run() -> usize {
    let mut failed = 0;
    for (d, want) in [(1, 3.8415), (2, 5.9915), (30, 43.773)] {
        let (ok, msg) = close(chi2_quantile(d, 0.95), want, 1e-3);
        failed += report(&format!("chi2 quantile d={d}"), ok, msg);
    }
    for (q, want) in [(2, 1.2732), (5, 6.079)] {
        let (ok, msg) = close(volume_inflation_ratio(q), want, 0.01 * want);
        failed += report(&format!("box/ball volume ratio q={q}"), ok, msg);
    }

    let hull = (|| {
        let n = Cmcg::new(
            Matrix::from_element(1, 1, 1.0),
            &[Matrix::from_element(1, 1, 0.1)],
            vec![NormGroup::singleton(0, Norm::Inf)],
            None,
        )?;
        let e = Ccg::ellipsoid(Vector::from_element(1, 2.0), Matrix::from_element(1, 1, 0.5))?;
        let h = cmcg_ccg_product(&n, &e, &ProductConfig::default())?.interval_hull()?;
        Ok::<_, reachset::error::SetError>((h.lo[0], h.hi[0]))
    })();
    let (ok, msg) = match hull {
        Ok((lo, hi)) => ((lo - 1.25).abs() < 1e-12 && (hi - 2.75).abs() < 1e-12, format!("[{lo}, {hi}] (want [1.25, 2.75])")),
        Err(e) => (false, e.to_string()),
    };
    failed += report("scalar product hull", ok, msg);

    let (ok, msg) = match run_experiment1(&ExperimentConfig::experiment1()) {
        Ok(r) => (r.passed, format!("deviation {:.2e}, area ratio {:.2}", r.boundary_max_deviation, r.area_ratio)),
        Err(e) => (false, e.to_string()),
    };
    failed += report("gaussian parameter set equals likelihood ellipsoid", ok, msg);
    failed
}
