//! `eig`, `partition` and `sweep`.

use std::path::Path;

use serde_json::json;

use super::config::RunConfig;
use super::{CliError, EXIT_RUNTIME};
use crate::eigensolve::first_dirichlet_eig;
use crate::io::{encode_pgm, encode_spf1, write_atomic};
use crate::partition::{optimize, run_sweep};

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).map_err(CliError::runtime)
}

/// Ground state of the configured domain: `eig.spf1` and `eig.json`.
pub fn cmd_eig(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let d = cfg.build_domain().map_err(CliError::config)?;
    let e = first_dirichlet_eig(&d.full_mask(), cfg.tolerances.eig).map_err(CliError::runtime)?;
    write_atomic(&out.join("eig.spf1"), &encode_spf1(&e.field)).map_err(CliError::runtime)?;
    let summary = json!({
        "lambda": e.lambda,
        "residual": e.residual,
        "iterations": e.iterations,
        "nx": d.nx,
        "ny": d.ny,
        "h": d.h,
    });
    write_json(&out.join("eig.json"), &summary)?;
    println!("lambda1={:.9}", e.lambda);
    Ok(())
}

/// Optimized partition: `manifest.json`, `u_<i>.spf1` and `support_<i>.pgm`.
pub fn cmd_partition(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let d = cfg.build_domain().map_err(CliError::config)?;
    let p = cfg.problem(&d);
    let s = optimize(&p).map_err(CliError::runtime)?;
    for i in 0..s.k() {
        write_atomic(&out.join(format!("u_{}.spf1", i + 1)), &encode_spf1(&s.fields[i])).map_err(CliError::runtime)?;
        write_atomic(&out.join(format!("support_{}.pgm", i + 1)), &encode_pgm(&s.supports[i]))
            .map_err(CliError::runtime)?;
    }
    write_json(&out.join("manifest.json"), &s.manifest(&p))?;
    let lambdas: Vec<String> = s.lambdas.iter().map(|l| format!("{l:.9}")).collect();
    println!("c={:.9} lambdas=[{}] outer_iterations={}", s.c, lambdas.join(", "), s.outer_iterations);
    Ok(())
}

/// r-sweep: `sweep.csv` and `sweep.json`. Succeeds when at least 80% of
/// the r values were optimized.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let d = cfg.build_domain().map_err(CliError::config)?;
    let rs = cfg
        .problem
        .r_values
        .clone()
        .filter(|v| !v.is_empty())
        .ok_or_else(|| CliError::config("sweep needs problem.r_values"))?;
    if rs.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(CliError::config("r_values must be finite and nonnegative"));
    }
    let p = cfg.problem(&d);
    let report = run_sweep(&p, &rs).map_err(|e| match e {
        crate::SegError::InvalidInput(_) => CliError::config(e),
        e => CliError::runtime(e),
    })?;
    write_atomic(&out.join("sweep.csv"), report.to_csv().as_bytes()).map_err(CliError::runtime)?;
    write_json(&out.join("sweep.json"), &report)?;
    for f in &report.failures {
        eprintln!("r = {}: {}", f.r, f.error);
    }
    println!(
        "rows={} failures={} slope={}",
        report.rows.len(),
        report.failures.len(),
        report.slope.map_or("n/a".into(), |s| format!("{s:.6}"))
    );
    if report.success_fraction() < 0.8 {
        return Err(CliError { code: EXIT_RUNTIME, message: "fewer than 80% of the r values succeeded".into() });
    }
    Ok(())
}
