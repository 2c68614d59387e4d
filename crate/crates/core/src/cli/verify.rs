//! The `verify` check suite. Each check writes `verify_<name>.csv` and
//! contributes an entry to `verify.json`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use super::{CliError, EXIT_CHECK_FAILED, EXIT_RUNTIME};
use crate::eigensolve::{
    bessel_first_zero, cap_eigenvalue, first_dirichlet_eig, poincare_check, radial_ground_state, EigenResult,
};
use crate::error::{Result, SegError};
use crate::grid::{inscribed_center, GridDomain, Point, ScalarField};
use crate::io::write_atomic;
use crate::monotonicity::{
    acf_scan, acf_scan_grid, build_radial_profile, cjk_product, gamma_derivative, gamma_fun, gradient_mean_value_check,
    interface_point, mean_value_check, planar_profile,
};
use crate::partition::{gradient_location_check, optimize};

pub const CHECKS: &[&str] = &[
    "cap",
    "psi",
    "gamma",
    "radial",
    "mean_value",
    "gradient_mean_value",
    "acf",
    "cjk",
    "poincare",
    "gradient_location",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub values: BTreeMap<String, f64>,
    pub error: Option<String>,
}

struct CheckData {
    csv: String,
    passed: bool,
    values: BTreeMap<String, f64>,
}

impl CheckData {
    fn new(csv: String) -> Self {
        CheckData { csv, passed: true, values: BTreeMap::new() }
    }

    /// Records `value` and fails the check unless `ok`.
    fn expect(&mut self, key: &str, value: f64, ok: bool) {
        self.values.insert(key.into(), value);
        self.passed &= ok;
    }
}

/// Lattice state shared by the field checks, built on first use.
struct Lattice<'a> {
    cfg: &'a RunConfig,
    domain: &'a Arc<GridDomain>,
    ground: OnceLock<std::result::Result<EigenResult, String>>,
}

impl Lattice<'_> {
    fn ground(&self) -> Result<&EigenResult> {
        self.ground
            .get_or_init(|| {
                first_dirichlet_eig(&self.domain.full_mask(), self.cfg.tolerances.eig).map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| SegError::invalid(e.clone()))
    }

    fn center_or_incenter(&self) -> (Point, f64) {
        let (p, rho) = inscribed_center(self.domain);
        (self.cfg.verify.center.unwrap_or(self.domain.coords(p)), rho)
    }
}

/// Radii `4h, 5h, ...` up to `rmax`.
fn lattice_radii(h: f64, rmax: f64) -> Vec<f64> {
    (4..).map(|k| k as f64 * h).take_while(|&r| r <= rmax + 1e-12 * h).collect()
}

fn csv_rows<'a>(header: &str, rows: impl Iterator<Item = (f64, f64)> + 'a) -> String {
    let mut out = format!("{header}\n");
    for (a, b) in rows {
        out.push_str(&format!("{a},{b:.9}\n"));
    }
    out
}

fn check_cap(cfg: &RunConfig) -> Result<CheckData> {
    let dim = cfg.verify.dim;
    let radii: Vec<f64> = (0..=10).map(|i| i as f64 * 0.05).collect();
    let lambdas = radii.iter().map(|&r| cap_eigenvalue(dim, r).map(|c| c.lambda1)).collect::<Result<Vec<_>>>()?;
    let mut c = CheckData::new(csv_rows("r,lambda", radii.iter().copied().zip(lambdas.iter().copied())));
    let top = dim as f64 - 1.0;
    c.expect("lambda_at_0", lambdas[0], (lambdas[0] - top).abs() <= 1e-6);
    let rise = lambdas.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    c.expect("max_increase", rise, rise <= 1e-12);
    let slope = (lambdas[1] - lambdas[0]) / radii[1];
    c.expect("slope_at_0", slope, slope < 0.0);
    Ok(c)
}

fn check_psi(cfg: &RunConfig) -> Result<CheckData> {
    let v = &cfg.verify;
    let a = build_radial_profile(v.dim, v.r_bar, v.samples)?;
    let b = build_radial_profile(v.dim, v.r_bar, 2 * v.samples)?;
    let rows = a.s.iter().copied().zip(a.psi.iter().copied()).filter(|(s, _)| *s <= v.r_bar * (1.0 + 1e-12));
    let mut c = CheckData::new(csv_rows("s,psi", rows));
    let (ca, cb) = (a.psi_lipschitz_constant(), b.psi_lipschitz_constant());
    c.expect("C", ca, ca.is_finite());
    let change = (ca - cb).abs() / cb;
    c.expect("C_change_on_doubling", change, change <= 0.1);
    c.expect("psi_0", a.psi[0], (a.psi[0] - 1.0).abs() <= 1e-8);
    let end = *a.gamma_phi.last().unwrap();
    c.expect("gamma_phi_end", end, end.abs() <= 1e-8);
    Ok(c)
}

fn check_gamma(cfg: &RunConfig) -> Result<CheckData> {
    let dim = cfg.verify.dim;
    if dim < 2 {
        return Err(SegError::invalid("gamma needs dim ≥ 2"));
    }
    let top = dim as f64 - 1.0;
    let ts: Vec<f64> = (0..=1000).map(|j| 2.0 * top * j as f64 / 1000.0).collect();
    let gs: Vec<f64> = ts.iter().map(|&t| gamma_fun(dim, t)).collect();
    let mut c = CheckData::new(csv_rows("t,gamma", ts.iter().copied().zip(gs.iter().copied())));
    c.expect("gamma_0", gs[0], gs[0] == 0.0);
    let g = gamma_fun(dim, top);
    c.expect("gamma_at_n_minus_1", g, (g - 1.0).abs() <= 1e-12);
    let dg = gamma_derivative(dim, top);
    c.expect("derivative_at_n_minus_1", dg, (dg - 1.0 / dim as f64).abs() <= 1e-6);
    let min_step = gs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    c.expect("min_increment", min_step, min_step > 0.0);
    let max_curv = gs.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).fold(f64::NEG_INFINITY, f64::max);
    c.expect("max_second_difference", max_curv, max_curv <= 1e-12);
    Ok(c)
}

fn check_radial(cfg: &RunConfig) -> Result<CheckData> {
    let v = &cfg.verify;
    let g = radial_ground_state(v.dim, v.r_bar, v.samples)?;
    let j = bessel_first_zero(v.dim as f64 / 2.0 - 1.0)?;
    let exact = (j / (2.0 * v.r_bar)).powi(2);
    let mut c = CheckData::new(csv_rows("s,phi", g.s.iter().copied().zip(g.phi.iter().copied())));
    let rel = (g.lambda_bar - exact).abs() / exact;
    c.expect("lambda_bar", g.lambda_bar, rel <= 1e-6);
    c.values.insert("relative_error".into(), rel);
    let rise = g.phi.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    c.expect("max_increase", rise, rise <= 0.0);
    Ok(c)
}

fn check_mean_value(l: &Lattice, gradient: bool) -> Result<CheckData> {
    let e = l.ground()?;
    let (center, rho) = l.center_or_incenter();
    let count = if gradient { 9 } else { 18 };
    let radii: Vec<f64> = (1..=count).map(|i| 0.05 * i as f64 * rho).collect();
    let rep = if gradient {
        gradient_mean_value_check(&e.field, e.lambda, center, &radii)?
    } else {
        mean_value_check(&e.field, e.lambda, center, &radii)?
    };
    let mut c = CheckData::new(rep.to_csv());
    c.expect("max_violation", rep.max_violation, rep.max_violation <= 0.01);
    for (k, val) in &rep.constants {
        c.values.insert(k.clone(), *val);
    }
    Ok(c)
}

fn check_acf(l: &Lattice) -> Result<CheckData> {
    let e = l.ground()?;
    let center = l.cfg.verify.center.unwrap_or([0.0, 0.0]);
    let phi = planar_profile(e.lambda)?;
    let radii = lattice_radii(l.domain.h, phi.radius.min(0.5));
    let rep = acf_scan(&e.field, &phi, center, &radii, &acf_scan_grid(phi.radius))?;
    let mut c = CheckData::new(rep.to_csv());
    c.expect("max_violation", rep.max_violation, rep.max_violation <= 0.02);
    for key in ["sandwich_lower", "sandwich_upper"] {
        let v = rep.constants[key];
        c.expect(key, v, v < 1e3);
    }
    c.values.insert("C".into(), rep.constants["C"]);
    c.values.insert("r_bar".into(), phi.radius);
    Ok(c)
}

fn check_cjk(l: &Lattice) -> Result<CheckData> {
    let d = l.domain;
    let mut p = l.cfg.problem(d);
    p.k = 2;
    p.r = 0.0;
    p.sites = None;
    let s = optimize(&p)?;
    let target = l.cfg.verify.center.unwrap_or_else(|| d.coords(inscribed_center(d).0));
    let x = interface_point(&s.fields[0], &s.fields[1], target)
        .ok_or_else(|| SegError::invalid("the two supports never come within 2h"))?;
    let edge = (0..d.len())
        .filter(|&q| !d.mask[q])
        .map(|q| (d.coords(q)[0] - x[0]).hypot(d.coords(q)[1] - x[1]))
        .fold(f64::INFINITY, f64::min);
    let radii = lattice_radii(d.h, 0.25f64.min(0.9 * edge));
    let rep = cjk_product(&s.fields[0], &s.fields[1], x, &radii)?;
    let mut c = CheckData::new(rep.to_csv());
    let ratio = rep.constants.get("max_min_ratio").copied().unwrap_or(f64::INFINITY);
    c.expect("max_min_ratio", ratio, ratio <= 50.0);
    let rho = rep.constants.get("spearman").copied().unwrap_or(f64::NAN);
    c.expect("spearman", rho, rho >= -0.5);
    c.values.insert("x".into(), x[0]);
    c.values.insert("y".into(), x[1]);
    Ok(c)
}

/// Random nonnegative fields vanishing on the excluded unit ball, on
/// `[-1.5, 1.5]²` at the configured resolution.
fn check_poincare(cfg: &RunConfig) -> Result<CheckData> {
    let n = cfg.grid.n.max(8);
    let h = 3.0 / n as f64;
    let d = GridDomain::from_mask(n + 1, n + 1, h, [-1.5, -1.5], vec![true; (n + 1) * (n + 1)])?;
    let outside = |p: Point| (p[0] + 1.0).hypot(p[1]) > 1.0;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (k, r) in [0.25, 0.5, 1.0].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.problem.seed ^ (k as u64 + 1));
        let mut max: f64 = poincare_check(
            &ScalarField::from_fn(&d, |p| if outside(p) { (p[0] + 1.0).hypot(p[1]) - 1.0 } else { 0.0 }),
            r,
        )?;
        for _ in 0..cfg.verify.poincare_fields {
            let f = ScalarField::from_fn(&d, |p| if outside(p) { rng.gen::<f64>() } else { 0.0 });
            max = max.max(poincare_check(&f, r)?);
        }
        worst = worst.max(max);
        rows.push((r, max));
    }
    let mut c = CheckData::new(csv_rows("r,max_ratio", rows.into_iter()));
    c.expect("max_ratio", worst, worst.is_finite() && worst <= 10.0);
    Ok(c)
}

fn check_gradient_location(l: &Lattice) -> Result<CheckData> {
    let g = gradient_location_check(l.ground()?);
    let mut c =
        CheckData::new(format!("max_grad,boundary_grad,ratio\n{},{},{}\n", g.max_grad, g.boundary_grad, g.ratio));
    c.expect("ratio", g.ratio, g.ratio >= 0.98);
    c.values.insert("max_grad".into(), g.max_grad);
    Ok(c)
}

fn run_check(name: &str, cfg: &RunConfig, lattice: Option<&Lattice>) -> Result<CheckData> {
    let lat = || lattice.ok_or_else(|| SegError::invalid("no lattice"));
    match name {
        "cap" => check_cap(cfg),
        "psi" => check_psi(cfg),
        "gamma" => check_gamma(cfg),
        "radial" => check_radial(cfg),
        "poincare" => check_poincare(cfg),
        "mean_value" => check_mean_value(lat()?, false),
        "gradient_mean_value" => check_mean_value(lat()?, true),
        "acf" => check_acf(lat()?),
        "cjk" => check_cjk(lat()?),
        "gradient_location" => check_gradient_location(lat()?),
        other => Err(SegError::invalid(format!("unknown check {other:?}"))),
    }
}

fn needs_lattice(name: &str) -> bool {
    matches!(name, "mean_value" | "gradient_mean_value" | "acf" | "cjk" | "gradient_location")
}

/// Runs `cfg.checks`, writing one CSV per check and `verify.json`.
pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> std::result::Result<(), CliError> {
    if cfg.checks.is_empty() {
        return Err(CliError::config("verify needs a nonempty checks list"));
    }
    if let Some(bad) = cfg.checks.iter().find(|c| !CHECKS.contains(&c.as_str())) {
        return Err(CliError::config(format!("unknown check {bad:?}; known checks: {}", CHECKS.join(", "))));
    }
    let domain = if cfg.checks.iter().any(|c| needs_lattice(c)) {
        Some(cfg.build_domain().map_err(CliError::config)?)
    } else {
        None
    };
    let lattice = domain.as_ref().map(|d| Lattice { cfg, domain: d, ground: OnceLock::new() });
    let results: Vec<(String, Result<CheckData>)> =
        cfg.checks.par_iter().map(|name| (name.clone(), run_check(name, cfg, lattice.as_ref()))).collect();

    let mut outcomes = Vec::new();
    let mut errors = 0;
    for (name, res) in results {
        let outcome = match res {
            Ok(data) => {
                write_atomic(&out.join(format!("verify_{name}.csv")), data.csv.as_bytes())
                    .map_err(CliError::runtime)?;
                CheckOutcome { name, passed: data.passed, values: data.values, error: None }
            }
            Err(e) => {
                errors += 1;
                CheckOutcome { name, passed: false, values: BTreeMap::new(), error: Some(e.to_string()) }
            }
        };
        let status = if outcome.passed { "PASS" } else { "FAIL" };
        let detail: Vec<String> = outcome.values.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
        println!("{status} {}: {}", outcome.name, outcome.error.clone().unwrap_or_else(|| detail.join(" ")));
        outcomes.push(outcome);
    }
    let passed = outcomes.iter().all(|o| o.passed);
    let summary = serde_json::json!({ "passed": passed, "checks": outcomes });
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::runtime(e.to_string()))?;
    text.push('\n');
    write_atomic(&out.join("verify.json"), text.as_bytes()).map_err(CliError::runtime)?;
    if errors > 0 {
        Err(CliError { code: EXIT_RUNTIME, message: format!("{errors} check(s) could not be evaluated") })
    } else if !passed {
        Err(CliError { code: EXIT_CHECK_FAILED, message: "one or more checks exceeded their tolerance".into() })
    } else {
        Ok(())
    }
}
