//! Mean-value property, the `Γ_φ`/`ψ` radial profiles, the one-phase ACF
//! functional `Ψ`, the exponent function `γ`, and the two-phase CJK product,
//! all evaluated by direct quadrature on the lattice.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::eigensolve::{bessel_first_zero, radial_ground_state, RadialGroundState};
use crate::error::{Result, SegError};
use crate::grid::{ball_edges, ball_weights, gradient_magnitude, Point, ScalarField};
use crate::stats::spearman;

/// Samples used for 2-D radial ground states built internally.
const PLANAR_PROFILE_SAMPLES: usize = 4096;

/// `φ`, `Γ_φ` and `ψ = s^{N-2} φ² Γ_φ` on a uniform grid over `[0, 3R̄/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub dim: usize,
    pub r_bar: f64,
    pub lambda_bar: f64,
    pub s: Vec<f64>,
    pub phi: Vec<f64>,
    /// `Γ_φ`; the entry at `s = 0` is `+∞`.
    pub gamma_phi: Vec<f64>,
    pub psi: Vec<f64>,
}

/// Radial profile of the ground state of `B_{2R̄}` in dimension `N ≥ 3`.
/// The profile grid has at least `samples` intervals.
pub fn build_radial_profile(dim: usize, r_bar: f64, samples: usize) -> Result<RadialProfile> {
    if dim < 3 {
        return Err(SegError::invalid("the Γ_φ profile needs N ≥ 3"));
    }
    if samples < 256 {
        return Err(SegError::invalid("at least 256 samples are required"));
    }
    // The profile covers the first three quarters of the radial grid.
    let q = samples.div_ceil(3);
    let g = radial_ground_state(dim, r_bar, 4 * q)?;
    radial_profile_from(dim, r_bar, g.lambda_bar, &g.phi[..=3 * q])
}

/// Builds `Γ_φ` and `ψ` from a profile `phi` sampled uniformly on
/// `[0, 3R̄/2]`, with `φ(s) = 1 - λ̄ s²/(2N) + O(s⁴)` near the origin.
///
/// The terms `t^{1-N}` and `(λ̄/N) t^{3-N}` of the integrand are integrated
/// exactly; the bounded remainder is swept inward from `3R̄/2` with a
/// third-order three-point rule.
pub fn radial_profile_from(dim: usize, r_bar: f64, lambda_bar: f64, phi: &[f64]) -> Result<RadialProfile> {
    if dim < 3 {
        return Err(SegError::invalid("the Γ_φ profile needs N ≥ 3"));
    }
    if !(r_bar > 0.0 && r_bar.is_finite()) || !(lambda_bar >= 0.0) {
        return Err(SegError::invalid("R̄ must be positive and λ̄ nonnegative"));
    }
    let m = phi.len().saturating_sub(1);
    if m < 3 {
        return Err(SegError::invalid("profile needs at least 4 samples"));
    }
    if phi.iter().any(|&p| !(p > 0.0)) {
        return Err(SegError::invalid("φ must be positive on [0, 3R̄/2]"));
    }
    let n = dim as f64;
    let big_s = 1.5 * r_bar;
    let h = big_s / m as f64;
    let a = lambda_bar / n;
    let t: Vec<f64> = (0..=m).map(|k| k as f64 * h).collect();
    let analytic = |s: f64| {
        let lead = s.powf(2.0 - n) - big_s.powf(2.0 - n);
        let second = if dim == 4 { (big_s / s).ln() } else { (big_s.powf(4.0 - n) - s.powf(4.0 - n)) / (4.0 - n) };
        lead + (n - 2.0) * a * second
    };
    let mut g = vec![0.0; m + 1];
    for k in 1..=m {
        let tk = t[k];
        g[k] = tk.powf(1.0 - n) * (1.0 / (phi[k] * phi[k]) - 1.0 - a * tk * tk);
    }
    let mut rem = vec![0.0; m + 1];
    rem[m - 1] = h / 12.0 * (5.0 * g[m] + 8.0 * g[m - 1] - g[m - 2]);
    for k in (1..m - 1).rev() {
        rem[k] = rem[k + 1] + h / 12.0 * (5.0 * g[k] + 8.0 * g[k + 1] - g[k + 2]);
    }
    let mut gamma_phi = vec![f64::INFINITY; m + 1];
    let mut psi = vec![1.0; m + 1];
    for k in 1..m {
        gamma_phi[k] = analytic(t[k]) + (n - 2.0) * rem[k];
        psi[k] = t[k].powf(n - 2.0) * phi[k] * phi[k] * gamma_phi[k];
    }
    gamma_phi[m] = 0.0;
    psi[m] = 0.0;
    Ok(RadialProfile { dim, r_bar, lambda_bar, s: t, phi: phi.to_vec(), gamma_phi, psi })
}

impl RadialProfile {
    /// Smallest `C` with `|ψ(s) - 1| ≤ C s` at every sample in `(0, R̄]`.
    pub fn psi_lipschitz_constant(&self) -> f64 {
        self.s
            .iter()
            .zip(&self.psi)
            .filter(|(s, _)| **s > 0.0 && **s <= self.r_bar * (1.0 + 1e-12))
            .map(|(s, p)| (p - 1.0).abs() / s)
            .fold(0.0, f64::max)
    }
}

/// `γ(t) = sqrt(((N-2)/2)² + t) - (N-2)/2`.
pub fn gamma_fun(dim: usize, t: f64) -> f64 {
    let b = (dim as f64 - 2.0) / 2.0;
    (b * b + t).sqrt() - b
}

/// Central-difference derivative of [`gamma_fun`].
pub fn gamma_derivative(dim: usize, t: f64) -> f64 {
    let step = if t > 0.0 { (1e-4f64).min(0.5 * t) } else { 1e-4 };
    if t <= 0.0 {
        return (gamma_fun(dim, t + step) - gamma_fun(dim, t)) / step;
    }
    (gamma_fun(dim, t + step) - gamma_fun(dim, t - step)) / (2.0 * step)
}

/// Radius-indexed values of a diagnostic functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Largest failure of the claimed property, relative to the compared value.
    pub max_violation: f64,
    pub constants: BTreeMap<String, f64>,
    pub metadata: BTreeMap<String, String>,
}

impl MonotonicityReport {
    fn new(radii: &[f64], values: Vec<f64>, max_violation: f64) -> Self {
        MonotonicityReport {
            radii: radii.to_vec(),
            values,
            max_violation,
            constants: BTreeMap::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,value\n");
        for (r, v) in self.radii.iter().zip(&self.values) {
            out.push_str(&format!("{r},{v}\n"));
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "max_violation": self.max_violation,
            "fitted_constants": self.constants,
            "metadata": self.metadata,
        })
    }
}

/// Largest relative decrease between consecutive values.
pub fn max_relative_decrease(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| {
            if w[0] > 0.0 {
                ((w[0] - w[1]) / w[0]).max(0.0)
            } else if w[1] < w[0] {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(SegError::invalid("no radii given"));
    }
    if radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SegError::invalid("radii must be positive and strictly increasing"));
    }
    Ok(())
}

fn dist(p: Point, q: Point) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// Cumulative sums of `weight(p, q, d)` over [`ball_edges`] at each radius.
fn edge_sums(field: &ScalarField, center: Point, radii: &[f64], weight: impl Fn(usize, usize, f64) -> f64) -> Vec<f64> {
    let rmax = *radii.last().unwrap();
    let edges = ball_edges(&field.domain, center, rmax);
    let mut out = Vec::with_capacity(radii.len());
    let mut acc = 0.0;
    let mut k = 0;
    for &r in radii {
        while k < edges.len() && edges[k].2 < r {
            let (p, q, d) = edges[k];
            acc += weight(p, q, d);
            k += 1;
        }
        out.push(acc);
    }
    out
}

/// 2-D radial ground state of `B_{2R̄}` with `λ₁(B_{2R̄}) = lambda_bar`.
pub fn planar_profile(lambda_bar: f64) -> Result<RadialGroundState> {
    if !(lambda_bar > 0.0 && lambda_bar.is_finite()) {
        return Err(SegError::invalid("λ̄ must be positive"));
    }
    let j = bessel_first_zero(0.0)?;
    radial_ground_state(2, j / (2.0 * lambda_bar.sqrt()), PLANAR_PROFILE_SAMPLES)
}

/// Compares the planar ball averages `A(r) = r^{-2} ∫_{B_r} v` against
/// `A(R)/φ(R)` for every sampled pair `r < R`, with `φ` the ground state of
/// the ball whose first eigenvalue is `lambda` (`φ ≡ 1` when `lambda = 0`).
///
/// Values are `A(r)`. Constants: `phi_average_violation` (largest relative
/// decrease of `r^{-2} ∫_{B_r} v/φ`), `subsolution_defect` (largest positive
/// part of `-Δ_h v - λ v` on the largest ball, relative to `max |Δ_h v|`),
/// and `r_bar` when `lambda > 0`.
pub fn mean_value_check(v: &ScalarField, lambda: f64, center: Point, radii: &[f64]) -> Result<MonotonicityReport> {
    check_radii(radii)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SegError::invalid("λ must be nonnegative"));
    }
    let d = &*v.domain;
    let vals = v.values();
    let vmax = v.max_abs();
    if vals.iter().any(|&x| x < -1e-12 * vmax) {
        return Err(SegError::invalid("v must be nonnegative"));
    }
    match d.nearest_node(center) {
        Some(p) if d.mask[p] => {}
        _ => return Err(SegError::invalid("center is off the domain mask")),
    }
    let rmax = *radii.last().unwrap();
    let inscribed =
        (0..d.len()).filter(|&p| !d.mask[p]).map(|p| dist(d.coords(p), center)).fold(f64::INFINITY, f64::min);
    if rmax > inscribed {
        return Err(SegError::invalid(format!("radius {rmax} exceeds the inscribed distance {inscribed}")));
    }
    let profile = if lambda > 0.0 { Some(planar_profile(lambda)?) } else { None };
    if let Some(g) = &profile {
        if rmax >= 2.0 * g.radius {
            return Err(SegError::invalid(format!("radius {rmax} reaches the zero of φ at {}", 2.0 * g.radius)));
        }
    }
    let phi = |s: f64| profile.as_ref().map_or(1.0, |g| g.phi_at(s));

    let mut plain = Vec::with_capacity(radii.len());
    let mut weighted = Vec::with_capacity(radii.len());
    for &r in radii {
        let (mut a, mut b) = (0.0, 0.0);
        for (p, w) in ball_weights(d, center, r, 8) {
            a += w * vals[p];
            b += w * vals[p] / phi(dist(d.coords(p), center));
        }
        plain.push(a / (r * r));
        weighted.push(b / (r * r));
    }
    let mut violation: f64 = 0.0;
    for big in 0..radii.len() {
        let bound = plain[big] / phi(radii[big]);
        for &a in &plain[..big] {
            if bound > 0.0 {
                violation = violation.max((a - bound) / bound);
            } else if a > 0.0 {
                violation = f64::INFINITY;
            }
        }
    }
    let mut defect: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let h2 = d.h * d.h;
    for (p, _) in ball_weights(d, center, rmax, 2) {
        if !d.mask[p] {
            continue;
        }
        let nb = d.neighbors(p);
        let sum: f64 = nb.iter().map(|q| q.map_or(0.0, |q| vals[q])).sum();
        let minus_lap = (4.0 * vals[p] - sum) / h2;
        scale = scale.max(minus_lap.abs()).max(lambda * vals[p]);
        defect = defect.max(minus_lap - lambda * vals[p]);
    }
    let mut report = MonotonicityReport::new(radii, plain, violation.max(0.0));
    report.constants.insert("phi_average_violation".into(), max_relative_decrease(&weighted));
    report.constants.insert("subsolution_defect".into(), if scale > 0.0 { defect.max(0.0) / scale } else { 0.0 });
    report.constants.insert("lambda_bar".into(), lambda);
    if let Some(g) = &profile {
        report.constants.insert("r_bar".into(), g.radius);
    }
    Ok(report)
}

/// [`mean_value_check`] for `v = |∇u|²`, with `λ̄ = 2λ`.
pub fn gradient_mean_value_check(
    u: &ScalarField,
    lambda: f64,
    center: Point,
    radii: &[f64],
) -> Result<MonotonicityReport> {
    let g = gradient_magnitude(u).map(|x| x * x);
    mean_value_check(&g, 2.0 * lambda, center, radii)
}

/// Scan grid `{0, 1, 2, 4, 8}/R̄` for the exponential constant of `Ψ`.
pub fn acf_scan_grid(r_bar: f64) -> Vec<f64> {
    [0.0, 1.0, 2.0, 4.0, 8.0].iter().map(|c| c / r_bar).collect()
}

struct AcfParts {
    psi0: Vec<f64>,
    dirichlet: Vec<f64>,
}

fn acf_parts(u: &ScalarField, phi: &RadialGroundState, center: Point, radii: &[f64]) -> Result<AcfParts> {
    check_radii(radii)?;
    let d = &*u.domain;
    let vals = u.values();
    let umax = u.max_abs();
    let rmax = *radii.last().unwrap();
    if rmax > phi.radius * (1.0 + 1e-12) {
        return Err(SegError::invalid(format!("radius {rmax} exceeds R̄ = {}", phi.radius)));
    }
    if vals.iter().any(|&x| x < -1e-12 * umax) {
        return Err(SegError::invalid("u must be nonnegative"));
    }
    let lo = [d.origin[0], d.origin[1]];
    let hi = [d.origin[0] + (d.nx - 1) as f64 * d.h, d.origin[1] + (d.ny - 1) as f64 * d.h];
    if center[0] - rmax < lo[0] || center[1] - rmax < lo[1] || center[0] + rmax > hi[0] || center[1] + rmax > hi[1] {
        return Err(SegError::invalid("ball leaves the lattice"));
    }
    let ext = [center[0] - 1.0, center[1]];
    for (p, _) in ball_weights(d, center, rmax + d.h, 1) {
        let x = d.coords(p);
        let in_ext = dist(x, ext) <= 1.0;
        if in_ext && vals[p].abs() > 1e-12 * umax {
            return Err(SegError::ConstraintViolated(format!(
                "u = {:e} at ({:.4}, {:.4}) inside the exterior ball",
                vals[p], x[0], x[1]
            )));
        }
        if !d.mask[p] && dist(x, ext) > 1.0 + d.h && dist(x, center) < rmax {
            return Err(SegError::invalid("center too close to the domain boundary"));
        }
    }
    let phi_node = |p: usize| phi.phi_at(dist(d.coords(p), center));
    let w = |p: usize| {
        let f = phi_node(p);
        if f > 0.0 {
            vals[p] / f
        } else {
            0.0
        }
    };
    let psi0 = edge_sums(u, center, radii, |p, q, s| phi.phi_at(s).powi(2) * (w(p) - w(q)).powi(2))
        .iter()
        .zip(radii)
        .map(|(e, r)| e / (r * r))
        .collect();
    let dirichlet = edge_sums(u, center, radii, |p, q, _| (vals[p] - vals[q]).powi(2))
        .iter()
        .zip(radii)
        .map(|(e, r)| e / (r * r))
        .collect();
    Ok(AcfParts { psi0, dirichlet })
}

fn acf_report(parts: &AcfParts, radii: &[f64], c: f64) -> MonotonicityReport {
    let values: Vec<f64> = parts.psi0.iter().zip(radii).map(|(p, r)| (c * r).exp() * p).collect();
    let mut lower: f64 = 0.0;
    let mut upper: f64 = 0.0;
    for (psi, dir) in values.iter().zip(&parts.dirichlet) {
        if *psi > 0.0 && *dir > 0.0 {
            lower = lower.max(dir / psi);
            upper = upper.max(psi / dir);
        }
    }
    let mut report = MonotonicityReport::new(radii, values.clone(), max_relative_decrease(&values));
    report.constants.insert("C".into(), c);
    report.constants.insert("sandwich_lower".into(), lower);
    report.constants.insert("sandwich_upper".into(), upper);
    report.metadata.insert("functional".into(), "planar: e^{Cr} r^-2 ∫ φ² |∇(u/φ)|²".into());
    report
}

/// Planar one-phase functional `Ψ(r) = e^{Cr} r^{-2} ∫_{B_r} φ² |∇(u/φ)|²`
/// with `φ` centered at `center` and `u` vanishing on the closed unit ball
/// centered at `center - e₁`.
///
/// Constants: `C`, and the sandwich constants `sandwich_lower`
/// (`max r^{-2}∫|∇u|² / Ψ`) and `sandwich_upper` (`max Ψ / r^{-2}∫|∇u|²`).
pub fn acf_psi_functional(
    u: &ScalarField,
    phi: &RadialGroundState,
    center: Point,
    radii: &[f64],
    c: f64,
) -> Result<MonotonicityReport> {
    let parts = acf_parts(u, phi, center, radii)?;
    Ok(acf_report(&parts, radii, c))
}

/// Evaluates `Ψ` for every `C` in `scan` and returns the report with the
/// smallest violation (ties go to the smaller `C`).
pub fn acf_scan(
    u: &ScalarField,
    phi: &RadialGroundState,
    center: Point,
    radii: &[f64],
    scan: &[f64],
) -> Result<MonotonicityReport> {
    if scan.is_empty() {
        return Err(SegError::invalid("empty scan grid"));
    }
    let parts = acf_parts(u, phi, center, radii)?;
    let mut best: Option<MonotonicityReport> = None;
    for &c in scan {
        let rep = acf_report(&parts, radii, c);
        if best.as_ref().is_none_or(|b| rep.max_violation < b.max_violation) {
            best = Some(rep);
        }
    }
    let mut best = best.unwrap();
    best.metadata.insert("scan".into(), format!("{scan:?}"));
    Ok(best)
}

/// Planar two-phase product `Π_i r^{-2} ∫_{B_r} |∇u_i|²`.
///
/// Constants: `max_min_ratio` over the positive values and `spearman`, the
/// rank correlation between radius and product.
pub fn cjk_product(u1: &ScalarField, u2: &ScalarField, center: Point, radii: &[f64]) -> Result<MonotonicityReport> {
    check_radii(radii)?;
    if u1.values().len() != u2.values().len() {
        return Err(SegError::invalid("fields live on different domains"));
    }
    let (a, b) = (u1.values(), u2.values());
    let scale = u1.max_abs().max(u2.max_abs());
    if a.iter().chain(b).any(|&x| x < -1e-12 * scale) {
        return Err(SegError::invalid("fields must be nonnegative"));
    }
    if let Some(p) = (0..a.len()).find(|&p| a[p] > 0.0 && b[p] > 0.0) {
        return Err(SegError::invalid(format!("overlapping supports at node {p}")));
    }
    let e1 = edge_sums(u1, center, radii, |p, q, _| (a[p] - a[q]).powi(2));
    let e2 = edge_sums(u2, center, radii, |p, q, _| (b[p] - b[q]).powi(2));
    let values: Vec<f64> = e1.iter().zip(&e2).zip(radii).map(|((x, y), r)| x * y / r.powi(4)).collect();
    let mut report = MonotonicityReport::new(radii, values.clone(), max_relative_decrease(&values));
    let positive: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
    if !positive.is_empty() {
        let max = positive.iter().cloned().fold(0.0, f64::max);
        let min = positive.iter().cloned().fold(f64::INFINITY, f64::min);
        report.constants.insert("max_min_ratio".into(), max / min);
    }
    if let Some(rho) = spearman(radii, &values) {
        report.constants.insert("spearman".into(), rho);
    }
    report.metadata.insert("planar_weight".into(), "1 (each factor is r^-2 ∫ |∇u_i|²)".into());
    Ok(report)
}

/// Midpoint of the closest pair of nodes from the two supports, among pairs
/// at most `2h` apart, nearest to `target`.
pub fn interface_point(u1: &ScalarField, u2: &ScalarField, target: Point) -> Option<Point> {
    let d = &*u1.domain;
    let (a, b) = (u1.values(), u2.values());
    let mut best: Option<(f64, Point)> = None;
    for p in (0..d.len()).filter(|&p| a[p] > 0.0) {
        let (i, j) = d.ij(p);
        for dj in -2isize..=2 {
            for di in -2isize..=2 {
                let (qi, qj) = (i as isize + di, j as isize + dj);
                if qi < 0 || qj < 0 || qi >= d.nx as isize || qj >= d.ny as isize || di * di + dj * dj > 4 {
                    continue;
                }
                let q = d.index(qi as usize, qj as usize);
                if b[q] > 0.0 {
                    let (x, y) = (d.coords(p), d.coords(q));
                    let mid = [(x[0] + y[0]) / 2.0, (x[1] + y[1]) / 2.0];
                    let key = dist(mid, target);
                    if best.is_none_or(|(k, _)| key < k) {
                        best = Some((key, mid));
                    }
                }
            }
        }
    }
    best.map(|(_, m)| m)
}
