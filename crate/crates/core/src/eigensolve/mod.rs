//! First Dirichlet eigenpairs of the masked 5-point Laplacian, plus 1-D
//! reference solvers: Bessel zeros, radial ground states of balls, and
//! Laplace-Beltrami eigenvalues of spherical caps.

mod bessel;
mod cap;
pub(crate) mod krylov;
mod poincare;
mod radial;

pub use bessel::{bessel_first_zero, bessel_j_normalized};
pub use cap::{cap_eigenvalue, cap_eigenvalue_with, CapSpectrum, CAP_DEFAULT_NODES};
pub use poincare::{poincare_check, poincare_check_with, PoincareGeometry};
pub use radial::{radial_ground_state, RadialGroundState};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};
use crate::grid::{Mask, ScalarField};
use krylov::{dot, pcg, CgOutcome, MaskedLaplacian};

/// Residual below which the inverse iteration switches to a Rayleigh shift.
const SHIFT_SWITCH: f64 = 1e-3;
const INNER_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Target for `||Δ_h u + λ u||_{l2}` with `||u||_{l2} = 1`. Targets
    /// below the round-off floor `32 ε ||Δ_h||` are raised to it.
    pub tol: f64,
    pub max_outer: usize,
    /// Seed of the start-vector perturbation.
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { tol: 1e-8, max_outer: 10_000, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub lambda: f64,
    /// L2-normalized, nonnegative, zero outside the allowed region.
    pub field: ScalarField,
    pub residual: f64,
    pub iterations: usize,
    /// Connected component of the allowed region carrying the ground state.
    pub support: Mask,
}

/// JSON sidecar written next to an SPF1 eigenfunction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
}

impl EigenResult {
    pub fn summary(&self) -> EigenSummary {
        EigenSummary { lambda: self.lambda, residual: self.residual, iterations: self.iterations }
    }
}

/// Smallest eigenpair of the 5-point Laplacian on `allowed` with zero
/// Dirichlet data on every other node.
pub fn first_dirichlet_eig(allowed: &Mask, tol: f64) -> Result<EigenResult> {
    first_dirichlet_eig_with(allowed, &EigenOptions { tol, ..Default::default() }, None)
}

/// As [`first_dirichlet_eig`], optionally warm-started from `guess`
/// (lattice-indexed values; only its restriction to `allowed` is used).
pub fn first_dirichlet_eig_with(allowed: &Mask, opts: &EigenOptions, guess: Option<&[f64]>) -> Result<EigenResult> {
    if allowed.is_empty() {
        return Err(SegError::EmptyRegion);
    }
    if !(opts.tol > 0.0) {
        return Err(SegError::invalid("eigen tolerance must be positive"));
    }
    let op = MaskedLaplacian::new(allowed);
    let start = start_vector(&op, opts.seed, guess);
    let (x, lambda, residual, iterations) = inverse_iteration(&op, start, opts)?;

    let domain = &allowed.domain;
    let mut values = vec![0.0; domain.len()];
    for (k, &p) in op.nodes.iter().enumerate() {
        values[p] = x[k];
    }
    let components = allowed.components();
    if components.len() > 1 {
        // Keep the component carrying most of the mass and refine there.
        let best = components
            .iter()
            .map(|c| c.indices().map(|p| values[p] * values[p]).sum::<f64>())
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let sub = first_dirichlet_eig_with(&components[best], opts, Some(&values))?;
        return Ok(EigenResult { iterations: sub.iterations + iterations, ..sub });
    }
    let field = ScalarField::from_raw(domain, values);
    Ok(EigenResult { lambda, field, residual, iterations, support: allowed.clone() })
}

fn start_vector(op: &MaskedLaplacian, seed: u64, guess: Option<&[f64]>) -> Vec<f64> {
    if let Some(g) = guess {
        let v: Vec<f64> = op.nodes.iter().map(|&p| g[p].abs()).collect();
        if v.iter().any(|&a| a > 0.0) {
            return v;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..op.len()).map(|_| 1.0 + 0.1 * rng.gen::<f64>()).collect()
}

struct Rayleigh {
    theta: f64,
    residual: f64,
}

/// Normalizes `x` to unit l2 norm (with lattice weight `h²`) and returns the
/// Rayleigh quotient and residual norm.
fn normalize_and_measure(op: &MaskedLaplacian, x: &mut [f64], h: f64, ax: &mut [f64]) -> Rayleigh {
    let nrm = (dot(x, x) * h * h).sqrt();
    x.iter_mut().for_each(|v| *v /= nrm);
    op.apply(x, ax, 0.0);
    let theta = dot(x, ax) / dot(x, x);
    let r2: f64 = ax.iter().zip(x.iter()).map(|(a, v)| (a - theta * v).powi(2)).sum();
    Rayleigh { theta, residual: (r2 * h * h).sqrt() }
}

fn inverse_iteration(
    op: &MaskedLaplacian,
    mut x: Vec<f64>,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, f64, f64, usize)> {
    let h = (1.0 / op.diag(0.0) * 4.0).sqrt();
    let n = op.len();
    let mut ax = vec![0.0; n];
    let mut rq = normalize_and_measure(op, &mut x, h, &mut ax);
    let mut y = vec![0.0; n];
    let tol = opts.tol.max(residual_floor(h));
    let mut it = 0;
    while rq.residual > tol && it < opts.max_outer {
        it += 1;
        let mut shift = 0.0;
        if rq.residual < SHIFT_SWITCH && rq.theta - 2.0 * rq.residual > 0.0 {
            shift = rq.theta - 2.0 * rq.residual;
        }
        let target = 0.1 * tol.max(1e-2 * rq.residual);
        loop {
            let gap = (rq.theta - shift).max(f64::MIN_POSITIVE);
            let rtol = (target / gap).clamp(1e-14, 1e-2);
            for k in 0..n {
                y[k] = x[k] / gap;
            }
            match pcg(op, shift, &x, &mut y, rtol, INNER_MAX_ITER) {
                CgOutcome::Indefinite if shift > 0.0 => {
                    shift = 0.0;
                    continue;
                }
                CgOutcome::Indefinite => {
                    return Err(SegError::NoConvergence { residual: rq.residual, iterations: it });
                }
                _ => break,
            }
        }
        let sum: f64 = y.iter().sum();
        let sign = if sum < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            x[k] = sign * y[k];
        }
        let next = normalize_and_measure(op, &mut x, h, &mut ax);
        rq = next;
    }
    // Ground states are positive; clip round-off of the wrong sign.
    if x.iter().any(|&v| v < 0.0) {
        x.iter_mut().for_each(|v| *v = v.max(0.0));
        if x.iter().all(|&v| v == 0.0) {
            return Err(SegError::NoConvergence { residual: rq.residual, iterations: it });
        }
        rq = normalize_and_measure(op, &mut x, h, &mut ax);
    }
    if !(rq.residual <= tol) {
        return Err(SegError::NoConvergence { residual: rq.residual, iterations: it });
    }
    Ok((x, rq.theta, rq.residual, it))
}

/// Smallest residual that round-off lets the iteration reach reliably.
fn residual_floor(h: f64) -> f64 {
    32.0 * f64::EPSILON * 8.0 / (h * h)
}
