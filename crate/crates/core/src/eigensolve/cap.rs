use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};

/// Default number of θ-intervals on `[0, θ_r]`.
pub const CAP_DEFAULT_NODES: usize = 4096;

/// First Laplace-Beltrami eigenpair of the cap `{θ < θ_r}` of the unit sphere
/// in `R^N`, reduced to the polar angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapSpectrum {
    pub dim: usize,
    pub r: f64,
    pub theta_r: f64,
    pub lambda1: f64,
    pub theta: Vec<f64>,
    /// `w(θ)`, normalized by `w(0) = 1`, zero at `θ_r`.
    pub profile: Vec<f64>,
}

pub fn cap_eigenvalue(dim: usize, r: f64) -> Result<CapSpectrum> {
    cap_eigenvalue_with(dim, r, CAP_DEFAULT_NODES)
}

/// Finite-volume discretization of `-(p w')' = λ p w`, `p = sin^{N-2} θ`,
/// with `w'(0) = 0` (half cell at the pole) and `w(θ_r) = 0`.
pub fn cap_eigenvalue_with(dim: usize, r: f64, nodes: usize) -> Result<CapSpectrum> {
    if dim < 2 {
        return Err(SegError::invalid("dimension must be at least 2"));
    }
    if !(0.0..1.0).contains(&r) {
        return Err(SegError::invalid(format!("cap parameter r = {r} outside [0, 1)")));
    }
    if nodes < 8 {
        return Err(SegError::invalid("at least 8 θ-intervals are required"));
    }
    let theta_r = (-r / 2.0).acos();
    let h = theta_r / nodes as f64;
    let e = (dim - 2) as i32;
    let p = |t: f64| t.sin().powi(e);
    // Simpson integral of p over [a, b].
    let cell = |a: f64, b: f64| (b - a) / 6.0 * (p(a) + 4.0 * p(0.5 * (a + b)) + p(b));

    let m = nodes; // unknowns w_0 .. w_{m-1}
    let flux: Vec<f64> = (0..m).map(|i| p((i as f64 + 0.5) * h) / h).collect();
    let mass: Vec<f64> = (0..m)
        .map(|i| {
            let t = i as f64 * h;
            let lo = if i == 0 { 0.0 } else { t - 0.5 * h };
            cell(lo, t + 0.5 * h)
        })
        .collect();
    // Symmetrized tridiagonal S = M^{-1/2} A M^{-1/2}.
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m.saturating_sub(1)];
    for i in 0..m {
        let left = if i == 0 { 0.0 } else { flux[i - 1] };
        diag[i] = (left + flux[i]) / mass[i];
        if i + 1 < m {
            off[i] = -flux[i] / (mass[i] * mass[i + 1]).sqrt();
        }
    }
    let lambda1 = smallest_eigenvalue(&diag, &off);
    let y = inverse_vector(&diag, &off, lambda1);
    let mut profile: Vec<f64> = y.iter().zip(&mass).map(|(v, mi)| v / mi.sqrt()).collect();
    let w0 = profile[0];
    profile.iter_mut().for_each(|v| *v /= w0);
    profile.push(0.0);
    let theta = (0..=m).map(|i| i as f64 * h).collect();
    Ok(CapSpectrum { dim, r, theta_r, lambda1, theta, profile })
}

/// Number of eigenvalues of the symmetric tridiagonal matrix below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let b2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = diag[i] - x - if i == 0 { 0.0 } else { b2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (diag[i].abs() + x.abs()).max(1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn smallest_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    // Gershgorin bounds.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..diag.len() {
        let rad = if i > 0 { off[i - 1].abs() } else { 0.0 } + off.get(i).map_or(0.0, |b| b.abs());
        lo = lo.min(diag[i] - rad);
        hi = hi.max(diag[i] + rad);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Thomas solve of `(T - σ) x = b`.
fn thomas(diag: &[f64], off: &[f64], sigma: f64, b: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let tiny = 1e-300;
    let mut piv = diag[0] - sigma;
    if piv.abs() < tiny {
        piv = tiny;
    }
    c[0] = if n > 1 { off[0] / piv } else { 0.0 };
    d[0] = b[0] / piv;
    for i in 1..n {
        let mut piv = diag[i] - sigma - off[i - 1] * c[i - 1];
        if piv.abs() < tiny {
            piv = tiny;
        }
        c[i] = if i + 1 < n { off[i] / piv } else { 0.0 };
        d[i] = (b[i] - off[i - 1] * d[i - 1]) / piv;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

fn inverse_vector(diag: &[f64], off: &[f64], lambda: f64) -> Vec<f64> {
    let n = diag.len();
    let mut x = vec![1.0; n];
    for _ in 0..3 {
        x = thomas(diag, off, lambda, &x);
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sign = if x[0] < 0.0 { -1.0 } else { 1.0 };
        x.iter_mut().for_each(|v| *v *= sign / nrm);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Legendre function `P_ν(x) = ₂F₁(-ν, ν+1; 1; (1-x)/2)` by its series.
    fn legendre_p(nu: f64, x: f64) -> f64 {
        let z = (1.0 - x) / 2.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 0..20_000 {
            let k = k as f64;
            term *= (k - nu) * (k + nu + 1.0) / ((k + 1.0) * (k + 1.0)) * z;
            sum += term;
            if term.abs() < 1e-17 {
                break;
            }
        }
        sum
    }

    /// `λ = ν(ν+1)` with `P_ν(cos θ_r) = 0`, by bisection on `ν ∈ (0, 2)`.
    fn legendre_cap_lambda(theta_r: f64) -> f64 {
        let x = theta_r.cos();
        let (mut lo, mut hi) = (1e-9, 2.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if legendre_p(mid, x) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let nu = 0.5 * (lo + hi);
        nu * (nu + 1.0)
    }

    #[test]
    fn hemisphere_eigenvalues() {
        for dim in 3..=5 {
            let c = cap_eigenvalue(dim, 0.0).unwrap();
            assert!((c.lambda1 - (dim as f64 - 1.0)).abs() < 1e-6, "N={dim}: {}", c.lambda1);
        }
    }

    #[test]
    fn hemisphere_profile_is_cosine() {
        let c = cap_eigenvalue(3, 0.0).unwrap();
        let err = c.theta.iter().zip(&c.profile).map(|(t, w)| (w - t.cos()).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-4, "{err}");
        assert_eq!(c.profile[0], 1.0);
        assert_eq!(*c.profile.last().unwrap(), 0.0);
    }

    #[test]
    fn two_sphere_caps_match_legendre_zeros() {
        for r in [0.1, 0.3, 0.5, 0.8] {
            let c = cap_eigenvalue(3, r).unwrap();
            let exact = legendre_cap_lambda(c.theta_r);
            assert!((c.lambda1 - exact).abs() < 1e-6, "r={r}: {} vs {exact}", c.lambda1);
        }
    }

    #[test]
    fn planar_cap_is_an_interval() {
        let c = cap_eigenvalue(2, 0.4).unwrap();
        let exact = (PI / (2.0 * c.theta_r)).powi(2);
        assert!((c.lambda1 - exact).abs() < 1e-6);
    }

    #[test]
    fn monotone_decreasing_in_r() {
        let values: Vec<f64> = (0..=10).map(|k| cap_eigenvalue(3, 0.05 * k as f64).unwrap().lambda1).collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0]));
        assert!(values.iter().all(|&l| l <= 2.0 + 1e-6));
        let slope = (cap_eigenvalue(3, 0.01).unwrap().lambda1 - values[0]) / 0.01;
        assert!(slope < 0.0);
    }

    #[test]
    fn profile_positive_inside() {
        let c = cap_eigenvalue(4, 0.6).unwrap();
        assert!(c.profile[..c.profile.len() - 1].iter().all(|&w| w > 0.0));
        assert!((c.theta_r - (-0.3f64).acos()).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(cap_eigenvalue(3, 1.0).is_err());
        assert!(cap_eigenvalue(3, -0.1).is_err());
        assert!(cap_eigenvalue(1, 0.0).is_err());
    }
}
