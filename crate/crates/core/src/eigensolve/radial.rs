use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};

/// Radial ground state `φ` of the ball `B_{2R}` in dimension `N`, normalized
/// by `φ(0) = 1`, sampled on a uniform grid over `[0, 2R]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGroundState {
    pub dim: usize,
    /// `R`; the ball has radius `2R`.
    pub radius: f64,
    /// `λ₁(B_{2R})`.
    pub lambda_bar: f64,
    pub s: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
}

fn rhs(dim: f64, lambda: f64, s: f64, y: [f64; 2]) -> [f64; 2] {
    if s == 0.0 {
        [y[1], -lambda * y[0] / dim]
    } else {
        [y[1], -(dim - 1.0) / s * y[1] - lambda * y[0]]
    }
}

/// Classical RK4 for `φ'' + (N-1)/s φ' + λ φ = 0`, `φ(0) = 1`, `φ'(0) = 0`.
fn integrate(dim: usize, lambda: f64, end: f64, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let n = dim as f64;
    let h = end / steps as f64;
    let mut phi = Vec::with_capacity(steps + 1);
    let mut dphi = Vec::with_capacity(steps + 1);
    let mut y = [1.0, 0.0];
    phi.push(y[0]);
    dphi.push(y[1]);
    for k in 0..steps {
        let s = k as f64 * h;
        let k1 = rhs(n, lambda, s, y);
        let k2 = rhs(n, lambda, s + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = rhs(n, lambda, s + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = rhs(n, lambda, s + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        for c in 0..2 {
            y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        phi.push(y[0]);
        dphi.push(y[1]);
    }
    (phi, dphi)
}

/// Shoots `λ` so that `φ(2R) = 0`. The predicate "φ changes sign on
/// `(0, 2R]`" is monotone in `λ`, which makes bisection safe.
pub fn radial_ground_state(dim: usize, radius: f64, samples: usize) -> Result<RadialGroundState> {
    if dim < 2 {
        return Err(SegError::invalid("dimension must be at least 2"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(SegError::invalid("radius must be positive"));
    }
    if samples < 64 {
        return Err(SegError::invalid("at least 64 samples are required"));
    }
    let end = 2.0 * radius;
    let crosses = |lambda: f64| integrate(dim, lambda, end, samples).0.iter().any(|&v| v <= 0.0);
    let mut lo = 0.0;
    let mut hi = 1.0 / (end * end);
    let mut doublings = 0;
    while !crosses(hi) {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(SegError::Bracket("no sign change found".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if crosses(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (mut phi, dphi) = integrate(dim, lo, end, samples);
    let tail = *phi.last().unwrap();
    if !(tail.abs() <= 1e-8) {
        return Err(SegError::Bracket(format!("φ(2R) = {tail:e} after bisection")));
    }
    *phi.last_mut().unwrap() = 0.0;
    let h = end / samples as f64;
    let s = (0..=samples).map(|k| k as f64 * h).collect();
    Ok(RadialGroundState { dim, radius, lambda_bar: lo, s, phi, dphi })
}

impl RadialGroundState {
    fn locate(&self, s: f64) -> Option<(usize, f64)> {
        let h = self.s[1];
        let end = *self.s.last().unwrap();
        if !(0.0..=end).contains(&s) {
            return None;
        }
        let k = ((s / h).floor() as usize).min(self.s.len() - 2);
        Some((k, (s - self.s[k]) / h))
    }

    /// Cubic Hermite interpolation of `φ`; zero beyond `2R`.
    pub fn phi_at(&self, s: f64) -> f64 {
        let Some((k, t)) = self.locate(s) else { return 0.0 };
        let h = self.s[1];
        let (p0, p1, m0, m1) = (self.phi[k], self.phi[k + 1], self.dphi[k] * h, self.dphi[k + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * p1 + (t3 - t2) * m1
    }

    /// Derivative of the Hermite interpolant.
    pub fn dphi_at(&self, s: f64) -> f64 {
        let Some((k, t)) = self.locate(s) else { return 0.0 };
        let h = self.s[1];
        let (p0, p1, m0, m1) = (self.phi[k], self.phi[k + 1], self.dphi[k] * h, self.dphi[k + 1] * h);
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * p0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * p1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolve::{bessel_first_zero, bessel_j_normalized};
    use std::f64::consts::PI;

    #[test]
    fn three_dimensional_unit_ball() {
        let g = radial_ground_state(3, 0.5, 2048).unwrap();
        assert!((g.lambda_bar - PI * PI).abs() < 1e-8, "{}", g.lambda_bar);
    }

    #[test]
    fn planar_unit_disk_matches_bessel_zero() {
        let j = bessel_first_zero(0.0).unwrap();
        let g = radial_ground_state(2, 0.5, 2048).unwrap();
        assert!((g.lambda_bar - j * j).abs() < 1e-8);
        // Profile matches the normalized Bessel function.
        for (s, p) in g.s.iter().zip(&g.phi).step_by(97) {
            assert!((p - bessel_j_normalized(0.0, j * s)).abs() < 1e-9);
        }
    }

    #[test]
    fn profiles_decrease_to_zero() {
        for dim in 2..=5 {
            let g = radial_ground_state(dim, 0.7, 512).unwrap();
            assert_eq!(g.phi[0], 1.0);
            assert!(g.phi.last().unwrap().abs() <= 1e-8);
            assert!(g.phi.windows(2).all(|w| w[1] < w[0]));
            assert!(g.phi[..g.phi.len() - 1].iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn hermite_interpolation_is_accurate() {
        let g = radial_ground_state(3, 0.5, 256).unwrap();
        for s in [0.013, 0.4, 0.777] {
            assert!((g.phi_at(s) - (PI * s).sin() / (PI * s)).abs() < 1e-9);
        }
        assert_eq!(g.phi_at(1.5), 0.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(radial_ground_state(1, 1.0, 128).is_err());
        assert!(radial_ground_state(3, 0.0, 128).is_err());
        assert!(radial_ground_state(3, 1.0, 32).is_err());
    }
}
