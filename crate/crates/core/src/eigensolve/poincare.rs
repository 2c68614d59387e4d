use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};
use crate::grid::{ball_edges, ball_weights, Point, ScalarField};

/// Ball `B_r(center)` and the excluded closed ball where fields must vanish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareGeometry {
    pub center: Point,
    pub exterior_center: Point,
    pub exterior_radius: f64,
}

impl Default for PoincareGeometry {
    fn default() -> Self {
        PoincareGeometry { center: [0.0, 0.0], exterior_center: [-1.0, 0.0], exterior_radius: 1.0 }
    }
}

/// [`poincare_check_with`] on the default geometry: ball at the origin,
/// excluded unit ball centered at `(-1, 0)`.
pub fn poincare_check(f: &ScalarField, r: f64) -> Result<f64> {
    poincare_check_with(f, r, &PoincareGeometry::default())
}

/// Ratio `((1/r)∮ f² + (1/r²)∫ f²) / ∫|∇f|²` over `B_r`.
///
/// The volume term sums `h² f²` over nodes strictly inside the ball. The
/// circle integral uses the ring of in-ball nodes with a neighbor outside the
/// ball, each weighted by `2πr / ring size`. The gradient term sums the
/// squared differences over lattice edges whose midpoint lies in the ball.
/// Every in-ball node ends such an edge, so the ratio is bounded.
pub fn poincare_check_with(f: &ScalarField, r: f64, geo: &PoincareGeometry) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(SegError::invalid("radius must be positive"));
    }
    let d = &*f.domain;
    let v = f.values();
    let scale = f.max_abs();
    let dist = |p: Point, c: Point| (p[0] - c[0]).hypot(p[1] - c[1]);
    let in_ball = |p: Point| dist(p, geo.center) < r;

    let weights = ball_weights(d, geo.center, r, 1);
    let mut volume = 0.0;
    let mut ring = Vec::new();
    let mut grad = 0.0;
    for &(i, _) in &weights {
        let p = d.coords(i);
        if !in_ball(p) {
            continue;
        }
        if v[i].abs() > 1e-12 * scale && dist(p, geo.exterior_center) <= geo.exterior_radius {
            return Err(SegError::ConstraintViolated(format!(
                "f = {:e} at ({:.4}, {:.4}) inside the excluded ball",
                v[i], p[0], p[1]
            )));
        }
        volume += d.h * d.h * v[i] * v[i];
        if d.neighbors(i).iter().any(|q| q.is_none_or(|q| !in_ball(d.coords(q)))) {
            ring.push(i);
        }
    }
    for (p, q, _) in ball_edges(d, geo.center, r) {
        grad += (v[p] - v[q]).powi(2);
    }
    let circle = if ring.is_empty() {
        0.0
    } else {
        let w = 2.0 * PI * r / ring.len() as f64;
        ring.iter().map(|&i| w * v[i] * v[i]).sum::<f64>()
    };
    if volume == 0.0 && circle == 0.0 {
        return Err(SegError::invalid("f vanishes on the ball"));
    }
    if grad == 0.0 {
        return Err(SegError::invalid("f has no gradient on the ball"));
    }
    Ok((circle / r + volume / (r * r)) / grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridDomain;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn centered(half: f64, n: usize) -> Arc<GridDomain> {
        let h = 2.0 * half / n as f64;
        GridDomain::from_mask(n + 1, n + 1, h, [-half, -half], vec![true; (n + 1) * (n + 1)]).unwrap()
    }

    fn excluded(p: Point) -> bool {
        (p[0] + 1.0).hypot(p[1]) <= 1.0
    }

    fn random_field(d: &Arc<GridDomain>, rng: &mut ChaCha8Rng) -> ScalarField {
        let vals: Vec<f64> =
            (0..d.len()).map(|i| if d.mask[i] && !excluded(d.coords(i)) { rng.gen::<f64>() } else { 0.0 }).collect();
        ScalarField::from_values(d, vals).unwrap()
    }

    /// Exact discrete constant: the largest generalized eigenvalue of the
    /// numerator form against the gradient form, over the free nodes.
    fn discrete_constant(d: &Arc<GridDomain>, r: f64) -> f64 {
        let in_ball = |p: Point| p[0].hypot(p[1]) < r;
        let edges = ball_edges(d, [0.0, 0.0], r);
        let fixed = |i: usize| in_ball(d.coords(i)) && excluded(d.coords(i));
        let mut free = BTreeMap::new();
        for &(p, q, _) in &edges {
            for i in [p, q] {
                if !fixed(i) && !free.contains_key(&i) {
                    let k = free.len();
                    free.insert(i, k);
                }
            }
        }
        let n = free.len();
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DMatrix::<f64>::zeros(n, n);
        for &(p, q, _) in &edges {
            match (free.get(&p), free.get(&q)) {
                (Some(&kp), Some(&kq)) => {
                    a[(kp, kp)] += 1.0;
                    a[(kq, kq)] += 1.0;
                    a[(kp, kq)] -= 1.0;
                    a[(kq, kp)] -= 1.0;
                }
                (Some(&k), None) | (None, Some(&k)) => a[(k, k)] += 1.0,
                (None, None) => {}
            }
        }
        for (&i, &k) in &free {
            if in_ball(d.coords(i)) {
                b[(k, k)] += d.h * d.h / (r * r);
            }
        }
        let ring: Vec<usize> = (0..d.len())
            .filter(|&i| in_ball(d.coords(i)) && d.neighbors(i).iter().any(|q| q.is_none_or(|q| !in_ball(d.coords(q)))))
            .collect();
        for i in &ring {
            if let Some(&k) = free.get(i) {
                b[(k, k)] += 2.0 * PI * r / ring.len() as f64 / r;
            }
        }
        let l = a.cholesky().expect("gradient form is positive definite").l();
        let linv = l.clone().try_inverse().unwrap();
        let c = &linv * b * linv.transpose();
        c.symmetric_eigen().eigenvalues.max()
    }

    #[test]
    fn random_ratios_stay_below_discrete_constant() {
        let d = centered(1.5, 48);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut constants = Vec::new();
        for r in [0.25, 0.5, 1.0] {
            let cp = discrete_constant(&d, r);
            constants.push(cp);
            for _ in 0..1000 {
                let f = random_field(&d, &mut rng);
                let q = poincare_check(&f, r).unwrap();
                assert!(q.is_finite() && q <= cp * (1.0 + 1e-9), "r={r}: {q} > {cp}");
            }
        }
        // One constant serves every radius.
        let worst = constants.iter().cloned().fold(0.0, f64::max);
        assert!(worst < 10.0, "{constants:?}");
    }

    #[test]
    fn distance_to_cap_is_admissible() {
        let d = centered(1.5, 64);
        let f = ScalarField::from_fn(&d, |p| ((p[0] + 1.0).hypot(p[1]) - 1.0).max(0.0));
        let q = poincare_check(&f, 0.5).unwrap();
        assert!(q.is_finite() && q > 0.0 && q <= discrete_constant(&d, 0.5) * (1.0 + 1e-9));
    }

    #[test]
    fn interior_support_drops_boundary_term() {
        let d = centered(1.5, 64);
        let bump = |p: Point| {
            let s = (p[0] - 0.2).hypot(p[1]);
            (0.1 - s).max(0.0)
        };
        let f = ScalarField::from_fn(&d, bump);
        let q = poincare_check(&f, 0.5).unwrap();
        let vol: f64 = f.values().iter().map(|v| v * v * d.h * d.h).sum();
        let interior = vol / 0.25 / f.dirichlet_energy();
        assert!((q - interior).abs() <= 1e-12 * interior);
    }

    #[test]
    fn ratio_is_scale_invariant() {
        let d = centered(1.5, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_field(&d, &mut rng);
        let a = poincare_check(&f, 0.5).unwrap();
        let b = poincare_check(&f.scaled(2.0), 0.5).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn errors() {
        let d = centered(1.5, 32);
        assert!(poincare_check(&ScalarField::zeros(&d), 0.5).is_err());
        let bad = ScalarField::from_fn(&d, |_| 1.0);
        assert!(matches!(poincare_check(&bad, 0.5), Err(SegError::ConstraintViolated(_))));
    }
}
