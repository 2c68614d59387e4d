use crate::error::{Result, SegError};

/// `Γ(ν+1) (2/x)^ν J_ν(x)` from the ascending series; equals 1 at `x = 0`
/// and shares its sign and zeros with `J_ν` on `x > 0`.
pub fn bessel_j_normalized(nu: f64, x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..400 {
        let k = k as f64;
        term *= q / (k * (k + nu));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) && k > 0.5 * x {
            break;
        }
    }
    sum
}

/// First positive zero of `J_ν` for `ν ∈ [0, 5]`, by a coarse scan for a
/// sign change followed by bisection of the ascending series.
pub fn bessel_first_zero(nu: f64) -> Result<f64> {
    if !(0.0..=5.0).contains(&nu) {
        return Err(SegError::invalid(format!("Bessel order {nu} outside [0, 5]")));
    }
    let step = 0.05;
    let mut lo = step;
    let mut flo = bessel_j_normalized(nu, lo);
    let mut hi = lo;
    loop {
        hi += step;
        let fhi = bessel_j_normalized(nu, hi);
        if fhi.signum() != flo.signum() {
            break;
        }
        lo = hi;
        flo = fhi;
        if hi > 20.0 {
            return Err(SegError::Bracket(format!("no sign change of J_{nu} below 20")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = bessel_j_normalized(nu, mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn half_order_zero_is_pi() {
        assert!((bessel_first_zero(0.5).unwrap() - PI).abs() < 1e-10);
    }

    #[test]
    fn tabulated_zeros() {
        // Abramowitz & Stegun, Table 9.5.
        for (nu, z) in [
            (0.0, 2.404_825_557_695_773),
            (1.0, 3.831_705_970_207_512),
            (2.0, 5.135_622_301_840_683),
            (5.0, 8.771_483_815_959_954),
        ] {
            assert!((bessel_first_zero(nu).unwrap() - z).abs() < 1e-10, "nu = {nu}");
        }
    }

    #[test]
    fn normalized_series_matches_closed_forms() {
        // ν = 1/2: Γ(3/2) (2/x)^{1/2} J_{1/2}(x) = sin(x)/x.
        for x in [0.3, 1.0, 2.5, 6.0] {
            assert!((bessel_j_normalized(0.5, x) - x.sin() / x).abs() < 1e-13);
        }
        assert_eq!(bessel_j_normalized(3.0, 0.0), 1.0);
    }

    #[test]
    fn out_of_range_order() {
        assert!(bessel_first_zero(-0.1).is_err());
        assert!(bessel_first_zero(5.5).is_err());
    }
}
