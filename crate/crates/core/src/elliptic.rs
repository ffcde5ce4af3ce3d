//! Complete elliptic integral of the first kind, modulus convention:
//!
//! ```text
//! K(ξ) = ∫₀^{π/2} dφ / √(1 − ξ² sin²φ),   0 ≤ ξ < 1
//! ```
//!
//! Evaluated with the arithmetic-geometric mean, `K = π / (2·AGM(1, √(1−ξ²)))`.

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use crate::error::{Error, Result};

const AGM_MAX_ITER: usize = 40;

fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..AGM_MAX_ITER {
        if (a - b).abs() <= 1e-16 * a {
            break;
        }
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
    }
    0.5 * (a + b)
}

/// K as a function of the complementary modulus `k' = √(1−ξ²)`.
///
/// Passing `k'` directly avoids the cancellation in `1 − ξ²` next to the
/// singularity. `k' = 0` is the logarithmic pole and yields `+∞`.
pub fn k_from_complement(kp: f64) -> f64 {
    if kp <= 0.0 {
        return f64::INFINITY;
    }
    if kp == 1.0 {
        return FRAC_PI_2;
    }
    FRAC_PI_2 / agm(1.0, kp)
}

/// Complete elliptic integral of the first kind for modulus `xi ∈ [0, 1)`.
pub fn elliptic_k(xi: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::Domain(format!(
            "elliptic modulus must lie in [0, 1), got {xi}"
        )));
    }
    if xi == 0.0 {
        return Ok(FRAC_PI_2);
    }
    let kp = ((1.0 - xi) * (1.0 + xi)).sqrt();
    Ok(k_from_complement(kp))
}

/// Modulus of the axisymmetric flat kernel, `2√(rs)/(r+s)`.
pub fn kernel_modulus(r: f64, s: f64) -> f64 {
    if r + s == 0.0 {
        return 0.0;
    }
    2.0 * (r * s).sqrt() / (r + s)
}

/// Complementary modulus of the flat kernel, `|r−s|/(r+s)`, computed without
/// cancellation.
pub fn kernel_complement(r: f64, s: f64) -> f64 {
    if r + s == 0.0 {
        return 1.0;
    }
    (r - s).abs() / (r + s)
}

/// Result of comparing K against the logarithmic envelope `C (1 − ln(1−ξ))`.
#[derive(Debug, Clone, Serialize)]
pub struct KBoundReport {
    pub constant: f64,
    pub max_ratio: f64,
    pub argmax_xi: f64,
    pub pass: bool,
}

pub fn kbound_ratio(xi: f64) -> Result<f64> {
    let k = elliptic_k(xi)?;
    Ok(k / (1.0 - (-xi).ln_1p()))
}

pub fn kbound_check(xi_grid: &[f64], c: f64) -> Result<KBoundReport> {
    if !(c > 0.0) {
        return Err(Error::Input(format!("bound constant must be positive, got {c}")));
    }
    let mut max_ratio = f64::NEG_INFINITY;
    let mut argmax_xi = f64::NAN;
    for &xi in xi_grid {
        let ratio = kbound_ratio(xi)?;
        if ratio > max_ratio {
            max_ratio = ratio;
            argmax_xi = xi;
        }
    }
    Ok(KBoundReport {
        constant: c,
        max_ratio,
        argmax_xi,
        pass: max_ratio <= c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_at_zero_is_half_pi() {
        assert_eq!(elliptic_k(0.0).unwrap(), FRAC_PI_2);
    }

    #[test]
    fn k_at_half() {
        let k = elliptic_k(0.5).unwrap();
        assert!((k - 1.685_750_354_812_596_1).abs() < 1e-15 * k);
    }

    #[test]
    fn rejects_outside_domain() {
        assert!(elliptic_k(1.0).is_err());
        assert!(elliptic_k(-1e-3).is_err());
        assert!(elliptic_k(f64::NAN).is_err());
    }

    #[test]
    fn complement_route_agrees() {
        for &xi in &[0.1, 0.5, 0.9, 0.999] {
            let kp = ((1.0f64 - xi) * (1.0 + xi)).sqrt();
            assert_eq!(elliptic_k(xi).unwrap(), k_from_complement(kp));
        }
    }

    #[test]
    fn kernel_argument_map() {
        assert!((kernel_modulus(4.0, 1.0) - 0.8).abs() < 1e-15);
        assert_eq!(kernel_modulus(2.0, 2.0), 1.0);
        assert!((kernel_complement(4.0, 1.0) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn kbound_grid_passes_with_two() {
        let grid = [0.0, 0.5, 0.9, 0.999, 1.0 - 1e-9];
        let rep = kbound_check(&grid, 2.0).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.argmax_xi, 0.0);
        assert!((rep.max_ratio - FRAC_PI_2).abs() < 1e-15);
    }
}
