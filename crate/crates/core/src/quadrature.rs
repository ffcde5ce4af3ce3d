//! Fixed and adaptive quadrature rules.
//!
//! All fixed rules are stored on `[0, 1]`. `gauss_log` integrates against the
//! weight `-ln t`, which is what the flat-potential kernel needs next to the
//! coincident-radius singularity.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Integrates `f` over `[a, b]` (plain Legendre rules only).
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let h = b - a;
        let mut acc = 0.0;
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(a + h * t);
        }
        acc * h
    }
}

/// Gauss-Legendre rule with `n` points mapped to `[0, 1]`.
pub fn gauss_legendre(n: usize) -> GaussRule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    GaussRule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss rule for `∫₀¹ g(t) (-ln t) dt`.
///
/// Recurrence coefficients come from the modified Chebyshev algorithm with
/// shifted-Legendre modified moments `∫₀¹ -ln t P*_k(t) dt = (-1)^k / (k (k+1))`,
/// which keeps the construction well conditioned.
pub fn gauss_log(n: usize) -> GaussRule {
    assert!(n >= 1);
    let m = 2 * n;
    // monic shifted Legendre: p_{k+1} = (t - 1/2) p_k - b_k p_{k-1}
    let a = vec![0.5; m];
    let b: Vec<f64> = (0..m)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                let kf = k as f64;
                kf * kf / (4.0 * (4.0 * kf * kf - 1.0))
            }
        })
        .collect();
    let mut mom = vec![0.0; m];
    let mut lead = 1.0; // (k!)^2 / (2k)!
    for (k, slot) in mom.iter_mut().enumerate() {
        if k == 0 {
            *slot = 1.0;
            continue;
        }
        let kf = k as f64;
        lead *= kf / (2.0 * (2.0 * kf - 1.0));
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        *slot = sign / (kf * (kf + 1.0)) * lead;
    }

    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    alpha[0] = a[0] + mom[1] / mom[0];
    beta[0] = mom[0];
    let mut sig_prev = vec![0.0; m];
    let mut sig_cur = mom.clone();
    for k in 1..n {
        let mut sig_new = vec![0.0; m];
        for l in k..(m - k) {
            sig_new[l] = sig_cur[l + 1] - (alpha[k - 1] - a[l]) * sig_cur[l]
                - beta[k - 1] * sig_prev[l]
                + b[l] * sig_cur[l - 1];
        }
        alpha[k] = a[k] + sig_new[k + 1] / sig_new[k] - sig_cur[k] / sig_cur[k - 1];
        beta[k] = sig_new[k] / sig_cur[k - 1];
        sig_prev = sig_cur;
        sig_cur = sig_new;
    }

    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        jac[(k, k)] = alpha[k];
        if k + 1 < n {
            let off = beta[k + 1].sqrt();
            jac[(k, k + 1)] = off;
            jac[(k + 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], beta[0] * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    GaussRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

pub(crate) fn gl8() -> &'static GaussRule {
    static R: OnceLock<GaussRule> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(8))
}

pub(crate) fn gl16() -> &'static GaussRule {
    static R: OnceLock<GaussRule> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(16))
}

pub(crate) fn glog16() -> &'static GaussRule {
    static R: OnceLock<GaussRule> = OnceLock::new();
    R.get_or_init(|| gauss_log(16))
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        resk += WGK[j] * s;
        if j % 2 == 1 {
            resg += WG[j / 2] * s;
        }
    }
    (resk * h, ((resk - resg) * h).abs())
}

/// Globally adaptive Gauss-Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Returns the estimate once the summed error estimate drops below
/// `max(abs_tol, rel_tol * |I|)`.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gk15(&mut f, a, b);
    let mut parts: Vec<(f64, f64, f64, f64)> = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    loop {
        let tol = abs_tol.max(rel_tol * total.abs());
        if err <= tol {
            return Ok(total);
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Convergence(format!(
                "adaptive quadrature on [{a}, {b}] stopped at error {err:.3e} (target {tol:.3e})"
            )));
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, pv, pe) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval at floating-point resolution, accept it
            parts.push((lo, hi, pv, 0.0));
            err -= pe;
            continue;
        }
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
        if parts.len() % 64 == 0 {
            // periodic resummation keeps the running totals honest
            total = parts.iter().map(|p| p.2).sum();
            err = parts.iter().map(|p| p.3).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(8);
        for k in 0..16 {
            let got = rule.integrate(0.0, 1.0, |t| t.powi(k));
            assert!((got - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn log_rule_matches_moments() {
        let rule = gauss_log(16);
        for k in 0..32 {
            let got: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(t, w)| w * t.powi(k))
                .sum();
            let exact = 1.0 / ((k as f64 + 1.0) * (k as f64 + 1.0));
            assert!((got - exact).abs() < 1e-13 * exact.max(1e-3), "k={k}: {got} vs {exact}");
        }
        assert!(rule.nodes.iter().all(|&t| t > 0.0 && t < 1.0));
    }

    #[test]
    fn log_rule_handles_smooth_non_polynomial() {
        // ∫₀¹ cos(t) (-ln t) dt = Si(1)
        let rule = gauss_log(16);
        let got: f64 = rule.nodes.iter().zip(&rule.weights).map(|(t, w)| w * t.cos()).sum();
        assert!((got - 0.946_083_070_367_183).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let v = adaptive(|t: f64| t.sqrt(), 0.0, 1.0, 1e-12, 0.0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-11);
        let v = adaptive(|t: f64| -t.ln(), 0.0, 1.0, 1e-10, 0.0).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }
}
