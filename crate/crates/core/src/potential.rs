//! In-plane potential of an axisymmetric surface density,
//!
//! ```text
//! U(r) = −4 ∫₀^∞ s/(r+s) ρ(s) K(2√(rs)/(r+s)) ds,
//! ```
//!
//! discretized as `U = −Kmat·ρ` for densities that are piecewise linear on a
//! [`RadialGrid`].
//!
//! Near the diagonal the kernel is split as `S(r,s)·ln|s−r| + R(r,s)` with
//! `S = −(8/π)·s/(r+s)·T(k'²)`, where `T` is the degree-6 truncation of the
//! series of `K(k')` in `k'² = ((r−s)/(r+s))²`. The remainder `R` is smooth,
//! the logarithmic part is integrated with a Gauss rule for the weight
//! `−ln t`.

use std::f64::consts::{FRAC_2_PI, PI};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::elliptic::k_from_complement;
use crate::error::{Error, Result};
use crate::grid::{RadialGrid, RadialProfile};
use crate::quadrature::{gl16, gl8, glog16, GaussRule};

/// `[(1/2)_n / n!]²` for `n = 0..=6`.
const K_SERIES: [f64; 7] = [
    1.0,
    1.0 / 4.0,
    9.0 / 64.0,
    25.0 / 256.0,
    1225.0 / 16384.0,
    3969.0 / 65536.0,
    53361.0 / 1048576.0,
];

fn k_series_truncated(m: f64) -> f64 {
    let mut acc = 0.0;
    for c in K_SERIES.iter().rev() {
        acc = acc * m + c;
    }
    0.5 * PI * acc
}

/// Full kernel `4 s/(r+s) K(ξ)`.
#[inline]
fn kernel(r: f64, s: f64) -> f64 {
    let sum = r + s;
    if s <= 0.0 {
        return 0.0;
    }
    let kp = (r - s).abs() / sum;
    4.0 * s / sum * k_from_complement(kp)
}

/// Coefficient of `ln|s−r|` in [`kernel`].
#[inline]
fn singular_coeff(r: f64, s: f64) -> f64 {
    let sum = r + s;
    if s <= 0.0 {
        return 0.0;
    }
    let kp = (r - s) / sum;
    -4.0 * FRAC_2_PI * s / sum * k_series_truncated(kp * kp)
}

#[inline]
fn regular_part(r: f64, s: f64) -> f64 {
    kernel(r, s) - singular_coeff(r, s) * (s - r).abs().ln()
}

/// `∫ g(s) ln|s−r| ds` from `r` to `e`, taken as a positive-orientation
/// integral over the segment between them.
fn log_primitive<G: Fn(f64) -> f64>(r: f64, e: f64, g: G) -> f64 {
    let len = (e - r).abs();
    if len == 0.0 {
        return 0.0;
    }
    let dir = (e - r).signum();
    let plain: &GaussRule = gl16();
    let logr: &GaussRule = glog16();
    let mut a = 0.0;
    for (t, w) in plain.nodes.iter().zip(&plain.weights) {
        a += w * g(r + dir * len * t);
    }
    let mut b = 0.0;
    for (t, w) in logr.nodes.iter().zip(&logr.weights) {
        b += w * g(r + dir * len * t);
    }
    len * (len.ln() * a - b)
}

/// Integrals of the kernel against the two hat functions living on the panel
/// `[a, b]`, restricted to `[lo, hi] ⊂ [a, b]`: returns the coefficients of the
/// left and right nodal values.
fn panel_integrals(r: f64, a: f64, b: f64, lo: f64, hi: f64) -> (f64, f64) {
    let w = b - a;
    let left = |s: f64| (b - s) / w;
    let right = |s: f64| (s - a) / w;
    if hi <= lo {
        return (0.0, 0.0);
    }
    if r == 0.0 {
        // K(0) = π/2, kernel ≡ 2π
        let l = 2.0 * PI * gl8().integrate(lo, hi, |s| left(s));
        let rr = 2.0 * PI * gl8().integrate(lo, hi, |s| right(s));
        return (l, rr);
    }
    let width = hi - lo;
    let dist = if r < lo {
        lo - r
    } else if r > hi {
        r - hi
    } else {
        0.0
    };
    if dist >= width {
        let rule = gl8();
        let mut l = 0.0;
        let mut rr = 0.0;
        for (t, wt) in rule.nodes.iter().zip(&rule.weights) {
            let s = lo + width * t;
            let k = wt * width * kernel(r, s);
            l += k * left(s);
            rr += k * right(s);
        }
        return (l, rr);
    }
    // smooth remainder
    let rule = gl16();
    let mut l = 0.0;
    let mut rr = 0.0;
    for (t, wt) in rule.nodes.iter().zip(&rule.weights) {
        let mut s = lo + width * t;
        if s == r {
            s = f64::from_bits(s.to_bits() + 1);
        }
        let k = wt * width * regular_part(r, s);
        l += k * left(s);
        rr += k * right(s);
    }
    // logarithmic part, hats continued linearly past the panel
    let sing = |phi: &dyn Fn(f64) -> f64| {
        let g = |s: f64| singular_coeff(r, s) * phi(s);
        if r < lo {
            log_primitive(r, hi, g) - log_primitive(r, lo, g)
        } else if r > hi {
            log_primitive(r, lo, g) - log_primitive(r, hi, g)
        } else {
            log_primitive(r, hi, g) + log_primitive(r, lo, g)
        }
    };
    l += sing(&left);
    rr += sing(&right);
    (l, rr)
}

/// Row of the kernel matrix for target radius `r`: `U(r) = −Σ_j row_j ρ_j`
/// for densities supported on `[0, min(cut, r_max)]`.
fn kernel_row(nodes: &[f64], r: f64, cut: f64) -> Vec<f64> {
    let n = nodes.len();
    let mut row = vec![0.0; n];
    for j in 0..n - 1 {
        let (a, b) = (nodes[j], nodes[j + 1]);
        if a >= cut {
            break;
        }
        let (l, rr) = panel_integrals(r, a, b, a, b.min(cut));
        row[j] += l;
        row[j + 1] += rr;
    }
    row
}

/// Dense kernel matrix of a grid with its symmetrized energy form.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    grid: Arc<RadialGrid>,
    /// row-major `n × n`, `U = −K ρ`
    k: Vec<f64>,
    /// row-major `sym(W K)` with `W = diag(mass weights)`
    b: Vec<f64>,
    weights: Vec<f64>,
}

impl KernelMatrix {
    pub fn assemble(grid: Arc<RadialGrid>) -> Self {
        let nodes = grid.nodes();
        let n = nodes.len();
        let rows: Vec<Vec<f64>> = nodes
            .par_iter()
            .map(|&r| kernel_row(nodes, r, f64::INFINITY))
            .collect();
        let k: Vec<f64> = rows.into_iter().flatten().collect();
        let weights = grid.mass_weights();
        let mut b = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                b[i * n + j] = 0.5 * (weights[i] * k[i * n + j] + weights[j] * k[j * n + i]);
            }
        }
        Self { grid, k, b, weights }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.len() + j]
    }

    /// `−Kρ` on raw nodal values.
    pub fn apply(&self, rho: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(rho.len(), n, "density length must match the grid");
        self.k
            .par_chunks(n)
            .map(|row| -dot(row, rho))
            .collect()
    }

    pub fn potential(&self, rho: &RadialProfile) -> Result<RadialProfile> {
        self.check_grid(rho)?;
        rho.check_density()?;
        RadialProfile::new(self.grid.clone(), self.apply(rho.values()))
    }

    /// `∫ρ₁ U_{ρ₂} dx` through the symmetric form, `−ρ₁ᵀ B ρ₂`.
    pub fn pair(&self, rho1: &[f64], rho2: &[f64]) -> f64 {
        let n = self.len();
        assert!(rho1.len() == n && rho2.len() == n);
        let partial: Vec<f64> = self.b.par_chunks(n).map(|row| dot(row, rho2)).collect();
        -dot(&partial, rho1)
    }

    /// `E_pot = ½ ∫ ρ U_ρ dx`.
    pub fn energy(&self, rho: &[f64]) -> f64 {
        0.5 * self.pair(rho, rho)
    }

    /// Entry `(i, j)` of the symmetric energy form.
    pub fn form_entry(&self, i: usize, j: usize) -> f64 {
        self.b[i * self.len() + j]
    }

    fn check_grid(&self, rho: &RadialProfile) -> Result<()> {
        if rho.grid().nodes() != self.grid.nodes() {
            return Err(Error::Input("profile grid differs from the kernel matrix grid".into()));
        }
        Ok(())
    }
}

/// Fixed-order dot product, the same on every thread count.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `U_ρ` at the grid nodes.
pub fn potential_from_density(rho: &RadialProfile) -> Result<RadialProfile> {
    KernelMatrix::assemble(rho.grid().clone()).potential(rho)
}

/// `U_ρ(r)` at an arbitrary radius, optionally with the density cut off at
/// `cut` (`ρ·1_{s<cut}`).
pub fn potential_at(rho: &RadialProfile, r: f64, cut: f64) -> Result<f64> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::Input(format!("evaluation radius must be >= 0, got {r}")));
    }
    rho.check_density()?;
    let row = kernel_row(rho.grid().nodes(), r, cut);
    Ok(-dot(&row, rho.values()))
}

/// `(2π ∫ s ρ(s)^p ds)^{1/p}` of the piecewise-linear interpolant.
pub fn lp_norm(rho: &RadialProfile, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Input(format!("norm exponent must be >= 1, got {p}")));
    }
    let nodes = rho.grid().nodes();
    let v = rho.values();
    let rule = gl8();
    let mut total = 0.0;
    for j in 0..nodes.len() - 1 {
        let (a, b) = (nodes[j], nodes[j + 1]);
        let (fa, fb) = (v[j], v[j + 1]);
        if fa == 0.0 && fb == 0.0 {
            continue;
        }
        total += rule.integrate(a, b, |s| {
            let f = fa + (fb - fa) * (s - a) / (b - a);
            s * f.max(0.0).powf(p)
        });
    }
    Ok((2.0 * PI * total).powf(1.0 / p))
}

/// `−∫_{|x|>R} ρ U dx` with the bound's right-hand side and, when several
/// radii are supplied, the fitted decay exponent.
#[derive(Debug, Clone, Serialize)]
pub struct OuterEnergyReport {
    pub radii: Vec<f64>,
    pub outer_energy: Vec<f64>,
    pub outer_mass: Vec<f64>,
    /// `C·R^{−1/2}‖ρ‖_{4/3}·∫_{|x|>R}ρ`
    pub bound_rhs: Vec<f64>,
    pub constant: f64,
    pub norm_4_3: f64,
    pub decay_exponent: Option<f64>,
    /// Smallest `C` making the bound hold at every supplied radius.
    pub empirical_constant: f64,
}

/// Integral of the product of two piecewise-linear nodal functions against
/// `2π s ds` over `[from, r_max]`.
pub(crate) fn outer_product_integral(nodes: &[f64], f: &[f64], g: &[f64], from: f64) -> f64 {
    let rule = gl8();
    let mut total = 0.0;
    for j in 0..nodes.len() - 1 {
        let (a, b) = (nodes[j], nodes[j + 1]);
        if b <= from {
            continue;
        }
        let lo = a.max(from);
        let lin = |v: &[f64], s: f64| v[j] + (v[j + 1] - v[j]) * (s - a) / (b - a);
        total += rule.integrate(lo, b, |s| s * lin(f, s) * lin(g, s));
    }
    2.0 * PI * total
}

/// Mass of the piecewise-linear density outside radius `from`.
pub(crate) fn outer_mass(nodes: &[f64], rho: &[f64], from: f64) -> f64 {
    let ones = vec![1.0; nodes.len()];
    outer_product_integral(nodes, rho, &ones, from)
}

pub fn outer_potential_energy(
    rho: &RadialProfile,
    potential: &RadialProfile,
    radii: &[f64],
    constant: f64,
) -> Result<OuterEnergyReport> {
    let grid = rho.grid();
    if potential.grid().nodes() != grid.nodes() {
        return Err(Error::Input("density and potential grids differ".into()));
    }
    for &r in radii {
        if !(r > 0.0 && r <= grid.r_max()) {
            return Err(Error::Input(format!(
                "radius {r} outside the grid span (0, {}]",
                grid.r_max()
            )));
        }
    }
    let nodes = grid.nodes();
    let norm = lp_norm(rho, 4.0 / 3.0)?;
    let mut outer_energy = Vec::with_capacity(radii.len());
    let mut outer_masses = Vec::with_capacity(radii.len());
    let mut rhs = Vec::with_capacity(radii.len());
    let mut emp: f64 = 0.0;
    for &r in radii {
        let e = -outer_product_integral(nodes, rho.values(), potential.values(), r);
        let m = outer_mass(nodes, rho.values(), r);
        let scale = r.powf(-0.5) * norm * m;
        outer_energy.push(e);
        outer_masses.push(m);
        rhs.push(constant * scale);
        if scale > 0.0 {
            emp = emp.max(e / scale);
        }
    }
    let decay_exponent = fit_power_law(radii, &outer_energy);
    Ok(OuterEnergyReport {
        radii: radii.to_vec(),
        outer_energy,
        outer_mass: outer_masses,
        bound_rhs: rhs,
        constant,
        norm_4_3: norm,
        decay_exponent,
        empirical_constant: emp,
    })
}

/// Least-squares slope of `ln y` against `ln x` over points with `y > 0`.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}
