//! Self-consistent steady states `f₀ = q(E₀ − ½|v|² − U₀(r))` at prescribed
//! mass.
//!
//! Each iteration computes `U = −Kρ`, picks `E₀` so that the density
//! `2πG(E₀ − U)` carries the target mass, and relaxes `ρ` toward it.

use std::f64::consts::PI;
use std::sync::Arc;

use log::{debug, info};
use serde::Serialize;

use crate::casimir::{CasimirModel, InverseQ};
use crate::error::{ensure_finite, Error, Result};
use crate::grid::{CubicSpline, RadialGrid, RadialProfile};
use crate::potential::KernelMatrix;

/// Relative density threshold defining the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// Hybrid grid whose core radius is adapted to the support.
    Auto { n: usize },
    Hybrid { r_core: f64, r_max: f64, n: usize },
    Uniform { r_max: f64, n: usize },
}

impl GridSpec {
    fn build(&self) -> Result<RadialGrid> {
        match *self {
            GridSpec::Auto { n } => RadialGrid::hybrid(1.0, 20.0, n),
            GridSpec::Hybrid { r_core, r_max, n } => RadialGrid::hybrid(r_core, r_max, n),
            GridSpec::Uniform { r_max, n } => RadialGrid::uniform(r_max, n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverOptions {
    pub damping: f64,
    pub max_iters: usize,
    pub residual_tol: f64,
    pub mass_tol: f64,
    pub e0_lo: f64,
    pub e0_hi: f64,
    pub grid: GridSpec,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iters: 20_000,
            residual_tol: 1e-10,
            mass_tol: 1e-10,
            e0_lo: f64::NEG_INFINITY,
            e0_hi: -1e-12,
            grid: GridSpec::Auto { n: 512 },
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Input(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.residual_tol > 0.0) || !(self.mass_tol > 0.0) {
            return Err(Error::Input("solver tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Input("max_iters must be positive".into()));
        }
        if !(self.e0_hi < 0.0) || !(self.e0_lo < self.e0_hi) {
            return Err(Error::Input(format!(
                "E0 bracket must satisfy E_lo < E_hi < 0, got [{}, {}]",
                self.e0_lo, self.e0_hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub model: CasimirModel,
    pub inverse: InverseQ,
    pub e0: f64,
    pub grid: Arc<RadialGrid>,
    pub rho0: RadialProfile,
    pub u0: RadialProfile,
    pub mass: f64,
    /// Radius of the first node where `ρ₀ ≤ 10⁻¹⁴ max ρ₀`.
    pub support_radius: f64,
    /// Zero of `E₀ − U₀` located on the potential spline.
    pub edge_radius: f64,
    pub residual: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub kernel: Arc<KernelMatrix>,
}

/// Summary fields written next to a solved state.
#[derive(Debug, Clone, Serialize)]
pub struct SteadySummary {
    pub e0: f64,
    pub mass: f64,
    pub support_radius: f64,
    pub edge_radius: f64,
    pub residual: f64,
    pub iterations: usize,
    pub grid_hash: String,
}

impl SteadyState {
    pub fn summary(&self) -> SteadySummary {
        SteadySummary {
            e0: self.e0,
            mass: self.mass,
            support_radius: self.support_radius,
            edge_radius: self.edge_radius,
            residual: self.residual,
            iterations: self.iterations,
            grid_hash: self.grid.hash(),
        }
    }

    /// `s_j = E₀ − U₀(r_j)`, the energy headroom at each node.
    pub fn headroom(&self) -> Vec<f64> {
        self.u0.values().iter().map(|u| self.e0 - u).collect()
    }

    /// `f₀` at radius `r` and `w = |v|²/2`, with `U₀` interpolated linearly.
    pub fn f0(&self, r: f64, w: f64) -> Result<f64> {
        let u = self.u0.interpolate(r, f64::NAN);
        if u.is_nan() {
            return Ok(0.0);
        }
        self.inverse.q(self.e0 - u - w)
    }

    /// Grid-aligned columns `(r, ρ₀, U₀)`.
    pub fn columns(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            self.grid.nodes().to_vec(),
            self.rho0.values().to_vec(),
            self.u0.values().to_vec(),
        )
    }

    /// Rebuilds a state from stored columns, recomputing the potential on
    /// the stored grid and checking it against the stored one.
    pub fn from_columns(
        model: &CasimirModel,
        e0: f64,
        r: Vec<f64>,
        rho: Vec<f64>,
        u: Vec<f64>,
    ) -> Result<Self> {
        let grid = Arc::new(RadialGrid::new(r, crate::grid::GridScheme::Tabulated)?);
        let inverse = model.inverse()?;
        let kernel = Arc::new(KernelMatrix::assemble(grid.clone()));
        let rho0 = RadialProfile::density(grid.clone(), rho)?;
        let u0 = RadialProfile::new(grid.clone(), u)?;
        let mass = rho0.mass();
        let residual = density_residual(&inverse, e0, u0.values(), rho0.values())?;
        let (support_radius, edge_radius) = support_of(&grid, rho0.values(), u0.values(), e0);
        Ok(Self {
            model: model.clone(),
            inverse,
            e0,
            grid,
            rho0,
            u0,
            mass,
            support_radius,
            edge_radius,
            residual,
            iterations: 0,
            residual_history: Vec::new(),
            kernel,
        })
    }
}

/// `ρ(r) = 2π G(E₀ − U(r))`, zero where `U ≥ E₀`.
pub fn density_from_potential(
    inverse: &InverseQ,
    e0: f64,
    potential: &RadialProfile,
) -> Result<RadialProfile> {
    ensure_finite(e0, "E0")?;
    let values = density_values(inverse, e0, potential.values())?;
    RadialProfile::density(potential.grid().clone(), values)
}

fn density_values(inverse: &InverseQ, e0: f64, u: &[f64]) -> Result<Vec<f64>> {
    u.iter()
        .map(|&uj| Ok(2.0 * PI * inverse.antiderivative(e0 - uj)?))
        .collect()
}

fn density_residual(inverse: &InverseQ, e0: f64, u: &[f64], rho: &[f64]) -> Result<f64> {
    let target = density_values(inverse, e0, u)?;
    let peak = rho.iter().cloned().fold(0.0, f64::max);
    let defect = rho
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(if peak > 0.0 { defect / peak } else { defect })
}

/// Mass of `2πG(E − U)` on the grid, and its derivative in `E`.
fn mass_and_slope(inverse: &InverseQ, weights: &[f64], u: &[f64], e: f64) -> Result<(f64, f64)> {
    let mut m = 0.0;
    let mut dm = 0.0;
    for (w, &uj) in weights.iter().zip(u) {
        let s = e - uj;
        if s > 0.0 {
            m += w * 2.0 * PI * inverse.antiderivative(s)?;
            dm += w * 2.0 * PI * inverse.q(s)?;
        }
    }
    Ok((m, dm))
}

/// `E₀` such that `2πG(E₀ − U)` has mass `target` on the grid.
fn solve_cutoff(
    inverse: &InverseQ,
    weights: &[f64],
    u: &[f64],
    target: f64,
    opts: &SolverOptions,
    r_max: f64,
) -> Result<f64> {
    let u_min = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let u_edge = *u.last().expect("non-empty");
    let mut lo = opts.e0_lo.max(u_min);
    let grid_limited = u_edge <= opts.e0_hi;
    let mut hi = opts.e0_hi.min(u_edge);
    let (m_hi, _) = mass_and_slope(inverse, weights, u, hi)?;
    if m_hi < target {
        if grid_limited {
            return Err(Error::GridTooSmall { r_max });
        }
        return Err(Error::BracketExhausted {
            mass: target,
            lo: opts.e0_lo,
            hi: opts.e0_hi,
        });
    }
    let (m_lo, _) = mass_and_slope(inverse, weights, u, lo)?;
    if m_lo > target {
        return Err(Error::BracketExhausted {
            mass: target,
            lo: opts.e0_lo,
            hi: opts.e0_hi,
        });
    }
    let (mut mlo, mut mhi) = (m_lo, m_hi);
    let mut e = hi;
    let (mut m, mut dm) = (m_hi, 0.0);
    let _ = dm;
    // Newton from the right is monotone for the convex mass curve; bisection
    // guards the general case.
    let mut last_mass = m_hi;
    let mut last_e = hi;
    for _ in 0..300 {
        let (mm, dd) = mass_and_slope(inverse, weights, u, e)?;
        m = mm;
        dm = dd;
        // monotonicity of mass(E) is checked on every evaluation
        if (e > last_e && m < last_mass) || (e < last_e && m > last_mass) {
            return Err(Error::Convergence(format!(
                "mass is not monotone in E0 near {e} ({m} vs {last_mass} at {last_e})"
            )));
        }
        if !(m >= mlo && m <= mhi) {
            return Err(Error::Convergence(format!(
                "mass({e}) = {m} falls outside the bracket masses [{mlo}, {mhi}]"
            )));
        }
        last_mass = m;
        last_e = e;
        let err = m - target;
        if err.abs() <= 4.0 * f64::EPSILON * target {
            return Ok(e);
        }
        if err > 0.0 {
            hi = e;
            mhi = m;
        } else {
            lo = e;
            mlo = m;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()) {
            return Ok(if (mhi - target).abs() < (target - mlo).abs() { hi } else { lo });
        }
        let mut next = if dm > 0.0 { e - err / dm } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        e = next;
    }
    let _ = m;
    Err(Error::Convergence(format!(
        "E0 root find did not converge for mass {target}"
    )))
}

/// Kuzmin profile of scale `a` normalized to `mass` on the grid.
fn kuzmin_guess(grid: &Arc<RadialGrid>, mass: f64, a: f64) -> Vec<f64> {
    let raw: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|r| a / (2.0 * PI * (r * r + a * a).powf(1.5)))
        .collect();
    let m: f64 = grid.mass_weights().iter().zip(&raw).map(|(w, v)| w * v).sum();
    raw.iter().map(|v| v * mass / m).collect()
}

/// Support radius (threshold node) and the interpolated edge `U₀ = E₀`.
fn support_of(grid: &RadialGrid, rho: &[f64], u: &[f64], e0: f64) -> (f64, f64) {
    let nodes = grid.nodes();
    let peak = rho.iter().cloned().fold(0.0, f64::max);
    let idx = rho
        .iter()
        .position(|&v| v <= SUPPORT_THRESHOLD * peak)
        .unwrap_or(nodes.len() - 1);
    let support = nodes[idx];
    // E₀ − U changes sign on the last panel before idx
    let mut edge = support;
    if idx > 0 {
        let i = idx - 1;
        let spline = CubicSpline::new(nodes, u);
        let (a, b) = (nodes[i], nodes[i + 1]);
        let (ga, gb) = (e0 - u[i], e0 - u[i + 1]);
        if ga > 0.0 && gb <= 0.0 {
            let mut x = a + (b - a) * ga / (ga - gb);
            for _ in 0..3 {
                let val = spline.value_at(x, i);
                let d = spline.derivative_at(x, i);
                if d != 0.0 {
                    x = (x - (val - e0) / d).clamp(a, b);
                }
            }
            edge = x;
        }
    }
    (support, edge)
}

/// Fixed-point solve on a given grid; `initial` overrides the Kuzmin guess.
pub fn solve_on_grid(
    model: &CasimirModel,
    mass: f64,
    opts: &SolverOptions,
    kernel: Arc<KernelMatrix>,
    initial: Option<Vec<f64>>,
) -> (Result<SteadyState>, Vec<f64>) {
    let mut history = Vec::new();
    let res = solve_inner(model, mass, opts, kernel, initial, &mut history);
    (res, history)
}

fn solve_inner(
    model: &CasimirModel,
    mass: f64,
    opts: &SolverOptions,
    kernel: Arc<KernelMatrix>,
    initial: Option<Vec<f64>>,
    history: &mut Vec<f64>,
) -> Result<SteadyState> {
    opts.validate()?;
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::Input(format!("target mass must be positive, got {mass}")));
    }
    let inverse = model.inverse()?;
    let grid = kernel.grid().clone();
    let weights = grid.mass_weights();
    let r_max = grid.r_max();
    let mut rho = initial.unwrap_or_else(|| kuzmin_guess(&grid, mass, r_max / 10.0));
    let lam = opts.damping;
    let mut growth = 0usize;
    let mut converged = None;
    for it in 1..=opts.max_iters {
        let u = kernel.apply(&rho);
        let e0 = solve_cutoff(&inverse, &weights, &u, mass, opts, r_max)?;
        let target = density_values(&inverse, e0, &u)?;
        let peak = target.iter().cloned().fold(0.0, f64::max);
        let residual = rho
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / peak;
        if let Some(&prev) = history.last() {
            if residual > prev {
                growth += 1;
            } else {
                growth = 0;
            }
        }
        history.push(residual);
        if growth >= 10 {
            return Err(Error::Divergence {
                iterations: it,
                residual,
            });
        }
        if residual <= opts.residual_tol {
            converged = Some((it, target));
            break;
        }
        for (r, t) in rho.iter_mut().zip(&target) {
            *r = (1.0 - lam) * *r + lam * t;
        }
        if it % 500 == 0 {
            debug!("iteration {it}: residual {residual:.3e}, E0 {e0}");
        }
    }
    let (iterations, rho_final) = converged.ok_or_else(|| {
        Error::Convergence(format!(
            "residual {:.3e} above tolerance {:.3e} after {} iterations",
            history.last().copied().unwrap_or(f64::NAN),
            opts.residual_tol,
            opts.max_iters
        ))
    })?;
    let u_final = kernel.apply(&rho_final);
    let e0 = solve_cutoff(&inverse, &weights, &u_final, mass, opts, r_max)?;
    let residual = density_residual(&inverse, e0, &u_final, &rho_final)?;
    let rho0 = RadialProfile::density(grid.clone(), rho_final)?;
    let u0 = RadialProfile::new(grid.clone(), u_final)?;
    let state_mass = rho0.mass();
    if (state_mass - mass).abs() > opts.mass_tol * mass {
        return Err(Error::Convergence(format!(
            "mass {state_mass} misses target {mass} beyond tolerance"
        )));
    }
    let (support_radius, edge_radius) = support_of(&grid, rho0.values(), u0.values(), e0);
    if support_radius >= r_max {
        return Err(Error::GridTooSmall { r_max });
    }
    Ok(SteadyState {
        model: model.clone(),
        inverse,
        e0,
        grid,
        rho0,
        u0,
        mass: state_mass,
        support_radius,
        edge_radius,
        residual,
        iterations,
        residual_history: history.clone(),
        kernel,
    })
}

/// Ratio of the core radius to the support edge on adapted grids.
const CORE_MARGIN: f64 = 1.05;

/// Solves at mass `mass`; with [`GridSpec::Auto`] the hybrid core radius is
/// iterated to `1.05×` the support edge and `r_max = 20 r_core`.
pub fn solve(model: &CasimirModel, mass: f64, opts: &SolverOptions) -> Result<SteadyState> {
    solve_with_history(model, mass, opts).0
}

pub fn solve_with_history(
    model: &CasimirModel,
    mass: f64,
    opts: &SolverOptions,
) -> (Result<SteadyState>, Vec<f64>) {
    if let Err(e) = opts.validate() {
        return (Err(e), Vec::new());
    }
    let n = match opts.grid {
        GridSpec::Auto { n } => n,
        _ => {
            let grid = match opts.grid.build() {
                Ok(g) => Arc::new(g),
                Err(e) => return (Err(e), Vec::new()),
            };
            return solve_on_grid(model, mass, opts, Arc::new(KernelMatrix::assemble(grid)), None);
        }
    };
    let mut r_core = 1.0;
    let mut last_history = Vec::new();
    let mut best: Option<SteadyState> = None;
    for attempt in 0..40 {
        let grid = match RadialGrid::hybrid(r_core, 20.0 * r_core, n) {
            Ok(g) => Arc::new(g),
            Err(e) => return (Err(e), last_history),
        };
        let kernel = Arc::new(KernelMatrix::assemble(grid));
        let (res, hist) = solve_on_grid(model, mass, opts, kernel, None);
        last_history = hist;
        match res {
            Err(Error::GridTooSmall { .. }) => {
                info!("support exceeds grid with r_core = {r_core}; enlarging");
                r_core *= 4.0;
                continue;
            }
            Err(e) => return (Err(e), last_history),
            Ok(state) => {
                let wanted = CORE_MARGIN * state.edge_radius;
                let rel = (wanted - r_core).abs() / r_core;
                debug!("auto grid attempt {attempt}: r_core {r_core}, edge {}", state.edge_radius);
                if rel <= 1e-3 {
                    return (Ok(state), last_history);
                }
                r_core = wanted;
                best = Some(state);
            }
        }
    }
    match best {
        Some(s) => (Ok(s), last_history),
        None => (
            Err(Error::Convergence("automatic grid sizing did not settle".into())),
            last_history,
        ),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    /// Largest jump of the spline slope `U₀'` between neighbouring nodes,
    /// relative to `max |U₀'|`.
    pub u_prime_jump: f64,
    /// Largest jump allowed at this grid spacing.
    pub u_prime_jump_limit: f64,
    /// `max |ρ₀' + 2π q(E₀−U₀) U₀'| / max |2π q U₀'|` over interior nodes.
    pub derivative_identity_defect: f64,
    pub max_abs_u: f64,
    pub max_rho: f64,
    pub rho_at_edge: f64,
    /// Fitted `p` in `ρ₀ ∝ (E₀ − U₀)^p` over the outer 5% of the support.
    pub edge_exponent: Option<f64>,
    /// Fitted `p` in `ρ₀ ∝ (R_edge − r)^p` over the same nodes.
    pub edge_exponent_radial: Option<f64>,
    pub expected_edge_exponent: Option<f64>,
    pub pass: bool,
}

/// Finite-difference regularity diagnostics of a converged state.
pub fn regularity_report(ss: &SteadyState) -> Result<RegularityReport> {
    let r = ss.grid.nodes();
    let rho = ss.rho0.values();
    let u = ss.u0.values();
    let n = r.len();
    let du = ss.u0.spline_derivative();
    let du_max = du.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let support_idx = r
        .iter()
        .position(|&x| x >= ss.support_radius)
        .unwrap_or(n - 1);
    // slope jumps over the support and a little beyond
    let upto = (support_idx + 5).min(n - 1);
    let mut jump: f64 = 0.0;
    let mut h_max: f64 = 0.0;
    for i in 0..upto {
        jump = jump.max((du[i + 1] - du[i]).abs());
        h_max = h_max.max(r[i + 1] - r[i]);
    }
    let u_prime_jump = if du_max > 0.0 { jump / du_max } else { 0.0 };
    // a kink would survive refinement; smooth slopes change by O(h/R) per node
    let u_prime_jump_limit = 10.0 * h_max / ss.edge_radius.max(h_max);

    // three-point nodal derivatives on the non-uniform grid
    let fd = |v: &[f64], i: usize| {
        let (h0, h1) = (r[i] - r[i - 1], r[i + 1] - r[i]);
        (-h1 / (h0 * (h0 + h1))) * v[i - 1]
            + ((h1 - h0) / (h0 * h1)) * v[i]
            + (h0 / (h1 * (h0 + h1))) * v[i + 1]
    };
    let mut defect: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 1..n - 1 {
        if rho[i - 1] <= 0.0 || rho[i] <= 0.0 || rho[i + 1] <= 0.0 {
            continue;
        }
        let lhs = fd(rho, i);
        let rhs = -2.0 * PI * ss.inverse.q(ss.e0 - u[i])? * fd(u, i);
        defect = defect.max((lhs - rhs).abs());
        scale = scale.max(rhs.abs());
    }
    let derivative_identity_defect = if scale > 0.0 { defect / scale } else { 0.0 };

    // edge exponent over nodes in the outer 5% of the support
    let edge = ss.edge_radius;
    let mut xs = Vec::new();
    let mut ss_ = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        if r[i] >= 0.95 * edge && r[i] < edge && rho[i] > 0.0 {
            xs.push(edge - r[i]);
            ss_.push(ss.e0 - u[i]);
            ys.push(rho[i]);
        }
    }
    let edge_exponent = crate::potential::fit_power_law(&ss_, &ys);
    let edge_exponent_radial = crate::potential::fit_power_law(&xs, &ys);
    let expected_edge_exponent = ss.model.polytrope_exponent().map(|mu| mu + 1.0);
    let max_abs_u = u.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let max_rho = rho.iter().cloned().fold(0.0, f64::max);
    let rho_at_edge = rho[support_idx];
    let mut pass = derivative_identity_defect <= 1e-3
        && u_prime_jump <= u_prime_jump_limit
        && max_abs_u.is_finite()
        && max_rho.is_finite()
        && rho_at_edge <= SUPPORT_THRESHOLD * max_rho;
    if let (Some(p), Some(e)) = (edge_exponent, expected_edge_exponent) {
        pass &= (p - e).abs() <= 0.05;
    }
    Ok(RegularityReport {
        u_prime_jump,
        u_prime_jump_limit,
        derivative_identity_defect,
        max_abs_u,
        max_rho,
        rho_at_edge,
        edge_exponent,
        edge_exponent_radial,
        expected_edge_exponent,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> CasimirModel {
        CasimirModel::polytrope(0.5, 1.0).unwrap()
    }

    #[test]
    fn density_from_potential_values() {
        let inv = half().inverse().unwrap();
        let g = Arc::new(RadialGrid::uniform(3.0, 16).unwrap());
        let mut u = vec![-1.0; 16];
        u[1] = -4.0; // E₀ − U = 3
        u[2] = -1.0; // E₀ − U = 0
        u[3] = 0.5;
        let p = RadialProfile::new(g, u).unwrap();
        let rho = density_from_potential(&inv, -1.0, &p).unwrap();
        assert!((rho.values()[1] - 4.0 * PI).abs() < 1e-13);
        assert_eq!(rho.values()[2], 0.0);
        assert_eq!(rho.values()[3], 0.0);
    }

    #[test]
    fn options_validation() {
        let mut o = SolverOptions::default();
        o.damping = 0.0;
        assert!(o.validate().is_err());
        let mut o = SolverOptions::default();
        o.e0_hi = 0.1;
        assert!(o.validate().is_err());
    }

    #[test]
    fn zero_mass_rejected() {
        assert!(matches!(
            solve(&half(), 0.0, &SolverOptions::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn small_grid_reported() {
        let opts = SolverOptions {
            grid: GridSpec::Hybrid {
                r_core: 0.001,
                r_max: 0.005,
                n: 64,
            },
            ..SolverOptions::default()
        };
        let res = solve(&half(), 1.0, &opts);
        assert!(matches!(res, Err(Error::GridTooSmall { .. })), "{:?}", res.map(|s| s.summary()));
    }

    #[test]
    fn narrow_bracket_exhausted() {
        let opts = SolverOptions {
            e0_lo: -1e9,
            e0_hi: -1e8,
            grid: GridSpec::Hybrid {
                r_core: 1.0,
                r_max: 20.0,
                n: 64,
            },
            ..SolverOptions::default()
        };
        assert!(matches!(
            solve(&half(), 1.0, &opts),
            Err(Error::BracketExhausted { .. })
        ));
    }
}
