//! Energy functionals `E_kin`, `E_pot`, `C`, `P = E_kin + C`, `D = P + E_pot`
//! for steady states and particle ensembles, the scaling transforms
//! `f̄(x,v) = a f(bx, cv)`, the splitting diagnostic and the stability
//! distance.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::casimir::{CasimirModel, InverseQ};
use crate::error::{Error, Result};
use crate::grid::{RadialGrid, RadialProfile};
use crate::potential::{lp_norm, outer_mass, potential_at, KernelMatrix};
use crate::quadrature::{adaptive, gauss_legendre, gl8};
use crate::stability::{chunked_sum, deposit, deposited_density, ParticleEnsemble};
use crate::steady_state::{solve, SolverOptions, SteadyState};

/// Largest self-consistency residual accepted as a converged state.
pub const CONVERGED_RESIDUAL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, lhs: f64, rhs: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            pass,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FunctionalReport {
    pub mass: f64,
    pub e_kin: f64,
    pub e_pot: f64,
    pub casimir: f64,
    pub p: f64,
    pub d: f64,
    /// How the entries were computed.
    pub method: String,
    /// Largest histogram density, ensembles only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_max: Option<f64>,
    pub checks: Vec<Check>,
}

impl FunctionalReport {
    pub fn new(mass: f64, e_kin: f64, e_pot: f64, casimir: f64, method: &str) -> Self {
        let p = e_kin + casimir;
        Self {
            mass,
            e_kin,
            e_pot,
            casimir,
            p,
            d: p + e_pot,
            method: method.into(),
            f_max: None,
            checks: Vec::new(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Runs a fallible scalar integrand through [`adaptive`], keeping the first
/// error.
fn integrate<F: Fn(f64) -> Result<f64>>(f: F, a: f64, b: f64, rel: f64) -> Result<f64> {
    let failure = Cell::new(None);
    let v = adaptive(
        |t| match f(t) {
            Ok(v) => v,
            Err(e) => {
                failure.set(Some(e.to_string()));
                0.0
            }
        },
        a,
        b,
        rel,
        1e-300,
    )?;
    if let Some(msg) = failure.take() {
        return Err(Error::Convergence(msg));
    }
    Ok(v)
}

/// Per-node `(2πH, 2πJ, 2πΨ)` for headroom values `s`.
fn nodal_moments(inv: &InverseQ, s: &[f64]) -> Result<Vec<[f64; 3]>> {
    s.par_iter()
        .map(|&sj| {
            Ok([
                2.0 * PI * inv.kinetic_moment(sj)?,
                2.0 * PI * inv.casimir_moment(sj, 1.0)?,
                2.0 * PI * inv.first_moment(sj)?,
            ])
        })
        .collect()
}

fn weighted(w: &[f64], v: impl Iterator<Item = f64>) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// `θ` with `1/(4/3) = (1−θ) + θ/(1+1/n₁)`, `n₁ = 1+μ₁`.
pub fn interpolation_theta(mu1: f64) -> f64 {
    (2.0 + mu1) / 4.0
}

/// Functionals of a converged steady state, reduced through `(r, w)`.
pub fn evaluate_steady(ss: &SteadyState) -> Result<FunctionalReport> {
    if !(ss.residual <= CONVERGED_RESIDUAL) {
        return Err(Error::Input(format!(
            "steady state is not converged (residual {:.3e})",
            ss.residual
        )));
    }
    let w = ss.kernel.weights();
    let rho = ss.rho0.values();
    let mass = weighted(w, rho.iter().copied());
    let method = if ss.model.polytrope_exponent().is_some() {
        "steady: closed-form energy moments at nodes, symmetric kernel form"
    } else {
        "steady: adaptive energy moments at nodes, symmetric kernel form"
    };
    if mass == 0.0 {
        return Ok(FunctionalReport::new(0.0, 0.0, 0.0, 0.0, method));
    }
    let moments = nodal_moments(&ss.inverse, &ss.headroom())?;
    let e_kin = weighted(w, moments.iter().map(|m| m[0]));
    let casimir = weighted(w, moments.iter().map(|m| m[1]));
    let qf = weighted(w, moments.iter().map(|m| m[2]));
    let e_pot = ss.kernel.energy(rho);
    let mut rep = FunctionalReport::new(mass, e_kin, e_pot, casimir, method);

    let e0_rhs = (qf + e_kin + 2.0 * e_pot) / mass;
    rep.checks.push(Check::new(
        "E0_identity",
        ss.e0,
        e0_rhs,
        (ss.e0 - e0_rhs).abs() <= 1e-6 * ss.e0.abs(),
    ));
    let virial = (2.0 * e_kin + e_pot).abs();
    rep.checks.push(Check::new(
        "virial",
        virial,
        0.01 * e_pot.abs(),
        virial <= 0.01 * e_pot.abs(),
    ));
    rep.checks.push(Check::new("D_negative", rep.d, 0.0, rep.d < 0.0));
    let mu1 = ss.model.constants.mu1;
    let theta = interpolation_theta(mu1);
    let n1 = 1.0 + mu1;
    let lhs = lp_norm(&ss.rho0, 4.0 / 3.0)?;
    let rhs = lp_norm(&ss.rho0, 1.0)?.powf(1.0 - theta) * lp_norm(&ss.rho0, 1.0 + 1.0 / n1)?.powf(theta);
    rep.checks.push(Check::new(
        "norm_interpolation",
        lhs,
        rhs,
        lhs <= rhs * (1.0 + 1e-9),
    ));
    Ok(rep)
}

/// Safety factor on the empirical `C_M`.
pub const LOWER_BOUND_SAFETY: f64 = 2.0;

/// `C_M` making the lower bound `D ≥ P − C_M(1 + P^{n₁/2})` tight at `rep`.
pub fn lower_bound_constant(rep: &FunctionalReport, mu1: f64) -> f64 {
    let n1 = 1.0 + mu1;
    (rep.p - rep.d) / (1.0 + rep.p.powf(n1 / 2.0))
}

/// `C_M` for a `(model, M)` pair: the tight value at the steady state times
/// [`LOWER_BOUND_SAFETY`].
pub fn calibrate_lower_bound(steady: &FunctionalReport, mu1: f64) -> f64 {
    LOWER_BOUND_SAFETY * lower_bound_constant(steady, mu1)
}

pub fn lower_bound_check(rep: &FunctionalReport, mu1: f64, c_m: f64) -> Check {
    let n1 = 1.0 + mu1;
    let rhs = rep.p - c_m * (1.0 + rep.p.powf(n1 / 2.0));
    Check::new("lower_bound", rep.d, rhs, rep.d >= rhs - 1e-9 * rep.d.abs())
}

/// Phase-space histogram in `(r, v_r, v_t)` with cells `[i h_r, (i+1) h_r)`
/// and similarly in the velocity components.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct PhaseHistogram {
    pub widths: [f64; 3],
}

type CellKey = (i64, i64, i64);

/// Histogram estimate of the Casimir functional.
#[derive(Debug, Clone)]
pub struct HistogramEstimate {
    /// `Σ_cells [Q(f̂) − ½Q''(f̂) Var f̂] vol`
    pub casimir: f64,
    /// Delta-method variance of `casimir`.
    pub variance: f64,
    pub f_max: f64,
    /// `Q'(f̂)` in each particle's cell.
    pub dq: Vec<f64>,
}

/// Cell averages of `f₀` and its binned Casimir value.
#[derive(Debug, Clone)]
pub struct BinnedSteady {
    pub casimir: f64,
    pub cells: BTreeMap<CellKey, f64>,
}

fn phase_coords(x: [f64; 2], v: [f64; 2]) -> [f64; 3] {
    let r = x[0].hypot(x[1]);
    if r == 0.0 {
        return [0.0, v[0], v[1]];
    }
    let vr = (x[0] * v[0] + x[1] * v[1]) / r;
    let vt = (x[0] * v[1] - x[1] * v[0]) / r;
    [r, vr, vt]
}

impl PhaseHistogram {
    /// Scott's rule `h = 3.49 σ N^{−1/(d+2)}` per coordinate, `d = 3`.
    pub fn scott(ens: &ParticleEnsemble) -> Self {
        let n = ens.len().max(1);
        let mut mean = [0.0; 3];
        let mut sq = [0.0; 3];
        let total: f64 = ens.weights.iter().sum();
        for i in 0..ens.len() {
            let c = phase_coords(ens.pos[i], ens.vel[i]);
            for k in 0..3 {
                mean[k] += ens.weights[i] * c[k];
                sq[k] += ens.weights[i] * c[k] * c[k];
            }
        }
        let mut widths = [1.0; 3];
        for k in 0..3 {
            let m = mean[k] / total;
            let var = (sq[k] / total - m * m).max(0.0);
            let h = 3.49 * var.sqrt() * (n as f64).powf(-0.2);
            widths[k] = if h > 0.0 { h } else { 1.0 };
        }
        Self { widths }
    }

    fn key(&self, c: [f64; 3]) -> CellKey {
        (
            (c[0] / self.widths[0]).floor() as i64,
            (c[1] / self.widths[1]).floor() as i64,
            (c[2] / self.widths[2]).floor() as i64,
        )
    }

    /// Phase-space measure `π(r₂² − r₁²) Δv_r Δv_t` of a cell.
    pub fn cell_volume(&self, key: CellKey) -> f64 {
        let r1 = key.0 as f64 * self.widths[0];
        let r2 = r1 + self.widths[0];
        PI * (r2 * r2 - r1 * r1) * self.widths[1] * self.widths[2]
    }

    fn accumulate(&self, ens: &ParticleEnsemble) -> (Vec<CellKey>, BTreeMap<CellKey, (f64, f64)>) {
        let keys: Vec<CellKey> = (0..ens.len())
            .into_par_iter()
            .map(|i| self.key(phase_coords(ens.pos[i], ens.vel[i])))
            .collect();
        let mut cells: BTreeMap<CellKey, (f64, f64)> = BTreeMap::new();
        for (i, k) in keys.iter().enumerate() {
            let w = ens.weights[i];
            let e = cells.entry(*k).or_insert((0.0, 0.0));
            e.0 += w;
            e.1 += w * w;
        }
        (keys, cells)
    }

    pub fn casimir(&self, model: &CasimirModel, ens: &ParticleEnsemble) -> HistogramEstimate {
        let (keys, cells) = self.accumulate(ens);
        let mut casimir = 0.0;
        let mut variance = 0.0;
        let mut f_max: f64 = 0.0;
        for (k, (sw, sw2)) in &cells {
            let vol = self.cell_volume(*k);
            let f = sw / vol;
            f_max = f_max.max(f);
            casimir += model.q_value(f) * vol - 0.5 * model.d2q(f) * sw2 / vol;
            variance += model.dq(f).powi(2) * sw2;
        }
        let dq = keys
            .par_iter()
            .map(|k| {
                let (sw, _) = cells[k];
                model.dq(sw / self.cell_volume(*k))
            })
            .collect();
        HistogramEstimate {
            casimir,
            variance,
            f_max,
            dq,
        }
    }

    /// Exact cell averages of `f₀` (6-point Gauss per coordinate) and
    /// `Σ Q(f̄₀) vol` over every cell meeting the support.
    pub fn binned_steady(&self, ss: &SteadyState) -> Result<BinnedSteady> {
        let s_max = ss.headroom().into_iter().fold(0.0, f64::max);
        let v_max = (2.0 * s_max).sqrt();
        let [hr, hv, ht] = self.widths;
        let nr = (ss.edge_radius / hr).floor() as i64;
        let (v_lo, v_hi) = ((-v_max / hv).floor() as i64, (v_max / hv).floor() as i64);
        let (t_lo, t_hi) = ((-v_max / ht).floor() as i64, (v_max / ht).floor() as i64);
        let mut keys = Vec::new();
        for i in 0..=nr {
            for j in v_lo..=v_hi {
                for k in t_lo..=t_hi {
                    // nearest point of the velocity cell to the origin
                    let near = |lo: f64, h: f64| {
                        if lo > 0.0 {
                            lo
                        } else if lo + h < 0.0 {
                            lo + h
                        } else {
                            0.0
                        }
                    };
                    let a = near(j as f64 * hv, hv);
                    let b = near(k as f64 * ht, ht);
                    if 0.5 * (a * a + b * b) < s_max {
                        keys.push((i, j, k));
                    }
                }
            }
        }
        let rule = gauss_legendre(6);
        let vals: Vec<Result<(CellKey, f64)>> = keys
            .par_iter()
            .map(|&key| {
                let r1 = key.0 as f64 * hr;
                let v1 = key.1 as f64 * hv;
                let t1 = key.2 as f64 * ht;
                let mut total = 0.0;
                for (xr, wr) in rule.nodes.iter().zip(&rule.weights) {
                    let r = r1 + hr * xr;
                    let u = ss.u0.interpolate(r, f64::NAN);
                    let s = ss.e0 - u;
                    if !(s > 0.0) {
                        continue;
                    }
                    for (xv, wv) in rule.nodes.iter().zip(&rule.weights) {
                        let vr = v1 + hv * xv;
                        for (xt, wt) in rule.nodes.iter().zip(&rule.weights) {
                            let vt = t1 + ht * xt;
                            let f = ss.inverse.q(s - 0.5 * (vr * vr + vt * vt))?;
                            total += wr * wv * wt * 2.0 * PI * r * f;
                        }
                    }
                }
                let vol = self.cell_volume(key);
                Ok((key, total * hr * hv * ht / vol))
            })
            .collect();
        let mut cells = BTreeMap::new();
        let mut casimir = 0.0;
        for v in vals {
            let (key, mean) = v?;
            if mean > 0.0 {
                casimir += ss.model.q_value(mean) * self.cell_volume(key);
                cells.insert(key, mean);
            }
        }
        Ok(BinnedSteady { casimir, cells })
    }

    pub fn binned_casimir_of_steady(&self, ss: &SteadyState) -> Result<BinnedSteady> {
        self.binned_steady(ss)
    }

    /// `(Σ (f̂ − f̄₀)² vol)^{1/2}` over the cells of either.
    pub fn l2_distance(&self, ens: &ParticleEnsemble, f0: &BinnedSteady) -> f64 {
        let (_, cells) = self.accumulate(ens);
        let mut total = 0.0;
        for (k, (sw, _)) in &cells {
            let vol = self.cell_volume(*k);
            let f0v = f0.cells.get(k).copied().unwrap_or(0.0);
            total += (sw / vol - f0v).powi(2) * vol;
        }
        for (k, f0v) in &f0.cells {
            if !cells.contains_key(k) {
                total += f0v * f0v * self.cell_volume(*k);
            }
        }
        total.sqrt()
    }
}

/// Potential energy of the deposited ensemble with each particle's own
/// contribution removed; also returns the nodal density.
fn ensemble_potential_energy(ens: &ParticleEnsemble, kernel: &KernelMatrix) -> (f64, Vec<f64>) {
    let (masses, cells) = deposit(ens, kernel.grid());
    let w = kernel.weights();
    let rho = deposited_density(&masses, w);
    let total = kernel.energy(&rho);
    let idx: Vec<usize> = (0..ens.len()).collect();
    let own = chunked_sum(&idx, |&i| match cells[i] {
        Some((j, alpha)) => {
            let m = ens.weights[i];
            let (a, b) = (m * alpha / w[j], m * (1.0 - alpha) / w[j + 1]);
            -0.5 * (a * a * kernel.form_entry(j, j)
                + 2.0 * a * b * kernel.form_entry(j, j + 1)
                + b * b * kernel.form_entry(j + 1, j + 1))
        }
        None => 0.0,
    });
    (total - own, rho)
}

/// Functionals of an ensemble with Scott's-rule histogram cells.
pub fn evaluate_ensemble(
    model: &CasimirModel,
    ens: &ParticleEnsemble,
    kernel: &KernelMatrix,
) -> Result<FunctionalReport> {
    evaluate_ensemble_with(model, ens, kernel, &PhaseHistogram::scott(ens))
}

pub fn evaluate_ensemble_with(
    model: &CasimirModel,
    ens: &ParticleEnsemble,
    kernel: &KernelMatrix,
    hist: &PhaseHistogram,
) -> Result<FunctionalReport> {
    Ok(ensemble_parts(model, ens, kernel, hist)?.0)
}

fn ensemble_parts(
    model: &CasimirModel,
    ens: &ParticleEnsemble,
    kernel: &KernelMatrix,
    hist: &PhaseHistogram,
) -> Result<(FunctionalReport, HistogramEstimate, Vec<f64>)> {
    if ens.is_empty() {
        return Err(Error::Input("ensemble is empty".into()));
    }
    let mass = ens.mass();
    let e_kin = ens.kinetic_energy();
    let (e_pot, rho) = ensemble_potential_energy(ens, kernel);
    let est = hist.casimir(model, ens);
    let mut rep = FunctionalReport::new(
        mass,
        e_kin,
        e_pot,
        est.casimir,
        "ensemble: particle sums, cloud-in-cell deposit with self-energy removed, phase-space histogram",
    );
    rep.f_max = Some(est.f_max);
    Ok((rep, est, rho))
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityDistance {
    /// `d(f, f₀)`
    pub d: f64,
    /// `E_pot(ρ_f − ρ₀)`
    pub e_pot_diff: f64,
    /// Three standard deviations of the Monte-Carlo error in `d`.
    pub eps_mc: f64,
    pub casimir_term: f64,
    pub energy_term: f64,
    /// `D(f) − D(f₀)`, with `C(f₀)` binned on the ensemble's cells.
    pub d_change: f64,
    /// `D(f) − D(f₀) − d − E_pot(ρ_f − ρ₀)`
    pub consistency_gap: f64,
    pub l2_distance: f64,
}

/// `d(f,f₀) = ∬[Q(f) − Q(f₀) + (E − E₀)(f − f₀)]` with `E = ½|v|² + U₀`,
/// for an ensemble representing `f`.
pub fn stability_distance(ss: &SteadyState, ens: &ParticleEnsemble) -> Result<StabilityDistance> {
    let hist = PhaseHistogram::scott(ens);
    let binned = hist.binned_steady(ss)?;
    let rep = evaluate_ensemble_with(&ss.model, ens, &ss.kernel, &hist)?;
    stability_distance_with(ss, ens, &hist, &binned, &rep)
}

pub fn stability_distance_with(
    ss: &SteadyState,
    ens: &ParticleEnsemble,
    hist: &PhaseHistogram,
    binned: &BinnedSteady,
    _report: &FunctionalReport,
) -> Result<StabilityDistance> {
    Ok(ensemble_diagnostics(ss, ens, hist, binned)?.1)
}

/// Ensemble functionals and the stability distance from one histogram pass.
pub fn ensemble_diagnostics(
    ss: &SteadyState,
    ens: &ParticleEnsemble,
    hist: &PhaseHistogram,
    binned: &BinnedSteady,
) -> Result<(FunctionalReport, StabilityDistance)> {
    let (rep, est, rho_f) = ensemble_parts(&ss.model, ens, &ss.kernel, hist)?;
    let steady = evaluate_steady(ss)?;
    let w = ss.kernel.weights();
    let moments = nodal_moments(&ss.inverse, &ss.headroom())?;
    // ∬(E − E₀) f₀ = −∬ Q'(f₀) f₀
    let f0_energy = -weighted(w, moments.iter().map(|m| m[2]));
    let u_edge = *ss.u0.values().last().expect("non-empty");
    let r_max = ss.grid.r_max();
    let energies: Vec<f64> = (0..ens.len())
        .into_par_iter()
        .map(|i| {
            let r = ens.radius(i);
            let u = if r <= r_max {
                ss.u0.interpolate(r, 0.0)
            } else {
                u_edge * r_max / r
            };
            let v = ens.vel[i];
            0.5 * (v[0] * v[0] + v[1] * v[1]) + u - ss.e0
        })
        .collect();
    let idx: Vec<usize> = (0..ens.len()).collect();
    let part_energy = chunked_sum(&idx, |&i| ens.weights[i] * energies[i]);
    let mass = rep.mass;
    // d is linear to first order in each particle's Q'(f̂) + E − E₀
    let g_mean = chunked_sum(&idx, |&i| ens.weights[i] * (est.dq[i] + energies[i])) / mass;
    let var = chunked_sum(&idx, |&i| {
        (ens.weights[i] * (est.dq[i] + energies[i] - g_mean)).powi(2)
    });
    let casimir_term = est.casimir - binned.casimir;
    let energy_term = part_energy - f0_energy;
    let d = casimir_term + energy_term;
    let e_pot_diff = rep.e_pot + steady.e_pot - ss.kernel.pair(&rho_f, ss.rho0.values());
    // D(f₀) with the same cell averaging as the ensemble side
    let d_change = rep.d - (steady.d - steady.casimir + binned.casimir);
    let dist = StabilityDistance {
        d,
        e_pot_diff,
        eps_mc: 3.0 * var.sqrt(),
        casimir_term,
        energy_term,
        d_change,
        consistency_gap: d_change - d - e_pot_diff,
        l2_distance: hist.l2_distance(ens, binned),
    };
    Ok((rep, dist))
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct ScalingParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ScalingParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        for (n, v) in [("a", a), ("b", b), ("c", c)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Input(format!("scaling parameter {n} must be positive, got {v}")));
            }
        }
        Ok(Self { a, b, c })
    }

    /// The parameters with `m a^{1/μ₃} = m c^{−2} = m² b` and
    /// `a b^{−2} c^{−2} = m`.
    pub fn from_mass_ratio(m: f64, mu3: f64) -> Result<Self> {
        let e = mu3 / (1.0 - mu3);
        Self::new(m.powf(e), m.powf(e), m.powf(-0.5 / (1.0 - mu3)))
    }

    pub fn mass_factor(&self) -> f64 {
        self.a / (self.b * self.b * self.c * self.c)
    }
}

/// `n` triples drawn log-uniformly from `[1/range, range]³`.
pub fn random_scaling_params(n: usize, range: f64, seed: u64) -> Result<Vec<ScalingParams>> {
    if !(range > 1.0 && range.is_finite()) {
        return Err(Error::Input(format!("scaling range must exceed 1, got {range}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = range.ln();
    (0..n)
        .map(|_| {
            let mut draw = || (l * rng.random_range(-1.0..1.0)).exp();
            let (a, b, c) = (draw(), draw(), draw());
            ScalingParams::new(a, b, c)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RescaleReport {
    pub params: ScalingParams,
    pub predicted_mass: f64,
    pub predicted: FunctionalReport,
    pub direct: FunctionalReport,
    /// Largest relative difference over mass and the four energies.
    pub max_rel_diff: f64,
}

/// Predicted functionals of `a f₀(bx, cv)` from the scaling laws, and the
/// same quantities evaluated directly on the materialized state.
pub fn rescale_steady(ss: &SteadyState, p: ScalingParams) -> Result<RescaleReport> {
    let ScalingParams { a, b, c } = p;
    let base = evaluate_steady(ss)?;
    let w = ss.kernel.weights();
    let s = ss.headroom();
    let inv = &ss.inverse;
    let cas_a: Vec<f64> = s
        .par_iter()
        .map(|&sj| Ok(2.0 * PI * inv.casimir_moment(sj, a)?))
        .collect::<Result<_>>()?;
    let (b2, c2) = (b * b, c * c);
    let predicted_mass = a / (b2 * c2) * base.mass;
    let predicted = FunctionalReport::new(
        predicted_mass,
        a / (b2 * c2 * c2) * base.e_kin,
        a * a / (b2 * b * c2 * c2) * base.e_pot,
        weighted(w, cas_a.iter().copied()) / (b2 * c2),
        "scaling laws applied to the unscaled state",
    );

    // materialize f̄(r̄, w̄) = a q(s(b r̄) − c² w̄) on the grid r/b
    let grid = Arc::new(ss.grid.scaled(1.0 / b)?);
    let model = &ss.model;
    let per_node: Vec<[f64; 3]> = s
        .par_iter()
        .map(|&sj| {
            if sj <= 0.0 {
                return Ok([0.0; 3]);
            }
            let top = sj / c2;
            let fbar = |wb: f64| -> Result<f64> { Ok(a * inv.q(sj - c2 * wb)?) };
            let rho = integrate(|wb| fbar(wb), 0.0, top, 1e-12)?;
            let kin = integrate(|wb| Ok(wb * fbar(wb)?), 0.0, top, 1e-12)?;
            let cas = integrate(|wb| Ok(model.q_value(fbar(wb)?)), 0.0, top, 1e-12)?;
            Ok([2.0 * PI * rho, 2.0 * PI * kin, 2.0 * PI * cas])
        })
        .collect::<Result<_>>()?;
    let wbar = grid.mass_weights();
    let rho_bar: Vec<f64> = per_node.iter().map(|v| v[0]).collect();
    let kernel = KernelMatrix::assemble(grid);
    let direct = FunctionalReport::new(
        weighted(&wbar, rho_bar.iter().copied()),
        weighted(&wbar, per_node.iter().map(|v| v[1])),
        kernel.energy(&rho_bar),
        weighted(&wbar, per_node.iter().map(|v| v[2])),
        "materialized rescaled state: adaptive velocity integrals, kernel on the scaled grid",
    );
    let rel = |x: f64, y: f64| if y == 0.0 { x.abs() } else { ((x - y) / y).abs() };
    let max_rel_diff = [
        rel(direct.mass, predicted.mass),
        rel(direct.e_kin, predicted.e_kin),
        rel(direct.e_pot, predicted.e_pot),
        rel(direct.casimir, predicted.casimir),
        rel(direct.d, predicted.d),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(RescaleReport {
        params: p,
        predicted_mass,
        predicted,
        direct,
        max_rel_diff,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub m1: f64,
    pub m2: f64,
    pub alpha: f64,
    pub d_m1: f64,
    pub d_m2: f64,
    /// `(M₁/M₂)^{1+α} D_{M₂}`
    pub rhs: f64,
    /// `D_{M₁} − rhs`
    pub margin: f64,
    /// `margin / |D_{M₁}|`
    pub relative_margin: f64,
    pub tolerance: f64,
    pub holds: bool,
    pub params: ScalingParams,
    /// Mass of the rescaled `M₂` state, should be `M₁`.
    pub rescaled_mass: f64,
    pub rescaled_d: f64,
    /// `D(f̄) ≥ m^{1+α} D(f_{M₂})`
    pub mechanism_holds: bool,
    /// `D_{M₁} ≤ D(f̄)`, the minimizer beats the rescaled competitor.
    pub minimizer_below_rescaled: bool,
}

/// Relative tolerance for comparisons between separately solved states.
pub const SCALING_TOLERANCE: f64 = 1e-5;

pub fn scaling_inequality_check(
    model: &CasimirModel,
    m1: f64,
    m2: f64,
    opts: &SolverOptions,
) -> Result<ScalingReport> {
    if !(m1 > 0.0 && m1 <= m2 && m2.is_finite()) {
        return Err(Error::Input(format!("need 0 < M1 <= M2, got M1 = {m1}, M2 = {m2}")));
    }
    let s2 = solve(model, m2, opts)?;
    let d2 = evaluate_steady(&s2)?.d;
    let d1 = if m1 == m2 {
        d2
    } else {
        evaluate_steady(&solve(model, m1, opts)?)?.d
    };
    scaling_report_from(model, m1, m2, d1, d2, &s2)
}

/// Builds the scaling report from already solved states.
pub fn scaling_report_from(
    model: &CasimirModel,
    m1: f64,
    m2: f64,
    d1: f64,
    d2: f64,
    s2: &SteadyState,
) -> Result<ScalingReport> {
    let m = m1 / m2;
    let alpha = model.alpha();
    let rhs = m.powf(1.0 + alpha) * d2;
    let margin = d1 - rhs;
    let tolerance = SCALING_TOLERANCE * d1.abs();
    let params = ScalingParams::from_mass_ratio(m, model.constants.mu3)?;
    let resc = rescale_steady(s2, params)?;
    let rescaled_d = resc.direct.d;
    Ok(ScalingReport {
        m1,
        m2,
        alpha,
        d_m1: d1,
        d_m2: d2,
        rhs,
        margin,
        relative_margin: margin / d1.abs(),
        tolerance,
        holds: margin >= -tolerance,
        params,
        rescaled_mass: resc.direct.mass,
        rescaled_d,
        mechanism_holds: rescaled_d >= rhs - tolerance,
        minimizer_below_rescaled: d1 <= rescaled_d + tolerance,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitReport {
    pub radius: f64,
    pub interior_mass: f64,
    /// `λ`
    pub exterior_mass: f64,
    /// `∫ U₁ ρ₂ dx`
    pub mixed_term: f64,
    pub norm_4_3: f64,
    pub constant: f64,
    /// `C R^{−1/2} ‖ρ‖_{4/3} λ`
    pub bound_rhs: f64,
    /// Smallest `C` for which the bound holds here.
    pub empirical_constant: f64,
    pub pass: bool,
}

/// Mass of the interpolated density on `[0, r]`.
fn inner_mass(nodes: &[f64], rho: &[f64], r: f64) -> f64 {
    let rule = gl8();
    let mut total = 0.0;
    for j in 0..nodes.len() - 1 {
        let (a, b) = (nodes[j], nodes[j + 1]);
        if a >= r {
            break;
        }
        let hi = b.min(r);
        total += rule.integrate(a, hi, |s| s * (rho[j] + (rho[j + 1] - rho[j]) * (s - a) / (b - a)));
    }
    2.0 * PI * total
}

/// Splits the state at radius `R` into interior and exterior parts.
pub fn split_diagnostic(ss: &SteadyState, radius: f64, constant: f64) -> Result<SplitReport> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Input(format!("split radius must be positive, got {radius}")));
    }
    let nodes = ss.grid.nodes();
    let rho = ss.rho0.values();
    let exterior = outer_mass(nodes, rho, radius);
    let interior = inner_mass(nodes, rho, radius);
    let mixed = if exterior == 0.0 {
        0.0
    } else {
        let rule = gl8();
        let parts: Vec<Result<f64>> = (0..nodes.len() - 1)
            .into_par_iter()
            .map(|j| {
                let (a, b) = (nodes[j], nodes[j + 1]);
                if b <= radius || (rho[j] == 0.0 && rho[j + 1] == 0.0) {
                    return Ok(0.0);
                }
                let lo = a.max(radius);
                let mut acc = 0.0;
                for (t, wt) in rule.nodes.iter().zip(&rule.weights) {
                    let s = lo + (b - lo) * t;
                    let rs = rho[j] + (rho[j + 1] - rho[j]) * (s - a) / (b - a);
                    acc += wt * (b - lo) * s * rs * potential_at(&ss.rho0, s, radius)?;
                }
                Ok(acc)
            })
            .collect();
        let mut total = 0.0;
        for p in parts {
            total += p?;
        }
        2.0 * PI * total
    };
    let norm = lp_norm(&ss.rho0, 4.0 / 3.0)?;
    let scale = radius.powf(-0.5) * norm * exterior;
    let bound_rhs = constant * scale;
    let empirical_constant = if scale > 0.0 { mixed.abs() / scale } else { 0.0 };
    Ok(SplitReport {
        radius,
        interior_mass: interior,
        exterior_mass: exterior,
        mixed_term: mixed,
        norm_4_3: norm,
        constant,
        bound_rhs,
        empirical_constant,
        pass: mixed.abs() <= bound_rhs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimalityTrial {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
    pub d: f64,
    pub lower_bound: Check,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimalityReport {
    pub d0: f64,
    pub lower_bound_constant: f64,
    pub tolerance: f64,
    pub trials: Vec<MinimalityTrial>,
    pub pass: bool,
}

/// Necessary-condition probe of minimality: Gaussian bumps are added to
/// `ρ₀`, the mass is restored by rescaling, and the isotropic state
/// `q(s(r) − w)` with that density (`2πG(s) = ρ`) is compared with `f₀`.
pub fn minimality_probe(
    ss: &SteadyState,
    trials: usize,
    seed: u64,
    amplitude: f64,
) -> Result<MinimalityReport> {
    let base = evaluate_steady(ss)?;
    let mu1 = ss.model.constants.mu1;
    let c_m = calibrate_lower_bound(&base, mu1);
    let tolerance = 1e-9 * base.d.abs();
    let w = ss.kernel.weights();
    let nodes = ss.grid.nodes();
    let rho0 = ss.rho0.values();
    let edge = ss.edge_radius;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let center = edge * rng.random_range(0.1..0.8);
        let width = edge * rng.random_range(0.05..0.2);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let height = sign * amplitude * ss.rho0.interpolate(center, 0.0);
        let mut rho: Vec<f64> = nodes
            .iter()
            .zip(rho0)
            .map(|(&r, &v)| {
                let bump = if r < edge { (-((r - center) / width).powi(2)).exp() } else { 0.0 };
                (v + height * bump).max(0.0)
            })
            .collect();
        let m = weighted(w, rho.iter().copied());
        for v in &mut rho {
            *v *= ss.mass / m;
        }
        let s: Vec<f64> = rho
            .par_iter()
            .map(|&v| ss.inverse.antiderivative_inverse(v / (2.0 * PI)))
            .collect::<Result<_>>()?;
        let moments = nodal_moments(&ss.inverse, &s)?;
        let rep = FunctionalReport::new(
            weighted(w, rho.iter().copied()),
            weighted(w, moments.iter().map(|m| m[0])),
            ss.kernel.energy(&rho),
            weighted(w, moments.iter().map(|m| m[1])),
            "perturbed isotropic state",
        );
        let lb = lower_bound_check(&rep, mu1, c_m);
        out.push(MinimalityTrial {
            center,
            width,
            amplitude: height,
            d: rep.d,
            pass: rep.d >= base.d - tolerance,
            lower_bound: lb,
        });
    }
    let pass = out.iter().all(|t| t.pass && t.lower_bound.pass);
    Ok(MinimalityReport {
        d0: base.d,
        lower_bound_constant: c_m,
        tolerance,
        trials: out,
        pass,
    })
}

/// Nodal density of a profile on a grid, for callers holding raw values.
pub fn profile(grid: &Arc<RadialGrid>, values: Vec<f64>) -> Result<RadialProfile> {
    RadialProfile::density(grid.clone(), values)
}
