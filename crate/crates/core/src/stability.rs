//! Particle ensembles sampled from a steady state and their evolution under
//! the in-plane self-gravity, with the stability diagnostics along the way.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{
    BinnedSteady, FunctionalReport, PhaseHistogram, StabilityDistance,
};
use crate::grid::{CubicSpline, RadialGrid};
use crate::potential::KernelMatrix;
use crate::steady_state::SteadyState;

/// Name of the generator used for all sampling.
pub const RNG_NAME: &str = "ChaCha8";

/// Chunk length for deterministic reductions over particles.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub pos: Vec<[f64; 2]>,
    pub vel: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub time: f64,
}

impl ParticleEnsemble {
    pub fn new(pos: Vec<[f64; 2]>, vel: Vec<[f64; 2]>, weights: Vec<f64>) -> Result<Self> {
        if pos.len() != vel.len() || pos.len() != weights.len() {
            return Err(Error::Input("ensemble arrays differ in length".into()));
        }
        for (i, w) in weights.iter().enumerate() {
            if !(*w > 0.0 && w.is_finite()) {
                return Err(Error::Input(format!("particle {i} has non-positive weight {w}")));
            }
        }
        for i in 0..pos.len() {
            if !(pos[i].iter().chain(&vel[i]).all(|v| v.is_finite())) {
                return Err(Error::NonFinite { index: i });
            }
        }
        Ok(Self {
            pos,
            vel,
            weights,
            time: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        chunked_sum(&self.weights, |w| *w)
    }

    pub fn kinetic_energy(&self) -> f64 {
        let idx: Vec<usize> = (0..self.len()).collect();
        chunked_sum(&idx, |&i| {
            let v = self.vel[i];
            0.5 * self.weights[i] * (v[0] * v[0] + v[1] * v[1])
        })
    }

    /// Total `L₃ = Σ wᵢ (x₁v₂ − x₂v₁)`.
    pub fn angular_momentum(&self) -> f64 {
        let idx: Vec<usize> = (0..self.len()).collect();
        chunked_sum(&idx, |&i| {
            let (x, v) = (self.pos[i], self.vel[i]);
            self.weights[i] * (x[0] * v[1] - x[1] * v[0])
        })
    }

    pub fn momentum(&self) -> [f64; 2] {
        let idx: Vec<usize> = (0..self.len()).collect();
        [
            chunked_sum(&idx, |&i| self.weights[i] * self.vel[i][0]),
            chunked_sum(&idx, |&i| self.weights[i] * self.vel[i][1]),
        ]
    }

    pub fn max_radius(&self) -> f64 {
        self.pos
            .iter()
            .map(|x| x[0].hypot(x[1]))
            .fold(0.0, f64::max)
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.pos[i][0].hypot(self.pos[i][1])
    }

    pub fn scale_weights(&mut self, factor: f64) {
        for w in &mut self.weights {
            *w *= factor;
        }
    }

    pub fn snapshot_csv(&self, header: &[(String, String)]) -> String {
        let mut s = String::with_capacity(self.len() * 120);
        for (k, v) in header {
            let _ = writeln!(s, "# {k}: {v}");
        }
        s.push_str("x1,x2,v1,v2,w\n");
        for i in 0..self.len() {
            let (x, v) = (self.pos[i], self.vel[i]);
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                x[0], x[1], v[0], v[1], self.weights[i]
            );
        }
        s
    }
}

/// Sum of `f` over `items` in fixed-size chunks, chunk partials added in
/// order: the result does not depend on the thread count.
pub(crate) fn chunked_sum<T: Sync, F: Fn(&T) -> f64 + Sync>(items: &[T], f: F) -> f64 {
    let partials: Vec<f64> = items
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(&f).sum::<f64>())
        .collect();
    partials.iter().sum()
}

/// Draws `n` equal-weight particles from `f₀`.
pub fn sample(ss: &SteadyState, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::Input("cannot sample an empty ensemble".into()));
    }
    if n < 1000 {
        warn!("sampling only {n} particles; diagnostics will be noisy");
    }
    let nodes = ss.grid.nodes();
    let rho = ss.rho0.values();
    let u = ss.u0.values();
    // cumulative mass at nodes of the piecewise-linear density
    let panel_mass = |j: usize, upto: f64| {
        let (a, b) = (nodes[j], nodes[j + 1]);
        let slope = (rho[j + 1] - rho[j]) / (b - a);
        // 2π ∫_a^x s (ρ_j + slope (s − a)) ds
        let x = upto;
        let c0 = rho[j] - slope * a;
        2.0 * PI * (c0 * (x * x - a * a) / 2.0 + slope * (x * x * x - a * a * a) / 3.0)
    };
    let mut cum = vec![0.0; nodes.len()];
    for j in 0..nodes.len() - 1 {
        cum[j + 1] = cum[j] + panel_mass(j, nodes[j + 1]);
    }
    let total = cum[nodes.len() - 1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = ss.mass / n as f64;
    let mut pos = Vec::with_capacity(n);
    let mut vel = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let j = (cum.partition_point(|&c| c <= target).max(1) - 1).min(nodes.len() - 2);
        let want = target - cum[j];
        let (mut lo, mut hi) = (nodes[j], nodes[j + 1]);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if panel_mass(j, mid) < want {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        let t = (r - nodes[j]) / (nodes[j + 1] - nodes[j]);
        let s = ss.e0 - (u[j] + t * (u[j + 1] - u[j]));
        let w = if s > 0.0 {
            let top = ss.inverse.q(s)?;
            loop {
                let w = rng.random::<f64>() * s;
                let accept = rng.random::<f64>() * top;
                if accept < ss.inverse.q(s - w)? {
                    break w;
                }
            }
        } else {
            0.0
        };
        let speed = (2.0 * w).sqrt();
        let phi = 2.0 * PI * rng.random::<f64>();
        let psi = 2.0 * PI * rng.random::<f64>();
        pos.push([r * phi.cos(), r * phi.sin()]);
        vel.push([speed * psi.cos(), speed * psi.sin()]);
    }
    ParticleEnsemble::new(pos, vel, vec![weight; n])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForceMethod {
    /// Axisymmetrized field of the deposited density.
    Grid,
    /// Plummer-softened pair sum.
    DirectSum { softening: f64 },
}

/// Cloud-in-cell deposit onto the grid nodes: node masses and, per particle,
/// `(panel, fraction on the left node)`; particles beyond the grid get
/// `None`.
pub(crate) fn deposit(
    ens: &ParticleEnsemble,
    grid: &RadialGrid,
) -> (Vec<f64>, Vec<Option<(usize, f64)>>) {
    let nodes = grid.nodes();
    let r_max = grid.r_max();
    let cells: Vec<Option<(usize, f64)>> = (0..ens.len())
        .into_par_iter()
        .map(|i| {
            let r = ens.radius(i);
            if r > r_max {
                return None;
            }
            let j = grid.panel_of(r);
            let alpha = (nodes[j + 1] - r) / (nodes[j + 1] - nodes[j]);
            Some((j, alpha))
        })
        .collect();
    let mut masses = vec![0.0; nodes.len()];
    for (i, c) in cells.iter().enumerate() {
        if let Some((j, alpha)) = *c {
            masses[j] += ens.weights[i] * alpha;
            masses[j + 1] += ens.weights[i] * (1.0 - alpha);
        }
    }
    (masses, cells)
}

/// Nodal density `m_j / w_j` of deposited node masses.
pub(crate) fn deposited_density(masses: &[f64], weights: &[f64]) -> Vec<f64> {
    masses.iter().zip(weights).map(|(m, w)| m / w).collect()
}

/// Force evaluation context.
#[derive(Debug, Clone)]
pub struct ForceField {
    pub method: ForceMethod,
    pub kernel: Arc<KernelMatrix>,
}

impl ForceField {
    pub fn new(method: ForceMethod, kernel: Arc<KernelMatrix>) -> Result<Self> {
        if let ForceMethod::DirectSum { softening } = method {
            if !(softening > 0.0 && softening.is_finite()) {
                return Err(Error::Input(format!(
                    "direct-sum softening must be positive, got {softening}"
                )));
            }
        }
        Ok(Self { method, kernel })
    }

    pub fn accelerations(&self, ens: &ParticleEnsemble) -> Vec<[f64; 2]> {
        match self.method {
            ForceMethod::Grid => grid_accelerations(ens, &self.kernel),
            ForceMethod::DirectSum { softening } => direct_accelerations(ens, softening),
        }
    }
}

fn grid_accelerations(ens: &ParticleEnsemble, kernel: &KernelMatrix) -> Vec<[f64; 2]> {
    let grid = kernel.grid();
    let nodes = grid.nodes();
    let (masses, cells) = deposit(ens, grid);
    let rho = deposited_density(&masses, kernel.weights());
    let u = kernel.apply(&rho);
    let spline = CubicSpline::new(nodes, &u);
    let inside: f64 = masses.iter().sum();
    (0..ens.len())
        .into_par_iter()
        .map(|i| {
            let x = ens.pos[i];
            let r = x[0].hypot(x[1]);
            if r == 0.0 {
                return [0.0, 0.0];
            }
            let du = match cells[i] {
                Some((j, _)) => spline.derivative_at(r, j),
                // monopole beyond the grid
                None => inside / (r * r),
            };
            [-du * x[0] / r, -du * x[1] / r]
        })
        .collect()
}

fn direct_accelerations(ens: &ParticleEnsemble, eps: f64) -> Vec<[f64; 2]> {
    let eps2 = eps * eps;
    (0..ens.len())
        .into_par_iter()
        .map(|i| {
            let xi = ens.pos[i];
            let mut a = [0.0, 0.0];
            for j in 0..ens.len() {
                if j == i {
                    continue;
                }
                let dx = xi[0] - ens.pos[j][0];
                let dy = xi[1] - ens.pos[j][1];
                let d2 = dx * dx + dy * dy + eps2;
                let f = ens.weights[j] / (d2 * d2.sqrt());
                a[0] -= f * dx;
                a[1] -= f * dy;
            }
            a
        })
        .collect()
}

/// Kick-drift-kick leapfrog state with the accelerations at the current
/// positions cached.
#[derive(Debug, Clone)]
pub struct Integrator {
    pub field: ForceField,
    pub ens: ParticleEnsemble,
    acc: Vec<[f64; 2]>,
}

impl Integrator {
    pub fn new(field: ForceField, ens: ParticleEnsemble) -> Self {
        let acc = field.accelerations(&ens);
        Self { field, ens, acc }
    }

    pub fn accelerations(&self) -> &[[f64; 2]] {
        &self.acc
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        let half = 0.5 * dt;
        let acc = &self.acc;
        self.ens
            .vel
            .par_iter_mut()
            .zip(self.ens.pos.par_iter_mut())
            .zip(acc.par_iter())
            .for_each(|((v, x), a)| {
                v[0] += half * a[0];
                v[1] += half * a[1];
                x[0] += dt * v[0];
                x[1] += dt * v[1];
            });
        self.acc = self.field.accelerations(&self.ens);
        let acc = &self.acc;
        self.ens
            .vel
            .par_iter_mut()
            .zip(acc.par_iter())
            .for_each(|(v, a)| {
                v[0] += half * a[0];
                v[1] += half * a[1];
            });
        if let Some(i) = (0..self.ens.len()).find(|&i| {
            let (x, v) = (self.ens.pos[i], self.ens.vel[i]);
            !(x[0].is_finite() && x[1].is_finite() && v[0].is_finite() && v[1].is_finite())
        }) {
            return Err(Error::NonFinite { index: i });
        }
        self.ens.time += dt;
        Ok(())
    }
}

/// Single leapfrog step of an ensemble (accelerations recomputed first).
pub fn step(ens: &ParticleEnsemble, dt: f64, field: &ForceField) -> Result<ParticleEnsemble> {
    let mut it = Integrator::new(field.clone(), ens.clone());
    it.step(dt)?;
    Ok(it.ens)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    None,
    /// `v ← (1+δ) v`
    VelocityScale { delta: f64 },
    /// `x ← (1+δ) x`, moving mass outward (or inward for δ < 0)
    RadialStretch { delta: f64 },
}

impl Perturbation {
    pub fn apply(&self, ens: &mut ParticleEnsemble) -> Result<()> {
        match *self {
            Perturbation::None => {}
            Perturbation::VelocityScale { delta } => {
                check_delta(delta)?;
                for v in &mut ens.vel {
                    v[0] *= 1.0 + delta;
                    v[1] *= 1.0 + delta;
                }
            }
            Perturbation::RadialStretch { delta } => {
                check_delta(delta)?;
                for x in &mut ens.pos {
                    x[0] *= 1.0 + delta;
                    x[1] *= 1.0 + delta;
                }
            }
        }
        Ok(())
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > -1.0 && delta.is_finite()) {
        return Err(Error::Input(format!("perturbation size must exceed -1, got {delta}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub n: usize,
    /// `None`: `t_dyn / 200`
    pub dt: Option<f64>,
    /// `None`: `10 t_dyn`
    pub t_end: Option<f64>,
    pub method: ForceMethod,
    pub seed: u64,
    /// Diagnostics every this many steps.
    pub output_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 100_000,
            dt: None,
            t_end: None,
            method: ForceMethod::Grid,
            seed: 1,
            output_every: 20,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Input("particle count must be positive".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Input(format!("dt must be positive, got {dt}")));
            }
        }
        if let Some(t) = self.t_end {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Input(format!("t_end must be >= 0, got {t}")));
            }
        }
        if self.output_every == 0 {
            return Err(Error::Input("output cadence must be positive".into()));
        }
        if let ForceMethod::DirectSum { softening } = self.method {
            if !(softening > 0.0) {
                return Err(Error::Input("direct-sum softening must be positive".into()));
            }
        }
        Ok(())
    }
}

/// `2π √(R³/M)` with `R` the support edge.
pub fn dynamical_time(ss: &SteadyState) -> f64 {
    let r = ss.edge_radius;
    2.0 * PI * (r * r * r / ss.mass).sqrt()
}

/// Default softening, one percent of the support radius.
pub fn default_softening(ss: &SteadyState) -> f64 {
    0.01 * ss.edge_radius
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeRow {
    pub t: f64,
    pub e_kin: f64,
    pub e_pot: f64,
    pub casimir: f64,
    #[serde(rename = "D")]
    pub d_total: f64,
    pub d_dist: f64,
    pub epot_diff: f64,
    #[serde(rename = "L3")]
    pub l3: f64,
    pub max_r: f64,
    pub eps_mc: f64,
    pub f_max: f64,
    pub escaped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub t_dyn: f64,
    pub dt: f64,
    pub steps: usize,
    pub n: usize,
    pub seed: u64,
    pub rng: String,
    pub method: ForceMethod,
    pub perturbation: Perturbation,
    pub d_drift: f64,
    pub l3_drift: f64,
    pub energy_drift: f64,
    pub d_dist_max_abs: f64,
    pub eps_mc_initial: f64,
    pub d_dist_within_noise: bool,
    pub d_dist_nonnegative: bool,
    pub reference: FunctionalReport,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<TimeRow>,
    pub summary: RunSummary,
    pub final_ensemble: ParticleEnsemble,
}

fn diagnostics(
    ss: &SteadyState,
    ens: &ParticleEnsemble,
    hist: &PhaseHistogram,
    f0_binned: &BinnedSteady,
    escape_radius: f64,
) -> Result<TimeRow> {
    let (report, dist) = crate::functionals::ensemble_diagnostics(ss, ens, hist, f0_binned)?;
    let StabilityDistance {
        d,
        e_pot_diff,
        eps_mc,
        ..
    } = dist;
    let max_r = ens.max_radius();
    let escaped = ens.pos.iter().filter(|x| x[0].hypot(x[1]) > escape_radius).count();
    Ok(TimeRow {
        t: ens.time,
        e_kin: report.e_kin,
        e_pot: report.e_pot,
        casimir: report.casimir,
        d_total: report.d,
        d_dist: d,
        epot_diff: e_pot_diff,
        l3: ens.angular_momentum(),
        max_r,
        eps_mc,
        f_max: report.f_max.unwrap_or(0.0),
        escaped,
    })
}

/// Samples `f₀`, applies the perturbation and evolves with diagnostics at
/// the configured cadence.
pub fn run(ss: &SteadyState, cfg: &SimConfig, perturbation: Perturbation) -> Result<RunOutput> {
    cfg.validate()?;
    let t_dyn = dynamical_time(ss);
    let dt = cfg.dt.unwrap_or(t_dyn / 200.0);
    let t_end = cfg.t_end.unwrap_or(10.0 * t_dyn);
    let steps = (t_end / dt).round() as usize;
    let reference = crate::functionals::evaluate_steady(ss)?;
    let mut ens = sample(ss, cfg.n, cfg.seed)?;
    perturbation.apply(&mut ens)?;
    // histogram cells are fixed at t = 0 and reused for every output
    let hist = PhaseHistogram::scott(&ens);
    let f0_binned = hist.binned_steady(ss)?;
    let escape_radius = 100.0 * ss.edge_radius;
    let field = ForceField::new(cfg.method, ss.kernel.clone())?;
    let mut integ = Integrator::new(field, ens);
    let mut rows = vec![diagnostics(ss, &integ.ens, &hist, &f0_binned, escape_radius)?];
    let mut escaped_logged = rows[0].escaped;
    for k in 1..=steps {
        integ.step(dt)?;
        if k % cfg.output_every == 0 || k == steps {
            let row = diagnostics(ss, &integ.ens, &hist, &f0_binned, escape_radius)?;
            if row.escaped > escaped_logged {
                warn!(
                    "{} particles beyond {escape_radius:.3e} at t = {:.4e}",
                    row.escaped, row.t
                );
                escaped_logged = row.escaped;
            }
            info!(
                "t = {:.4e}: D = {:.6e}, d = {:.3e} (eps {:.1e})",
                row.t, row.d_total, row.d_dist, row.eps_mc
            );
            rows.push(row);
        }
    }
    let first = rows[0].clone();
    let rel = |a: f64, b: f64| if b != 0.0 { ((a - b) / b).abs() } else { (a - b).abs() };
    let d_drift = rows.iter().map(|r| rel(r.d_total, first.d_total)).fold(0.0, f64::max);
    let l3_scale = integ
        .ens
        .pos
        .iter()
        .zip(&integ.ens.vel)
        .zip(&integ.ens.weights)
        .map(|((x, v), w)| w * x[0].hypot(x[1]) * v[0].hypot(v[1]))
        .sum::<f64>();
    let l3_drift = rows
        .iter()
        .map(|r| (r.l3 - first.l3).abs() / l3_scale.max(first.l3.abs()))
        .fold(0.0, f64::max);
    let e0 = first.e_kin + first.e_pot;
    let energy_drift = rows
        .iter()
        .map(|r| rel(r.e_kin + r.e_pot, e0))
        .fold(0.0, f64::max);
    let d_dist_max_abs = rows.iter().map(|r| r.d_dist.abs()).fold(0.0, f64::max);
    let eps_mc_initial = first.eps_mc;
    let d_dist_within_noise = rows.iter().all(|r| r.d_dist.abs() <= 3.0 * eps_mc_initial);
    let d_dist_nonnegative = rows.iter().all(|r| r.d_dist >= -r.eps_mc);
    let summary = RunSummary {
        t_dyn,
        dt,
        steps,
        n: cfg.n,
        seed: cfg.seed,
        rng: RNG_NAME.into(),
        method: cfg.method,
        perturbation,
        d_drift,
        l3_drift,
        energy_drift,
        d_dist_max_abs,
        eps_mc_initial,
        d_dist_within_noise,
        d_dist_nonnegative,
        reference,
    };
    Ok(RunOutput {
        rows,
        summary,
        final_ensemble: integ.ens,
    })
}

pub fn time_series_csv(rows: &[TimeRow], header: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in header {
        let _ = writeln!(s, "# {k}: {v}");
    }
    s.push_str("t,e_kin,e_pot,casimir,D,d_dist,epot_diff,L3,max_r\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.e_kin, r.e_pot, r.casimir, r.d_total, r.d_dist, r.epot_diff, r.l3, r.max_r
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RadialGrid;

    fn kernel() -> Arc<KernelMatrix> {
        Arc::new(KernelMatrix::assemble(Arc::new(
            RadialGrid::uniform(10.0, 32).unwrap(),
        )))
    }

    #[test]
    fn two_equal_particles_direct_sum() {
        let d = 1.5;
        let eps = 0.1;
        let w = 0.3;
        let ens = ParticleEnsemble::new(
            vec![[0.0, 0.0], [d, 0.0]],
            vec![[0.0, 0.0]; 2],
            vec![w; 2],
        )
        .unwrap();
        let f = ForceField::new(ForceMethod::DirectSum { softening: eps }, kernel()).unwrap();
        let a = f.accelerations(&ens);
        let expect = w * d / (d * d + eps * eps).powf(1.5);
        assert!((a[0][0] - expect).abs() < 1e-15);
        assert_eq!(a[0][0], -a[1][0]);
        assert_eq!(a[0][1], 0.0);
    }

    #[test]
    fn single_particle_feels_nothing() {
        let ens =
            ParticleEnsemble::new(vec![[0.3, -0.2]], vec![[0.0, 0.0]], vec![1.0]).unwrap();
        let f = ForceField::new(ForceMethod::DirectSum { softening: 0.1 }, kernel()).unwrap();
        assert_eq!(f.accelerations(&ens), vec![[0.0, 0.0]]);
    }

    #[test]
    fn free_streaming_drift_is_exact() {
        // a single particle under direct sum streams freely
        let ens = ParticleEnsemble::new(vec![[0.25, 0.5]], vec![[1.0, -2.0]], vec![1.0]).unwrap();
        let f = ForceField::new(ForceMethod::DirectSum { softening: 0.1 }, kernel()).unwrap();
        let out = step(&ens, 0.125, &f).unwrap();
        assert_eq!(out.pos[0], [0.25 + 0.125, 0.5 - 0.25]);
        assert_eq!(out.vel[0], [1.0, -2.0]);
        assert_eq!(out.weights, ens.weights);
    }

    #[test]
    fn zero_softening_rejected() {
        assert!(ForceField::new(ForceMethod::DirectSum { softening: 0.0 }, kernel()).is_err());
    }

    #[test]
    fn time_reversal() {
        let ens = ParticleEnsemble::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.3, 0.8]],
            vec![[0.1, 0.2], [-0.3, 0.5], [0.0, -0.4]],
            vec![1.0, 0.5, 0.7],
        )
        .unwrap();
        let f = ForceField::new(ForceMethod::DirectSum { softening: 0.05 }, kernel()).unwrap();
        let mut it = Integrator::new(f, ens.clone());
        for _ in 0..10 {
            it.step(1e-3).unwrap();
        }
        for _ in 0..10 {
            it.step(-1e-3).unwrap();
        }
        for i in 0..3 {
            for k in 0..2 {
                assert!((it.ens.pos[i][k] - ens.pos[i][k]).abs() < 1e-12);
                assert!((it.ens.vel[i][k] - ens.vel[i][k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ensemble_rejects_bad_weights() {
        assert!(ParticleEnsemble::new(vec![[0.0, 0.0]], vec![[0.0, 0.0]], vec![0.0]).is_err());
        assert!(matches!(
            ParticleEnsemble::new(vec![[f64::NAN, 0.0]], vec![[0.0, 0.0]], vec![1.0]),
            Err(Error::NonFinite { index: 0 })
        ));
    }
}
