use std::f64::consts::PI;
use std::sync::Arc;

use flatvp::casimir::CasimirModel;
use flatvp::functionals::{evaluate_ensemble, evaluate_steady, stability_distance};
use flatvp::stability::{
    dynamical_time, run, sample, time_series_csv, ForceField, ForceMethod, Integrator,
    ParticleEnsemble, Perturbation, SimConfig,
};
use flatvp::steady_state::{solve, SolverOptions, SteadyState};

fn steady() -> SteadyState {
    solve(&CasimirModel::polytrope(0.5, 1.0).unwrap(), 1.0, &SolverOptions::default()).unwrap()
}

/// Mass of the steady state inside `r`, with linear density on each panel.
fn enclosed_mass(ss: &SteadyState, r: f64) -> f64 {
    let nodes = ss.grid.nodes();
    let rho = ss.rho0.values();
    let mut m = 0.0;
    for j in 0..nodes.len() - 1 {
        let (a, b) = (nodes[j], nodes[j + 1]);
        if a >= r {
            break;
        }
        let x = b.min(r);
        let slope = (rho[j + 1] - rho[j]) / (b - a);
        let c0 = rho[j] - slope * a;
        m += 2.0 * PI * (c0 * (x * x - a * a) / 2.0 + slope * (x * x * x - a * a * a) / 3.0);
    }
    m
}

#[test]
fn sampled_radii_follow_the_steady_mass_profile() {
    let ss = steady();
    let n = 200_000;
    let ens = sample(&ss, n, 3).unwrap();
    let mut r: Vec<f64> = (0..n).map(|i| ens.radius(i)).collect();
    r.sort_by(f64::total_cmp);
    let ks = r
        .iter()
        .enumerate()
        .map(|(i, &ri)| {
            let cdf = enclosed_mass(&ss, ri) / ss.mass;
            (cdf - i as f64 / n as f64).abs().max((cdf - (i + 1) as f64 / n as f64).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value of the Kolmogorov distribution
    assert!(ks < 1.63 / (n as f64).sqrt(), "KS distance {ks}");
    assert!(r[n - 1] <= ss.edge_radius * (1.0 + 1e-9));
}

#[test]
fn sampled_moments_match_steady_functionals() {
    let ss = steady();
    let rep = evaluate_steady(&ss).unwrap();
    let ens = sample(&ss, 200_000, 5).unwrap();
    assert!((ens.mass() - 1.0).abs() < 1e-12);
    assert!((ens.kinetic_energy() - rep.e_kin).abs() < 0.01 * rep.e_kin);
    // isotropic velocities carry no net rotation or momentum
    let scale = ens.mass() * (2.0 * rep.e_kin / ens.mass()).sqrt() * ss.edge_radius;
    assert!(ens.angular_momentum().abs() < 0.01 * scale);
    let p = ens.momentum();
    assert!(p[0].hypot(p[1]) < 0.01 * (2.0 * rep.e_kin).sqrt());
}

#[test]
fn grid_force_follows_the_steady_potential() {
    let ss = steady();
    let ens = sample(&ss, 400_000, 9).unwrap();
    let field = ForceField::new(ForceMethod::Grid, ss.kernel.clone()).unwrap();
    let acc = field.accelerations(&ens);
    let du = ss.u0.spline_derivative();
    let nodes = ss.grid.nodes();
    let scale = du.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    // deposit shot noise dominates; the innermost cells hold few particles
    let (mut worst_outer, mut sq, mut count) = (0.0f64, 0.0, 0usize);
    for i in (0..ens.len()).step_by(7) {
        let r = ens.radius(i);
        let j = ss.grid.panel_of(r);
        let t = (r - nodes[j]) / (nodes[j + 1] - nodes[j]);
        let expect = -(du[j] + t * (du[j + 1] - du[j]));
        let x = ens.pos[i];
        let radial = (acc[i][0] * x[0] + acc[i][1] * x[1]) / r;
        let e = (radial - expect).abs() / scale;
        sq += e * e;
        count += 1;
        if r > 0.1 * ss.edge_radius {
            worst_outer = worst_outer.max(e);
        }
    }
    let rms = (sq / count as f64).sqrt();
    assert!(rms < 0.03, "rms radial force error {rms}");
    assert!(worst_outer < 0.06, "worst radial force error {worst_outer}");
}

#[test]
fn circular_two_body_orbit_is_kept() {
    let (d, eps, w): (f64, f64, f64) = (1.0, 0.05, 0.5);
    // each body circles the centre at radius d/2
    let v = (w * d * d / (2.0 * (d * d + eps * eps).powf(1.5))).sqrt();
    let ens = ParticleEnsemble::new(
        vec![[-0.5 * d, 0.0], [0.5 * d, 0.0]],
        vec![[0.0, -v], [0.0, v]],
        vec![w, w],
    )
    .unwrap();
    let kernel = steady().kernel;
    let field = ForceField::new(ForceMethod::DirectSum { softening: eps }, kernel).unwrap();
    let period = PI * d / v;
    let steps = 4000;
    let mut it = Integrator::new(field, ens);
    let l0 = it.ens.angular_momentum();
    for _ in 0..steps {
        it.step(period / steps as f64).unwrap();
        let sep = (it.ens.pos[0][0] - it.ens.pos[1][0]).hypot(it.ens.pos[0][1] - it.ens.pos[1][1]);
        assert!((sep - d).abs() < 1e-5, "separation {sep}");
    }
    assert!((it.ens.angular_momentum() - l0).abs() < 1e-13);
    // back to the start after one period
    assert!((it.ens.pos[1][0] - 0.5 * d).abs() < 1e-4 && it.ens.pos[1][1].abs() < 1e-4);
}

#[test]
fn direct_sum_conserves_momentum_and_angular_momentum() {
    let ss = steady();
    let ens = sample(&ss, 300, 21).unwrap();
    let field = ForceField::new(ForceMethod::DirectSum { softening: 0.01 * ss.edge_radius }, ss.kernel.clone()).unwrap();
    let dt = dynamical_time(&ss) / 400.0;
    let mut it = Integrator::new(field, ens);
    let (p0, l0) = (it.ens.momentum(), it.ens.angular_momentum());
    let pscale = it.ens.mass() * it.ens.vel.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
    for _ in 0..200 {
        it.step(dt).unwrap();
    }
    let p = it.ens.momentum();
    assert!((p[0] - p0[0]).abs() < 1e-12 * pscale && (p[1] - p0[1]).abs() < 1e-12 * pscale);
    assert!((it.ens.angular_momentum() - l0).abs() < 1e-12 * pscale * ss.edge_radius);
}

#[test]
fn grid_method_conserves_angular_momentum() {
    let ss = steady();
    let cfg = SimConfig {
        n: 20_000,
        t_end: Some(dynamical_time(&ss)),
        ..SimConfig::default()
    };
    let out = run(&ss, &cfg, Perturbation::None).unwrap();
    assert!(out.summary.l3_drift < 1e-10, "{}", out.summary.l3_drift);
    assert!(out.summary.d_dist_nonnegative);
}

#[test]
fn ensemble_functionals_agree_with_steady_state() {
    let ss = steady();
    let rep = evaluate_steady(&ss).unwrap();
    let ens = sample(&ss, 1_000_000, 2).unwrap();
    let er = evaluate_ensemble(&ss.model, &ens, &ss.kernel).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    assert!(rel(er.mass, rep.mass) < 1e-12);
    assert!(rel(er.e_kin, rep.e_kin) < 0.02);
    assert!(rel(er.e_pot, rep.e_pot) < 0.02);
    assert!(rel(er.casimir, rep.casimir) < 0.02, "{} vs {}", er.casimir, rep.casimir);
    assert!(rel(er.d, rep.d) < 0.02);
    assert!(er.f_max.unwrap() > 0.0);
}

#[test]
fn distance_of_the_steady_sample_is_noise() {
    let ss = steady();
    let ens = sample(&ss, 100_000, 4).unwrap();
    let sd = stability_distance(&ss, &ens).unwrap();
    assert!(sd.d.abs() <= sd.eps_mc, "d = {}, eps = {}", sd.d, sd.eps_mc);
    assert!(sd.consistency_gap.abs() <= sd.eps_mc);
    assert!(sd.e_pot_diff.abs() < 0.01);
}

#[test]
fn perturbed_sample_is_measurably_distant() {
    let ss = steady();
    let mut ens = sample(&ss, 100_000, 4).unwrap();
    Perturbation::VelocityScale { delta: 0.1 }.apply(&mut ens).unwrap();
    let sd = stability_distance(&ss, &ens).unwrap();
    assert!(sd.d > sd.eps_mc, "d = {}, eps = {}", sd.d, sd.eps_mc);
    let mut ens = sample(&ss, 100_000, 4).unwrap();
    Perturbation::RadialStretch { delta: 0.05 }.apply(&mut ens).unwrap();
    let sd = stability_distance(&ss, &ens).unwrap();
    assert!(sd.d > sd.eps_mc, "d = {}, eps = {}", sd.d, sd.eps_mc);
    assert!(sd.e_pot_diff < 0.0);
}

#[test]
fn runs_are_identical_across_thread_counts() {
    let ss = Arc::new(steady());
    let go = |threads: usize| {
        let ss = ss.clone();
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(move || {
                let cfg = SimConfig {
                    n: 30_000,
                    t_end: Some(0.2 * dynamical_time(&ss)),
                    output_every: 5,
                    seed: 17,
                    ..SimConfig::default()
                };
                let out = run(&ss, &cfg, Perturbation::VelocityScale { delta: 0.02 }).unwrap();
                (time_series_csv(&out.rows, &[]), out.final_ensemble.snapshot_csv(&[]))
            })
    };
    let (a, b) = (go(1), go(4));
    assert!(a.0 == b.0, "time series differ");
    assert!(a.1 == b.1, "snapshots differ");
}
