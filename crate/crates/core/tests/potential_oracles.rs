use std::f64::consts::PI;
use std::sync::Arc;

use flatvp::grid::{RadialGrid, RadialProfile};
use flatvp::potential::{lp_norm, outer_potential_energy, potential_from_density, KernelMatrix};
use flatvp::quadrature::adaptive;

fn kuzmin_density(r: f64) -> f64 {
    1.0 / (2.0 * PI * (r * r + 1.0).powf(1.5))
}

fn kuzmin_potential(r: f64) -> f64 {
    -1.0 / (r * r + 1.0).sqrt()
}

fn kuzmin_grid(n: usize) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::hybrid(1.0, 1e5, n).unwrap())
}

/// `U(r) = −∫₀^∞ s Σ(s) ∫₀^{2π} dθ / √(r² + s² − 2rs cos θ) ds` by nested
/// adaptive quadrature, splitting both integrals at the coincidence point.
fn two_d_oracle(sigma: impl Fn(f64) -> f64, r: f64, s_max: f64) -> f64 {
    let inner = |s: f64| {
        // |x − y|² written without cancellation near coincidence
        let f = |t: f64| 1.0 / ((r - s).powi(2) + 4.0 * r * s * (0.5 * t).sin().powi(2)).sqrt();
        // the integrand peaks at θ = 0 and is symmetric about π
        2.0 * adaptive(f, 0.0, PI, 1e-10, 1e-12).unwrap()
    };
    let outer = |s: f64| s * sigma(s) * inner(s);
    let mut total = 0.0;
    let mut cuts = vec![0.0, r, 2.0 * r + 1.0, 10.0, 100.0, s_max];
    cuts.retain(|&c| c <= s_max);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            total += adaptive(outer, w[0], w[1], 1e-10, 1e-14).unwrap();
        }
    }
    -total
}

#[test]
fn kuzmin_closed_form_agrees_with_plane_quadrature() {
    for &r in &[0.5, 1.0, 2.0] {
        // the tail beyond s = 1e4 adds < 1e-8 at these radii
        let u = two_d_oracle(kuzmin_density, r, 1e4);
        assert!((u - kuzmin_potential(r)).abs() < 1e-7, "r={r}: {u} vs {}", kuzmin_potential(r));
    }
}

fn max_rel_error(n: usize) -> f64 {
    let g = kuzmin_grid(n);
    let rho = RadialProfile::from_fn(g.clone(), kuzmin_density).unwrap();
    let u = potential_from_density(&rho).unwrap();
    g.nodes()
        .iter()
        .zip(u.values())
        .filter(|(r, _)| **r <= 10.0)
        .map(|(&r, &v)| ((v - kuzmin_potential(r)) / kuzmin_potential(r)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn kuzmin_potential_second_order() {
    let e1 = max_rel_error(512);
    let e2 = max_rel_error(1024);
    eprintln!("kuzmin max rel error n=512 {e1:.3e}, n=1024 {e2:.3e}");
    assert!(e1 <= 1e-3, "n=512 error {e1}");
    assert!(e1 / e2 >= 4.0 * 0.9, "ratio {}", e1 / e2);
}

#[test]
fn far_field_of_compact_disc() {
    let g = Arc::new(RadialGrid::hybrid(1.0, 60.0, 512).unwrap());
    let rho = RadialProfile::from_fn(g.clone(), |r| (1.0 - r * r).max(0.0)).unwrap();
    let m = rho.mass();
    let u = potential_from_density(&rho).unwrap();
    let r = 50.0;
    let ur = u.interpolate(r, 0.0);
    assert!((r * ur + m).abs() <= 0.01 * m);
    assert!(u.values().iter().all(|&v| v < 0.0));
    assert!(u.values().windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn kernel_form_is_symmetric() {
    let g = Arc::new(RadialGrid::hybrid(2.0, 40.0, 300).unwrap());
    let km = KernelMatrix::assemble(g.clone());
    let r1: Vec<f64> = g.nodes().iter().map(|&r| (-r * r).exp()).collect();
    let r2: Vec<f64> = g.nodes().iter().map(|&r| 1.0 / (1.0 + r).powi(4)).collect();
    let a = km.pair(&r1, &r2);
    let b = km.pair(&r2, &r1);
    assert!((a - b).abs() <= 1e-8 * a.abs());
    // the unsymmetrized ∫ρ₁U₂ agrees up to discretization error
    let u2 = km.apply(&r2);
    let direct: f64 = km.weights().iter().zip(&r1).zip(&u2).map(|((w, x), y)| w * x * y).sum();
    assert!((direct - a).abs() <= 1e-3 * a.abs());
}

#[test]
fn kuzmin_norms() {
    let g = kuzmin_grid(1024);
    let rho = RadialProfile::from_fn(g.clone(), kuzmin_density).unwrap();
    assert!((lp_norm(&rho, 1.0).unwrap() - 1.0).abs() < 1e-4);
    // oracle: adaptive quadrature of the same interpolant, split at the nodes only every 37th node
    let p = 4.0 / 3.0;
    let nodes = g.nodes();
    let mut total = 0.0;
    let mut k = 0;
    while k < nodes.len() - 1 {
        let k2 = (k + 37).min(nodes.len() - 1);
        for j in k..k2 {
            total += adaptive(
                |s| s * rho.interpolate(s, 0.0).powf(p),
                nodes[j],
                nodes[j + 1],
                1e-13,
                0.0,
            )
            .unwrap();
        }
        k = k2;
    }
    let oracle = (2.0 * PI * total).powf(1.0 / p);
    assert!((lp_norm(&rho, p).unwrap() - oracle).abs() < 1e-8 * oracle);
}

#[test]
fn kuzmin_outer_energy_decays() {
    let g = kuzmin_grid(1024);
    let rho = RadialProfile::from_fn(g.clone(), kuzmin_density).unwrap();
    let u = potential_from_density(&rho).unwrap();
    let rep = outer_potential_energy(&rho, &u, &[4.0, 8.0, 16.0, 32.0], 1.0).unwrap();
    let slope = rep.decay_exponent.unwrap();
    assert!(slope <= -0.5, "slope {slope}");
    // doubling ρ quadruples −∫ρU
    let rho2 = rho.map(|v| 2.0 * v).unwrap();
    let u2 = potential_from_density(&rho2).unwrap();
    let rep2 = outer_potential_energy(&rho2, &u2, &[4.0], 1.0).unwrap();
    assert!((rep2.outer_energy[0] - 4.0 * rep.outer_energy[0]).abs() < 1e-12 * rep2.outer_energy[0]);
}
