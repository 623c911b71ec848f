//! Surface and Leray–Levi measures against closed forms.

use std::f64::consts::PI;

use kslab::experiments::DomainSpec;
use kslab::quadrature::{build_boundary_grid, leray_levi_density};

fn domain(spec: &str) -> kslab::Domain {
    DomainSpec::parse(spec).unwrap().build().unwrap()
}

/// `{a₁|z₁|² + a₂|z₂|² = 1}` is a torus fibration over the quarter ellipse
/// `a₁r₁² + a₂r₂² = 1`, so its area is `∫ (2πr₁)(2πr₂) ds`.
fn toric_area(a1: f64, a2: f64) -> f64 {
    let m = 200_000;
    let h = 0.5 * PI / m as f64;
    (0..m)
        .map(|k| {
            let th = (k as f64 + 0.5) * h;
            let (r1, r2) = (th.cos() / a1.sqrt(), th.sin() / a2.sqrt());
            let ds = (th.sin().powi(2) / a1 + th.cos().powi(2) / a2).sqrt();
            4.0 * PI * PI * r1 * r2 * ds * h
        })
        .sum()
}

fn total(w: &[f64]) -> f64 {
    w.iter().sum()
}

#[test]
fn sphere_areas() {
    let g = build_boundary_grid(&domain("ball 1"), 256).unwrap();
    assert!((total(&g.weights) - 2.0 * PI).abs() < 1e-12);
    let g = build_boundary_grid(&domain("ball 2"), 24).unwrap();
    let area = total(&g.weights);
    assert!((area / (2.0 * PI * PI) - 1.0).abs() < 1e-10, "{area}");
}

/// Errors at `npd = 16, 32`; the product rule converges at second order.
fn second_order(errs: &[f64], last: f64) {
    assert!(errs[1] < last, "{errs:?}");
    assert!(errs[1] / errs[0] < 0.3, "{errs:?}");
}

#[test]
fn ellipsoid_area_matches_toric_integral() {
    for (spec, a1, a2, last) in [("ellipsoid 1 2", 1.0, 2.0, 1e-3), ("ellipsoid 2 0.5", 2.0, 0.5, 1e-2)] {
        let exact = toric_area(a1, a2);
        let errs: Vec<f64> = [16, 32]
            .iter()
            .map(|&npd| {
                let g = build_boundary_grid(&domain(spec), npd).unwrap();
                (total(&g.weights) / exact - 1.0).abs()
            })
            .collect();
        second_order(&errs, last);
    }
}

#[test]
fn ellipse_perimeter() {
    // {2|z|² = 1}: a circle of radius 1/√2.
    let g = build_boundary_grid(&domain("ellipsoid 2"), 128).unwrap();
    assert!((total(&g.weights) - 2.0 * PI / 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn leray_levi_on_the_sphere_is_uniform() {
    let d = domain("ball 2");
    let g = build_boundary_grid(&d, 16).unwrap();
    for w in g.nodes.iter().step_by(17) {
        let l = leray_levi_density(&d, w).unwrap();
        assert!((l - 1.0 / (2.0 * PI * PI)).abs() < 1e-14, "{l}");
    }
    let d = domain("ball 1");
    let g = build_boundary_grid(&d, 64).unwrap();
    for w in &g.nodes {
        assert!((leray_levi_density(&d, w).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-14);
    }
}

/// By Stokes the Leray–Levi mass of `{Σ aⱼ|zⱼ|² = 1}` is independent of
/// the coefficients, so it is one on every ellipsoid.
#[test]
fn leray_levi_mass_is_one_on_ellipsoids() {
    let mass = |spec: &str, npd: usize| -> f64 {
        let g = build_boundary_grid(&domain(spec), npd).unwrap();
        let lam = g.leray_levi.as_ref().unwrap();
        lam.iter().zip(&g.weights).map(|(l, w)| l * w).sum()
    };
    assert!((mass("ellipsoid 3", 64) - 1.0).abs() < 1e-14);
    for (spec, last) in [("ellipsoid 1 2", 3e-3), ("ellipsoid 2 0.5", 2e-2)] {
        let errs: Vec<f64> = [16, 32].iter().map(|&npd| (mass(spec, npd) - 1.0).abs()).collect();
        second_order(&errs, last);
    }
}

#[test]
fn off_boundary_points_are_rejected() {
    let d = domain("ball 2");
    let z = [num_complex::Complex64::new(0.5, 0.0), num_complex::Complex64::new(0.0, 0.0)];
    assert!(leray_levi_density(&d, &z).is_err());
}
