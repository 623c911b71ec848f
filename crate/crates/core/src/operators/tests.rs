use super::*;
use crate::geometry::pt;
use crate::metric::MetricTag;
use crate::quadrature::{build_boundary_grid, build_interior_grid};
use crate::scalar::hdot;

fn c(re: f64, im: f64) -> Complex<f64> {
    Complex::new(re, im)
}

fn random_vec(n: usize, seed: u64) -> Vec<Complex<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

fn inner(a: &[Complex<f64>], b: &[Complex<f64>], w: &[f64]) -> Complex<f64> {
    a.iter().zip(b).zip(w).map(|((x, y), m)| x * y.conj() * m).sum()
}

#[test]
fn disk_c_sharp_is_the_szego_kernel() {
    let d = DomainModel::<f64>::unit_ball(1).unwrap();
    let g = build_boundary_grid(&d, 64).unwrap();
    let k = build_c_sharp(&d, &g).unwrap();
    for (i, j) in [(0, 5), (7, 3), (20, 63)] {
        let (z, w) = (g.nodes[i][0], g.nodes[j][0]);
        let want = c(1.0, 0.0) / (c(1.0, 0.0) - z * w.conj());
        assert!((k.kernel(i, j) - want).norm() < 1e-12);
        // With λ = dθ/2π this is the Szegő kernel against dθ.
        let dtheta = std::f64::consts::TAU / 64.0;
        assert!((k.offdiag[(i, j)] - want * dtheta / std::f64::consts::TAU).norm() < 1e-14);
    }
    for kk in 0..=8u32 {
        let f = sample(&g, monomial([kk, 0]));
        assert!(relative_residual(&k.apply(&f), &f, &g.weights) < 1e-12, "k = {kk}");
        let fb: Vec<_> = f.iter().map(|x| x.conj()).collect();
        if kk > 0 {
            let out = k.apply(&fb);
            assert!(out.iter().all(|x| x.norm() < 1e-12), "conj k = {kk}");
        }
    }
}

#[test]
fn ball_cauchy_fantappie_equals_c_sharp() {
    for n in 1..=2 {
        let d = DomainModel::<f64>::unit_ball(n).unwrap();
        let g = build_boundary_grid(&d, 16).unwrap();
        let c1 = build_cauchy_fantappie(&d, &g).unwrap();
        let cs = build_c_sharp(&d, &g).unwrap();
        let r = remainder_bound_check(&c1, &cs, &d, &g).unwrap();
        assert!(r.degenerate_zero, "n = {n}: {r:?}");
        assert!(r.max_abs < 1e-10);
        let lam = g.lambda().unwrap()[0];
        let want = if n == 1 {
            1.0 / std::f64::consts::TAU
        } else {
            0.5 / std::f64::consts::PI.powi(2)
        };
        assert!((lam - want).abs() < 1e-12);
    }
}

#[test]
fn perturbed_disk_cauchy_rule_is_spectral() {
    let d = DomainModel::<f64>::perturbed_ball(1, 0.05, 3, 0.5).unwrap();
    let g = build_boundary_grid(&d, 256).unwrap();
    let c1 = build_cauchy_fantappie(&d, &g).unwrap();
    assert_eq!(c1.diagonal, DiagonalPolicy::SubtractedSpectral);
    for kk in 0..=6u32 {
        let f = sample(&g, monomial([kk, 0]));
        let r = relative_residual(&c1.apply(&f), &f, &g.weights);
        assert!(r < 1e-9, "k = {kk}: {r}");
    }
    let f = sample(&g, |p| (p[0] * 0.7).exp());
    assert!(relative_residual(&c1.apply(&f), &f, &g.weights) < 1e-9);
}

#[test]
fn perturbed_ball_cauchy_fantappie_reproduces_and_improves() {
    let d = DomainModel::<f64>::perturbed_ball(2, 0.05, 3, 0.5).unwrap();
    let mut prev = f64::INFINITY;
    for npd in [16, 24, 32] {
        let g = build_boundary_grid(&d, npd).unwrap();
        let c1 = build_cauchy_fantappie(&d, &g).unwrap();
        let one = vec![c(1.0, 0.0); g.len()];
        assert!(relative_residual(&c1.apply(&one), &one, &g.weights) < 1e-12);
        let f = sample(&g, monomial([1, 1]));
        let r = relative_residual(&c1.apply(&f), &f, &g.weights);
        assert!(r < prev, "{npd}: {r} !< {prev}");
        prev = r;
    }
    assert!(prev < 0.4, "{prev}");
}

#[test]
fn adjoint_identities() {
    let d = DomainModel::<f64>::ellipsoid(&[1.0, 2.0]).unwrap();
    let g = build_boundary_grid(&d, 16).unwrap();
    let k = build_c_sharp(&d, &g).unwrap();
    let ks = k.adjoint();
    let f = random_vec(g.len(), 1);
    let h = random_vec(g.len(), 2);
    let lhs = inner(&k.apply(&f), &h, &g.weights);
    let rhs = inner(&f, &ks.apply(&h), &g.weights);
    assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));
    let kss = ks.adjoint();
    for i in 0..g.len() {
        for j in 0..g.len() {
            assert!((kss.entry(i, j) - k.entry(i, j)).norm() < 1e-12);
        }
    }
    // iA is self-adjoint for the μ inner product.
    let a = k.skew();
    let lhs = inner(&a.apply(&f), &h, &g.weights);
    let rhs = inner(&f, &a.apply(&h), &g.weights);
    assert!((lhs + rhs).norm() < 1e-10);
    assert!(a.max_abs() > 1e-6, "ellipsoid skew part is not zero");
    // Plain conjugate transpose agrees with the dense matrix.
    let dense = k.to_dense();
    let x = dense.matvec_h(&f);
    let y = k.apply_h(&f);
    assert!(x.iter().zip(&y).all(|(u, v)| (u - v).norm() < 1e-12));
}

#[test]
fn disk_c_sharp_is_self_adjoint_including_corrections() {
    let d = DomainModel::<f64>::unit_ball(1).unwrap();
    let g = build_boundary_grid(&d, 128).unwrap();
    let k = build_c_sharp(&d, &g).unwrap();
    let a = k.skew();
    assert!(a.max_abs() < 1e-12, "{}", a.max_abs());
    let ks = k.adjoint();
    for (i, j) in [(0, 1), (5, 77), (100, 3)] {
        assert!((ks.entry(i, j) - k.entry(i, j)).norm() < 1e-14);
    }
}

#[test]
fn bergman_main_closed_forms() {
    let disk = DomainModel::<f64>::unit_ball(1).unwrap();
    let ball = DomainModel::<f64>::unit_ball(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let mut p = || {
            let r: f64 = 0.95 * rng.gen::<f64>().sqrt();
            let a: f64 = rng.gen_range(0.0..6.3);
            let b: f64 = rng.gen_range(0.0..6.3);
            let s: f64 = rng.gen::<f64>();
            (r, a, b, s)
        };
        let (r1, a1, _, _) = p();
        let (r2, a2, _, _) = p();
        let z: Pt<f64> = pt((r1 * a1.cos(), r1 * a1.sin()), (0.0, 0.0));
        let w: Pt<f64> = pt((r2 * a2.cos(), r2 * a2.sin()), (0.0, 0.0));
        let want = 1.0 / (std::f64::consts::PI * (c(1.0, 0.0) - z[0] * w[0].conj()).powi(2));
        assert!((bergman_main_kernel(&disk, &w, &z) - want).norm() < 1e-10 * want.norm());

        let (r, a, b, s) = p();
        let (q, e, f, t) = p();
        let z: Pt<f64> = [
            Complex::from_polar(r * s.sqrt(), a),
            Complex::from_polar(r * (1.0 - s).sqrt(), b),
        ];
        let w: Pt<f64> = [
            Complex::from_polar(q * t.sqrt(), e),
            Complex::from_polar(q * (1.0 - t).sqrt(), f),
        ];
        let g = c(1.0, 0.0) - hdot(&z, &w, 2);
        let want = 2.0 / (std::f64::consts::PI.powi(2) * g.powi(3));
        let k = bergman_main_kernel(&ball, &w, &z);
        assert!((k - want).norm() < 1e-10 * want.norm());
        // Ratio K₁·(1 − ⟨z,w⟩)³ is constant.
        assert!((k * g.powi(3) - c(2.0 / std::f64::consts::PI.powi(2), 0.0)).norm() < 1e-10);
    }
}

#[test]
fn bergman_numerator_matches_determinant_form() {
    for d in [
        DomainModel::<f64>::perturbed_ball(1, 0.05, 3, 0.5).unwrap(),
        DomainModel::<f64>::perturbed_ball(2, 0.05, 3, 0.5).unwrap(),
        DomainModel::<f64>::ellipsoid(&[1.0, 2.0]).unwrap(),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let z = crate::geometry::random_interior_point(&d, &mut rng);
            let w = crate::geometry::random_interior_point(&d, &mut rng);
            let a = bergman_main_kernel(&d, &w, &z);
            let b = bergman_main_det_form(&d, &w, &z);
            assert!((a - b).norm() <= 1e-9 * a.norm().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn disk_bergman_reproduces_and_gamma_dominates() {
    let d = DomainModel::<f64>::unit_ball(1).unwrap();
    let g = build_interior_grid(&d, 64, 10).unwrap();
    let t1 = build_bergman_main(&d, &g).unwrap();
    let one = vec![c(1.0, 0.0); g.len()];
    assert!(relative_residual(&t1.apply(&one), &one, &g.weights) < 1e-2);
    let f = sample(&g, monomial([3, 0]));
    assert!(relative_residual(&t1.apply(&f), &f, &g.weights) < 5e-2);
    let a = t1.skew();
    assert!(a.max_abs() < 1e-12);

    let gam = build_gamma(&d, &g).unwrap();
    let bg = build_boundary_grid(&d, 256).unwrap();
    let m = Metric::new(&d, MetricTag::InteriorMcNeal);
    let pts = m.prepare_all(&g.nodes);
    let bp = m.prepare_all(&bg.nodes);
    let delta = crate::metric::dists_to_boundary(&m, &pts, &bp);
    let chk = gamma_check(&t1, &gam, &d, &g, &delta).unwrap();
    // On the disk |K₁| = Γ/π exactly.
    assert!((chk.domination_constant - 1.0 / std::f64::consts::PI).abs() < 1e-10);
    assert!((chk.symmetry_range.0 - 1.0).abs() < 1e-10 && (chk.symmetry_range.1 - 1.0).abs() < 1e-10);
    assert!(chk.boundary_size.is_finite() && chk.distance_size.is_finite());
}

#[test]
fn lazy_c_sharp_matches_dense() {
    let d = DomainModel::<f64>::unit_ball(2).unwrap();
    let g = build_boundary_grid(&d, 16).unwrap();
    let dense = build_c_sharp(&d, &g).unwrap();
    let lazy = LazyCSharp::new(&d, &g).unwrap();
    let f = random_vec(g.len(), 5);
    let a = dense.apply(&f);
    let b = lazy.apply(&f);
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).norm() < 1e-12));
    let a = dense.apply_h(&f);
    let b = lazy.apply_h(&f);
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).norm() < 1e-12));
    assert!(lazy.skew_max() < 1e-12);
}

#[test]
fn constant_kernel_has_zero_increments() {
    let d = DomainModel::<f64>::unit_ball(1).unwrap();
    let g = build_boundary_grid(&d, 128).unwrap();
    let m = Metric::new(&d, MetricTag::BoundarySzego);
    let r = smoothness_estimate_check(|_, _| c(2.0, 0.0), &m, &g.nodes, Vary::Source, 1.0, 2.0, 2.0, 200, 1).unwrap();
    assert_eq!(r.sup_ratio, 0.0);
    assert!(r.fitted_exponent.is_none());
}

#[test]
fn disk_c_sharp_smoothness_exponent() {
    let d = DomainModel::<f64>::unit_ball(1).unwrap();
    let g = build_boundary_grid(&d, 512).unwrap();
    let k = build_c_sharp(&d, &g).unwrap();
    let m = Metric::new(&d, MetricTag::BoundarySzego);
    let r = smoothness_estimate_check(|i, j| k.kernel(i, j), &m, &g.nodes, Vary::Source, 1.0, 2.0, 2.0, 400, 7)
        .unwrap();
    assert!(r.fitted_exponent.unwrap() >= 0.9, "{r:?}");
}

#[test]
fn dump_format() {
    let d = DomainModel::<f64>::unit_ball(1).unwrap();
    let g = build_boundary_grid(&d, 16).unwrap();
    let k = build_c_sharp(&d, &g).unwrap();
    let mut buf = Vec::new();
    k.dump(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 256);
    let parts: Vec<f64> = rows[17].split_whitespace().map(|x| x.parse().unwrap()).collect();
    assert_eq!((parts[0], parts[1]), (1.0, 1.0));
    let e = k.entry(1, 1);
    assert_eq!((parts[2], parts[3]), (e.re, e.im));
}
