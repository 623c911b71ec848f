use super::*;
use crate::operators::{build_c_sharp, relative_residual, sample};
use crate::quadrature::build_boundary_grid;

fn c(re: f64, im: f64) -> Complex<f64> {
    Complex::new(re, im)
}

fn disk(n: usize) -> (DomainModel<f64>, Grid<f64>) {
    let d = DomainModel::<f64>::unit_ball(1).unwrap();
    let g = build_boundary_grid(&d, n).unwrap();
    (d, g)
}

fn fourier(g: &Grid<f64>, k: i32) -> Vec<Complex<f64>> {
    sample(g, |p| {
        let t = p[0].arg();
        Complex::from_polar(1.0, k as f64 * t)
    })
}

#[test]
fn zero_skew_gives_identity_resolvent() {
    let (_, g) = disk(64);
    let z = CMatrix::<f64>::zeros(g.len(), g.len());
    let a = KernelMatrix::from_dense(&z, &g.weights).unwrap();
    let b = fourier(&g, 3);
    for m in [ResolventMethod::Direct, ResolventMethod::Neumann { max_terms: 4 }] {
        let (x, rep) = resolvent_solve(&a, &b, m).unwrap();
        assert!(x.iter().zip(&b).all(|(u, v)| (u - v).norm() < 1e-15));
        assert!(rep.residual < 1e-15);
    }
}

#[test]
fn disk_szego_reconstruction() {
    // Odd N: an even grid carries a k = N/2 mode that C♯ maps to one half.
    let (d, g) = disk(257);
    let k = build_c_sharp(&d, &g).unwrap();
    let s = skew_part(&k, MetricTag::BoundarySzego, 1).unwrap();
    assert!(s.a.max_abs() < 1e-9);
    let (p, rep) = reconstruct_projection(&k, &s.a, ResolventMethod::Direct, 1).unwrap();
    assert!(rep.skew_norm < 1e-9);
    for kk in 0..=16 {
        let f = fourier(&g, kk);
        assert!(relative_residual(&p.apply(&f), &f, &g.weights) < 1e-6, "k = {kk}");
    }
    for kk in 1..=8 {
        let f = fourier(&g, -kk);
        let out = p.apply(&f);
        let nrm: f64 = out.iter().zip(&g.weights).map(|(x, w)| x.norm_sqr() * w).sum::<f64>().sqrt();
        assert!(nrm < 1e-6, "k = -{kk}: {nrm}");
    }
    // With A = 0 the identity leaves C♯ unchanged.
    let dense = p.to_dense();
    for i in (0..g.len()).step_by(17) {
        for j in (0..g.len()).step_by(13) {
            assert!((dense[(i, j)] - k.entry(i, j)).norm() < 1e-8);
        }
    }
    assert!(rep.idempotence_defect < 1e-6, "{}", rep.idempotence_defect);
    assert!(rep.self_adjointness_defect < 1e-9);
    let ones = vec![1.0; g.len()];
    let nrm = weighted_operator_norm(&p, &g.weights, &g.nodes, &ones, 2.0, 3).unwrap();
    assert!((nrm.value - 1.0).abs() < 1e-6, "{}", nrm.value);
}

#[test]
fn synthetic_neumann_ratio() {
    // A = i·H with H Hermitian and spectrum in [−0.5, 0.5].
    let n = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let vals: Vec<_> = (0..n * n).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let raw = CMatrix::from_rows(n, n, vals);
    let h = raw.add(&raw.conj_transpose());
    let mu = vec![1.0; n];
    let hm = KernelMatrix::from_dense(&h, &mu).unwrap();
    let hn = operator_norm_l2(&hm, &mu, None, 1).unwrap().value;
    let a = CMatrix::from_fn(n, n, |i, j| h[(i, j)] * c(0.0, 0.5 / hn));
    let a = KernelMatrix::from_dense(&a, &mu).unwrap();
    let b: Vec<_> = (0..n).map(|i| c((i as f64).sin(), 1.0)).collect();
    let chk = neumann_check(&a, &b, 30, 2).unwrap();
    assert!((chk.nu - 0.5).abs() < 1e-6);
    assert_eq!(chk.bound_holds, Some(true));
    assert!(chk.direct_residual < 1e-12);
    let (_, inc) = neumann_partial_sums(&a, &b, 40);
    let ratio = (inc[40] / inc[20]).powf(1.0 / 20.0);
    assert!((ratio - 0.5).abs() < 0.02, "{ratio}");
}

#[test]
fn singular_resolvent_is_reported() {
    let n = 4;
    let mu = vec![1.0; n];
    let a = KernelMatrix::from_dense(&CMatrix::identity(n), &mu).unwrap();
    assert!(matches!(factor_resolvent(&a), Err(Error::Singular(_))));
}

#[test]
fn ellipsoid_skew_and_neumann_bound() {
    let d = DomainModel::<f64>::ellipsoid(&[1.0, 2.0]).unwrap();
    let g = build_boundary_grid(&d, 16).unwrap();
    let k = build_c_sharp(&d, &g).unwrap();
    let s = skew_part(&k, MetricTag::BoundarySzego, 2).unwrap();
    assert!(s.a.max_abs() > 1e-6);
    let size = skew_size_check(&s, &d, &g, None).unwrap();
    assert!(!size.decay.degenerate_zero);
    assert!(size.decay.sup_normalized.is_finite());
    let b = vec![c(1.0, 0.0); g.len()];
    let chk = neumann_check(&s.a, &b, 30, 5).unwrap();
    if chk.nu < 1.0 {
        assert_eq!(chk.bound_holds, Some(true), "{chk:?}");
    }
}

#[test]
fn improvement_and_range() {
    let (_, g) = disk(64);
    let z = KernelMatrix::from_dense(&CMatrix::<f64>::zeros(g.len(), g.len()), &g.weights).unwrap();
    let r = improvement_check(&z, &g.weights, &g.nodes, MetricTag::BoundarySzego, 1, 1.0, 0.5, 20, 1).unwrap();
    assert_eq!(r.max_ratio, 0.0);
    assert!(improvement_check(&z, &g.weights, &g.nodes, MetricTag::BoundarySzego, 1, 1.0, 1.0, 20, 1).is_err());
    assert!(improvement_check(&z, &g.weights, &g.nodes, MetricTag::InteriorMcNeal, 2, 1.0, 0.25, 20, 1).is_err());
}

#[test]
fn double_norm_matches_brute_force() {
    let n = 30;
    let mu: Vec<f64> = (0..n).map(|i| 0.1 + 0.01 * i as f64).collect();
    let sigma: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (i as f64).cos()).collect();
    let m = CMatrix::from_fn(n, n, |i, j| c((i + 2 * j) as f64 * 0.01, 0.3) * mu[j]);
    let k = KernelMatrix::from_dense(&m, &mu).unwrap();
    let p = 3.0;
    let q = 1.5;
    let mut brute = 0.0;
    for i in 0..n {
        let mut inner = 0.0;
        for j in 0..n {
            if j != i {
                let kij = c((i + 2 * j) as f64 * 0.01, 0.3).norm() / sigma[j];
                inner += kij.powf(q) * sigma[j] * mu[j];
            }
        }
        brute += inner.powf(p / q) * sigma[i] * mu[i];
    }
    let v = double_norm(&k, &sigma, p);
    assert!((v - brute).abs() < 1e-12 * brute);
}

#[test]
fn truncation_at_full_scale_is_identity_split() {
    let d = DomainModel::<f64>::perturbed_ball(1, 0.05, 3, 0.5).unwrap();
    let g = build_boundary_grid(&d, 64).unwrap();
    let k = build_c_sharp(&d, &g).unwrap();
    let rows = truncation_split(&k, &d, &g, &[10.0], None, 1).unwrap();
    let full = operator_norm_l2(&k.skew(), &k.mu, None, 1).unwrap().value;
    assert!((rows[0].skew_near_norm - full).abs() < 1e-7 * full.max(1e-12));
    assert_eq!(rows[0].far_sup_scaled, 0.0);
}

#[test]
fn symmetry_defect_examples() {
    let ball = DomainModel::<f64>::unit_ball(2).unwrap();
    let r = symmetry_defect_fit(&ball, 200, 1).unwrap();
    assert!(r.exact_symmetry && r.slope.is_none());
    let pb = DomainModel::<f64>::perturbed_ball(2, 0.05, 3, 0.5).unwrap();
    let a = symmetry_defect_fit(&pb, 2000, 1).unwrap();
    let b = symmetry_defect_fit(&pb, 2000, 2).unwrap();
    let (sa, sb) = (a.slope.unwrap(), b.slope.unwrap());
    assert!(sa >= 2.7, "{sa}");
    assert!((sa - sb).abs() <= 0.1, "{sa} vs {sb}");
}

#[test]
fn even_grid_nyquist_mode_is_halved() {
    let (d, g) = disk(64);
    let k = build_c_sharp(&d, &g).unwrap();
    let f = fourier(&g, 32);
    let out = k.apply(&f);
    assert!(out.iter().zip(&f).all(|(a, b)| (a - b * 0.5).norm() < 1e-10));
}

#[test]
fn skew_view_matches_stored_skew() {
    let d = DomainModel::<f64>::perturbed_ball(1, 0.05, 3, 0.5).unwrap();
    let g = build_boundary_grid(&d, 48).unwrap();
    let k = build_c_sharp(&d, &g).unwrap();
    let a = k.skew();
    let v = SkewView { k: &k };
    let f = fourier(&g, 2);
    let (x, y) = (a.apply(&f), v.apply(&f));
    assert!(x.iter().zip(&y).all(|(p, q)| (p - q).norm() < 1e-12));
    let (x, y) = (a.apply_h(&f), v.apply_h(&f));
    assert!(x.iter().zip(&y).all(|(p, q)| (p - q).norm() < 1e-12));
    assert!((v.max_abs() - a.max_abs()).abs() < 1e-12);
    let nu = operator_norm_l2(&a, &k.mu, None, 1).unwrap().value;
    assert!(v.hilbert_schmidt() >= nu * (1.0 - 1e-9));
}
