//! The invariant suite at small resolutions, grouped by module.

use std::time::Instant;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::{check_invariants, random_boundary_point, verify_coercivity, SpecialFrame};
use crate::kerzman_stein::{neumann_check, reconstruct_projection, skew_part, ResolventMethod};
use crate::metric::{quasi_triangle, Metric, MetricTag};
use crate::operators::{
    build_bergman_main, build_c_sharp, build_cauchy_fantappie, monomial, relative_residual, sample, KernelMatrix,
    LinearOperator,
};
use crate::quadrature::{build_boundary_grid, build_interior_grid, Measure};
use crate::weights::{make_weight, BallFamily, BallMode, WeightFamily};
use crate::{Domain, C64};

/// Test hooks that break one ingredient on purpose.
#[derive(Clone, Copy, Debug, Default)]
pub struct Faults {
    /// Scales every Leray–Levi density by 1.05 before it is checked.
    pub corrupt_lambda: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantOutcome {
    pub module: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub outcomes: Vec<InvariantOutcome>,
    pub runtime_s: f64,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn first_failure(&self) -> Option<&InvariantOutcome> {
        self.outcomes.iter().find(|o| !o.passed)
    }

    /// `(module, passed, total)` in suite order.
    pub fn counts(&self) -> Vec<(&'static str, usize, usize)> {
        let mut out: Vec<(&'static str, usize, usize)> = Vec::new();
        for o in &self.outcomes {
            match out.iter_mut().find(|c| c.0 == o.module) {
                Some(c) => {
                    c.1 += o.passed as usize;
                    c.2 += 1;
                }
                None => out.push((o.module, o.passed as usize, 1)),
            }
        }
        out
    }
}

struct Suite {
    module: &'static str,
    out: Vec<InvariantOutcome>,
}

impl Suite {
    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.out.push(InvariantOutcome {
            module: self.module,
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    /// Runs `f`; an error counts as a failed invariant.
    fn guard(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<()>) {
        if let Err(e) = f(self) {
            self.check(name, false, e.to_string());
        }
    }
}

fn test_domains() -> Result<Vec<Domain>> {
    Ok(vec![
        Domain::unit_ball(1)?,
        Domain::unit_ball(2)?,
        Domain::ellipsoid(&[1.0, 2.0])?,
        Domain::perturbed_ball(1, 0.05, 3, 0.5)?,
        Domain::perturbed_ball(2, 0.05, 3, 0.5)?,
    ])
}

/// Boundary resolution used by the suite for a given dimension.
fn small(n: usize) -> usize {
    if n == 1 {
        64
    } else {
        16
    }
}

pub fn run(seed: u64, faults: Faults) -> Result<Summary> {
    let start = Instant::now();
    let domains = test_domains()?;
    let mut outcomes = Vec::new();
    for (module, f) in [
        ("domain_geometry", geometry as fn(&[Domain], u64, Faults, &mut Suite)),
        ("quasi_metric", quasi_metric),
        ("measures_quadrature", quadrature),
        ("weights", weights),
        ("operators", operators),
        ("kerzman_stein", kerzman_stein),
    ] {
        let mut s = Suite { module, out: Vec::new() };
        f(&domains, seed, faults, &mut s);
        outcomes.extend(s.out);
    }
    Ok(Summary {
        outcomes,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

fn geometry(domains: &[Domain], seed: u64, _: Faults, s: &mut Suite) {
    for d in domains {
        let r = check_invariants(d, 500, seed);
        s.check(format!("defining function ({})", d.describe()), r.ok(), format!("{r:?}"));
        match verify_coercivity(d, 500, seed) {
            Ok(c) => s.check(
                format!("coercivity ({})", d.describe()),
                c.kappa_boundary > 0.0 && c.kappa_interior > 0.0,
                format!("κ_b = {:.3e}, κ_i = {:.3e}", c.kappa_boundary, c.kappa_interior),
            ),
            Err(e) => s.check(format!("coercivity ({})", d.describe()), false, e.to_string()),
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut gen, mut diag, mut frame) = (0.0f64, 0.0f64, 0.0f64);
        let mut sym = 0.0f64;
        for _ in 0..200 {
            let w = random_boundary_point(d, &mut rng);
            let z = random_boundary_point(d, &mut rng);
            let jw = d.jet(&w);
            let f = d.form_jet(&w, &jw, &z);
            let pair: C64 = (0..d.n()).map(|m| f.g_coef[m] * (w[m] - z[m])).sum();
            gen = gen.max((pair - f.g).norm());
            diag = diag.max(d.g_boundary(&w, &w).norm());
            sym = sym.max((d.g_boundary(&w, &z) - d.g_boundary(&z, &w).conj()).norm());
            if let Ok(fr) = SpecialFrame::new(d, &w) {
                let back = fr.inverse(&fr.forward(&z));
                frame = frame.max((0..d.n()).map(|m| (back[m] - z[m]).norm()).fold(0.0, f64::max));
            }
        }
        let label = d.describe();
        s.check(format!("generating identity ({label})"), gen <= 1e-10, format!("{gen:.2e}"));
        s.check(format!("g(w,w) = 0 ({label})"), diag <= 1e-12, format!("{diag:.2e}"));
        s.check(format!("frame round trip ({label})"), frame <= 1e-12, format!("{frame:.2e}"));
        if matches!(d.kind(), crate::DomainKind::UnitBall) {
            s.check(format!("exact Hermitian symmetry ({label})"), sym <= 1e-14, format!("{sym:.2e}"));
        }
    }
}

fn quasi_metric(domains: &[Domain], seed: u64, _: Faults, s: &mut Suite) {
    for d in domains {
        let label = d.describe();
        s.guard("quasi-metric", |s| {
            let g = build_boundary_grid(d, small(d.n()))?;
            let m = Metric::new(d, MetricTag::BoundarySzego);
            let prep = m.prepare_all(&g.nodes);
            let mut asym = 0.0f64;
            let mut zero = true;
            for i in (0..g.len()).step_by(7) {
                for j in (0..g.len()).step_by(5) {
                    let (a, b) = (m.between(&prep[i], &prep[j]), m.between(&prep[j], &prep[i]));
                    asym = asym.max((a - b).abs());
                    zero &= (a == 0.0) == (i == j);
                }
            }
            s.check(format!("symmetry ({label})"), asym == 0.0, format!("{asym:.2e}"));
            s.check(format!("separation of points ({label})"), zero, "");
            let a0 = quasi_triangle(&m, &prep, 2000, seed);
            s.check(format!("quasi-triangle constant finite ({label})"), a0.is_finite() && a0 >= 1.0, format!("A0 = {a0:.3}"));
            Ok(())
        });
    }
}

fn quadrature(domains: &[Domain], _: u64, faults: Faults, s: &mut Suite) {
    let pi = std::f64::consts::PI;
    for d in domains {
        let label = d.describe();
        s.guard("quadrature", |s| {
            let g = build_boundary_grid(d, small(d.n()))?;
            let scale = if faults.corrupt_lambda { 1.05 } else { 1.0 };
            let lam: Vec<f64> = g.lambda()?.iter().map(|l| l * scale).collect();
            s.check(
                format!("Λ > 0 ({label})"),
                lam.iter().all(|l| *l > 0.0),
                format!("min Λ = {:.3e}", lam.iter().copied().fold(f64::INFINITY, f64::min)),
            );
            if matches!(d.kind(), crate::DomainKind::UnitBall) {
                // Λ is constant on spheres and the Leray–Levi measure of the
                // sphere is 1.
                let mass: f64 = lam.iter().zip(&g.weights).map(|(l, w)| l * w).sum();
                s.check(format!("leray_levi mass ({label})"), (mass - 1.0).abs() <= 1e-3, format!("{mass:.6}"));
                let area = if d.n() == 1 { 2.0 * pi } else { 2.0 * pi * pi };
                let tot = g.total_measure();
                s.check(format!("surface area ({label})"), (tot / area - 1.0).abs() <= 5e-3, format!("{tot:.6}"));
            }
            let f: Vec<C64> = g.nodes.iter().map(|p| p[0]).collect();
            let h: Vec<C64> = g.nodes.iter().map(|p| p[0].conj() * 2.0).collect();
            let sum: Vec<C64> = f.iter().zip(&h).map(|(a, b)| a * 3.0 + b).collect();
            let lhs = g.integrate(&sum, Measure::Lebesgue)?;
            let rhs = g.integrate(&f, Measure::Lebesgue)? * 3.0 + g.integrate(&h, Measure::Lebesgue)?;
            s.check(format!("integration is linear ({label})"), (lhs - rhs).norm() <= 1e-12, "");
            Ok(())
        });
    }
    s.guard("interior volume", |s| {
        let d = &domains[0];
        let g = build_interior_grid(d, 32, 8)?;
        let v = g.total_measure();
        s.check("disk area from interior grid", (v / pi - 1.0).abs() <= 1e-2, format!("{v:.6}"));
        Ok(())
    });
}

fn weights(domains: &[Domain], _: u64, _: Faults, s: &mut Suite) {
    let d = &domains[0];
    s.guard("weights", |s| {
        let g = build_boundary_grid(d, 64)?;
        let fam = BallFamily::new(Metric::new(d, MetricTag::BoundarySzego), &g, BallMode::Boundary, None, None)?;
        let ones = vec![1.0; g.len()];
        let (c, _) = fam.muckenhoupt(&ones, 2.0)?;
        s.check("constant weight has [σ]_2 = 1", (c - 1.0).abs() <= 1e-12, format!("{c}"));
        let w = make_weight(
            d,
            &g,
            &WeightFamily::BoundaryPower {
                zeta0: [(1.0, 0.0), (0.0, 0.0)],
                t: 0.7,
            },
            None,
        )?;
        for p in [1.5, 3.0] {
            let (a, _) = fam.muckenhoupt(&w.values, p)?;
            let (b, _) = fam.muckenhoupt(&w.dual(p), p / (p - 1.0))?;
            let dual = b.powf(p - 1.0);
            s.check(
                format!("duality at p = {p}"),
                (a / dual - 1.0).abs() <= 1e-10,
                format!("{a:.6e} vs {dual:.6e}"),
            );
            s.check(format!("[σ]_{p} ≥ 1"), a >= 1.0, format!("{a:.4}"));
        }
        let f: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let h: Vec<f64> = f.iter().enumerate().map(|(i, v)| v + (i % 3) as f64 * 0.1).collect();
        let (mf, mh) = (fam.maximal_function(&f)?, fam.maximal_function(&h)?);
        s.check(
            "maximal function is monotone",
            mf.iter().zip(&mh).all(|(a, b)| *a <= *b + 1e-15),
            "",
        );
        Ok(())
    });
}

/// `max |μ_i A_ij + conj(μ_j A_ji)|` relative to `max |μ_i K_ij|`: zero
/// when `iA` is Hermitian for the weighted pairing.
fn hermitian_defect(k: &KernelMatrix<f64>, a: &KernelMatrix<f64>) -> f64 {
    let n = a.mu.len();
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for i in 0..n {
        for j in 0..n {
            let x = a.entry(i, j) * a.mu[i];
            let y = a.entry(j, i) * a.mu[j];
            num = num.max((x + y.conj()).norm());
            den = den.max((k.entry(i, j) * k.mu[i]).norm());
        }
    }
    num / den
}

fn random_vector(n: usize, seed: u64) -> Vec<C64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn inner(f: &[C64], h: &[C64], mu: &[f64]) -> C64 {
    f.iter().zip(h).zip(mu).map(|((a, b), w)| a * b.conj() * w).sum()
}

fn operators(domains: &[Domain], seed: u64, _: Faults, s: &mut Suite) {
    for d in domains {
        let label = d.describe();
        s.guard("operators", |s| {
            let g = build_boundary_grid(d, small(d.n()))?;
            let k = build_c_sharp(d, &g)?;
            let a = k.skew();
            let hd = hermitian_defect(&k, &a);
            s.check(format!("iA Hermitian ({label})"), hd <= 1e-10, format!("{hd:.2e}"));
            if matches!(d.kind(), crate::DomainKind::UnitBall) {
                let m = a.max_abs();
                s.check(format!("A vanishes on the ball ({label})"), m <= 1e-9, format!("{m:.2e}"));
            }
            let f = random_vector(g.len(), seed);
            let h = random_vector(g.len(), seed + 1);
            let kf = k.apply(&f);
            let lhs = inner(&kf, &h, &g.weights);
            let rhs = inner(&f, &k.adjoint().apply(&h), &g.weights);
            let scale = inner(&kf, &kf, &g.weights).norm().sqrt() * inner(&h, &h, &g.weights).norm().sqrt();
            let e = (lhs - rhs).norm() / scale;
            s.check(format!("adjoint identity ({label})"), e <= 1e-10, format!("{e:.2e}"));
            Ok(())
        });
    }
    s.guard("reproduction trend", |s| {
        let d = &domains[3];
        let mut prev = f64::INFINITY;
        let mut ok = true;
        let mut shown = Vec::new();
        for n in [16, 24, 32] {
            let g = build_boundary_grid(d, n)?;
            let k = build_cauchy_fantappie(d, &g)?;
            let r = (0..=4)
                .map(|a| {
                    let f = sample(&g, monomial([a, 0]));
                    relative_residual(&k.apply(&f), &f, &g.weights)
                })
                .fold(0.0, f64::max);
            ok &= r < prev || r < 1e-12;
            prev = r;
            shown.push(format!("{r:.2e}"));
        }
        s.check(
            format!("C₁ reproduction residual decreases ({})", d.describe()),
            ok,
            shown.join(", "),
        );
        Ok(())
    });
    s.guard("interior", |s| {
        let d = &domains[0];
        let g = build_interior_grid(d, 16, 8)?;
        let k = build_bergman_main(d, &g)?;
        let m = k.skew().max_abs();
        s.check("A vanishes on the disk interior", m <= 1e-9, format!("{m:.2e}"));
        Ok(())
    });
}

fn kerzman_stein(domains: &[Domain], seed: u64, _: Faults, s: &mut Suite) {
    s.guard("disk consistency", |s| {
        let d = &domains[0];
        let g = build_boundary_grid(d, 65)?;
        let k = build_c_sharp(d, &g)?;
        let sk = skew_part(&k, MetricTag::BoundarySzego, 1)?;
        let (p, _) = reconstruct_projection(&k, &sk.a, ResolventMethod::Direct, seed)?;
        let dense = p.to_dense();
        let mut e = 0.0f64;
        for i in 0..g.len() {
            for j in 0..g.len() {
                e = e.max((dense[(i, j)] - k.entry(i, j)).norm());
            }
        }
        s.check("disk: reconstruction equals C♯", e <= 1e-8, format!("{e:.2e}"));
        Ok(())
    });
    for d in [&domains[0], &domains[3]] {
        let label = d.describe();
        s.guard("idempotence", |s| {
            let mut defects = Vec::new();
            for n in [33, 65, 129] {
                let g = build_boundary_grid(d, n)?;
                let k = build_cauchy_fantappie(d, &g)?;
                let sk = skew_part(&k, MetricTag::BoundarySzego, 1)?;
                let (_, rep) = reconstruct_projection(&k, &sk.a, ResolventMethod::Direct, seed)?;
                defects.push(rep.idempotence_defect);
            }
            let ok = defects.windows(2).all(|w| w[1] < w[0] || w[1] < 1e-12);
            let shown: Vec<String> = defects.iter().map(|v| format!("{v:.2e}")).collect();
            s.check(format!("idempotence trend ({label})"), ok, shown.join(", "));
            Ok(())
        });
    }
    for d in &domains[2..] {
        let label = d.describe();
        s.guard("neumann", |s| {
            let g = build_boundary_grid(d, small(d.n()))?;
            let k = build_c_sharp(d, &g)?;
            let sk = skew_part(&k, MetricTag::BoundarySzego, d.n())?;
            let b: Vec<C64> = g.nodes.iter().map(|p| p[0] + 1.0).collect();
            let chk = neumann_check(&sk.a, &b, 30, seed)?;
            s.check(
                format!("direct residual ({label})"),
                chk.direct_residual <= 1e-10,
                format!("{:.2e}", chk.direct_residual),
            );
            s.check(
                format!("Neumann bound ({label})"),
                chk.bound_holds != Some(false),
                format!("ν = {:.3e}", chk.nu),
            );
            Ok(())
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_suite_passes() {
        let s = run(1, Faults::default()).unwrap();
        let bad: Vec<_> = s.outcomes.iter().filter(|o| !o.passed).collect();
        assert!(bad.is_empty(), "{bad:#?}");
        assert_eq!(s.counts().len(), 6);
    }

    #[test]
    fn corrupted_lambda_is_named() {
        let s = run(1, Faults { corrupt_lambda: true }).unwrap();
        let f = s.first_failure().unwrap();
        assert!(f.name.contains("leray_levi"), "{f:?}");
        assert_eq!(f.module, "measures_quadrature");
    }
}
