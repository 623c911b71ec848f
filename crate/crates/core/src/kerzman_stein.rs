//! Skew part `A = K* − K`, the resolvent `(I − A)⁻¹`, and projections
//! rebuilt as `P = K(I − A)⁻¹`, with the norm and compactness diagnostics
//! that go with them.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::loglog_fit;
use crate::geometry::{random_boundary_point, smoothstep_cutoff, DomainModel};
use crate::linalg::{largest_singular_value, CMatrix, Lu};
use crate::metric::{Metric, MetricTag};
use crate::operators::{decay_check, pair_scan, scan_rows, DecayCheck, KernelMatrix, LinearOperator, OperatorKind};
use crate::quadrature::Grid;
use crate::scalar::{cplx, czero, lit, pt_dist, to_f64, Pt, Real};

/// Operator given by two closures (used for composite operators).
pub struct FnOperator<F, G> {
    pub dim: usize,
    pub f: F,
    pub g: G,
}

impl<T: Real, F, G> LinearOperator<T> for FnOperator<F, G>
where
    F: Fn(&[Complex<T>]) -> Vec<Complex<T>> + Sync,
    G: Fn(&[Complex<T>]) -> Vec<Complex<T>> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        (self.f)(x)
    }
    fn apply_h(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        (self.g)(x)
    }
}

/// `A = K* − K` with the decay exponent it is expected to satisfy.
pub struct SkewOperator<T: Real> {
    pub a: KernelMatrix<T>,
    pub base: OperatorKind,
    pub tag: MetricTag,
    pub target: f64,
    /// `max|K density|`, the scale for the degenerate-zero test.
    pub base_scale: f64,
}

/// `A = K* − K` applied through `K` without storing a second matrix.
pub struct SkewView<'a, T: Real> {
    pub k: &'a KernelMatrix<T>,
}

impl<T: Real> SkewView<'_, T> {
    /// `A_ij = conj(K_ji)·μ_j/μ_i − K_ij`.
    pub fn entry(&self, i: usize, j: usize) -> Complex<T> {
        let mu = &self.k.mu;
        self.k.entry(j, i).conj() * (mu[j] / mu[i]) - self.k.entry(i, j)
    }

    pub fn max_abs(&self) -> f64 {
        let n = self.k.dim();
        (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| to_f64(self.entry(i, j).norm())).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max)
    }

    /// Hilbert–Schmidt norm on `L²(μ)`, an upper bound for `‖A‖`.
    pub fn hilbert_schmidt(&self) -> f64 {
        let n = self.k.dim();
        let mu = &self.k.mu;
        (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| to_f64(self.entry(i, j).norm_sqr() * mu[i] / mu[j]))
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum::<f64>()
            .sqrt()
    }
}

impl<T: Real> LinearOperator<T> for SkewView<'_, T> {
    fn dim(&self) -> usize {
        self.k.dim()
    }
    fn apply(&self, f: &[Complex<T>]) -> Vec<Complex<T>> {
        let mu = &self.k.mu;
        let wf: Vec<_> = f.iter().zip(mu).map(|(a, w)| *a * *w).collect();
        let adj = self.k.apply_h(&wf);
        let kf = self.k.apply(f);
        adj.iter().zip(mu).zip(&kf).map(|((a, w), b)| *a / *w - *b).collect()
    }
    fn apply_h(&self, f: &[Complex<T>]) -> Vec<Complex<T>> {
        let mu = &self.k.mu;
        let wf: Vec<_> = f.iter().zip(mu).map(|(a, w)| *a / *w).collect();
        let kf = self.k.apply(&wf);
        let khf = self.k.apply_h(f);
        kf.iter().zip(mu).zip(&khf).map(|((a, w), b)| *a * *w - *b).collect()
    }
}

fn mu_inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>], mu: &[T]) -> Complex<T> {
    a.iter().zip(b).zip(mu).map(|((x, y), w)| *x * y.conj() * *w).sum()
}

fn mu_norm<T: Real>(a: &[Complex<T>], mu: &[T]) -> T {
    a.iter().zip(mu).map(|(x, w)| x.norm_sqr() * *w).sum::<T>().sqrt()
}

fn random_cvec<T: Real>(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex<T>> {
    (0..n)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            cplx(lit(a), lit(b))
        })
        .collect()
}

/// Forms `A` and checks that `iA` is self-adjoint for the `μ` inner product.
pub fn skew_part<T: Real>(k: &KernelMatrix<T>, tag: MetricTag, n: usize) -> Result<SkewOperator<T>> {
    let a = k.skew();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let f = random_cvec::<T>(a.dim(), &mut rng);
    let h = random_cvec::<T>(a.dim(), &mut rng);
    let lhs = mu_inner(&a.apply(&f), &h, &a.mu);
    let rhs = mu_inner(&f, &a.apply(&h), &a.mu);
    let scale = mu_norm(&k.apply(&f), &a.mu) * mu_norm(&h, &a.mu) + T::one();
    assert!(
        to_f64((lhs + rhs).norm() / scale) < 1e-10,
        "iA is not self-adjoint: {}",
        to_f64((lhs + rhs).norm())
    );
    let nd = k.dim();
    let base_scale = (0..nd)
        .into_par_iter()
        .map(|i| {
            (0..nd)
                .filter(|&j| j != i)
                .map(|j| to_f64(k.density(i, j).norm()))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let nf = n as f64;
    let target = match tag {
        MetricTag::BoundarySzego => 2.0 * nf - 1.0,
        MetricTag::InteriorMcNeal => nf + 0.5,
    };
    Ok(SkewOperator {
        a,
        base: k.kind,
        tag,
        target,
        base_scale,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SkewSize {
    pub decay: DecayCheck,
    /// Interior only: `sup |A_ij|·max(δ_i, δ_j)^{n+½}`.
    pub boundary_distance_sup: Option<f64>,
}

/// Size of the skew kernel against `d^{−target}` and its fitted decay.
pub fn skew_size_check<T: Real>(
    s: &SkewOperator<T>,
    domain: &DomainModel<T>,
    grid: &Grid<T>,
    delta: Option<&[T]>,
) -> Result<SkewSize> {
    if grid.len() != s.a.dim() {
        return Err(Error::CarrierMismatch("skew operator and grid differ".into()));
    }
    let metric = Metric::new(domain, s.tag);
    let prep = metric.prepare_all(&grid.nodes);
    let rows = scan_rows(grid.len(), 4_000_000);
    let pairs = pair_scan(&metric, &prep, &rows, |i, j| to_f64(s.a.density(i, j).norm()));
    let decay = decay_check(&pairs, s.target, 1e-9 * s.base_scale.max(1.0));
    let boundary_distance_sup = delta.map(|dl| {
        rows.par_iter()
            .map(|&i| {
                (0..grid.len())
                    .filter(|&j| j != i)
                    .map(|j| to_f64(s.a.density(i, j).norm()) * to_f64(dl[i].max(dl[j])).powf(s.target))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    });
    Ok(SkewSize {
        decay,
        boundary_distance_sup,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryDefect {
    /// The defect vanished to round-off on every sampled pair.
    pub exact_symmetry: bool,
    pub max_defect: f64,
    pub slope: Option<f64>,
    pub samples: usize,
}

/// `|g(w,z) − conj g(z,w)|` against `|w − z|` for boundary pairs with
/// `|w − z| ∈ [1e−3, 1e−1]`, fitted by least squares in log-log scale.
pub fn symmetry_defect_fit<T: Real>(domain: &DomainModel<T>, samples: usize, seed: u64) -> Result<SymmetryDefect> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = domain.n();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut attempts = 0;
    while xs.len() < samples {
        attempts += 1;
        if attempts > 20 * samples + 100 {
            return Err(Error::InsufficientData("could not sample close boundary pairs".into()));
        }
        let w = random_boundary_point(domain, &mut rng);
        let t = 10f64.powf(rng.gen_range(-3.0..-1.0));
        let mut v = [czero::<T>(); 2];
        for vj in v.iter_mut().take(n) {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            *vj = cplx(lit(a), lit(b));
        }
        let nv = crate::scalar::pt_norm(&v, n);
        let mut u = [czero::<T>(); 2];
        for j in 0..n {
            u[j] = w[j] + v[j] * (lit::<T>(t) / nv);
        }
        let un = crate::scalar::pt_norm(&u, n);
        for uj in u.iter_mut().take(n) {
            *uj = *uj / un;
        }
        let z = domain.boundary_point(&u);
        let r = to_f64(pt_dist(&w, &z, n));
        if !(1e-3..=1e-1).contains(&r) {
            continue;
        }
        let defect = domain.g_boundary(&w, &z) - domain.g_boundary(&z, &w).conj();
        xs.push(r);
        ys.push(to_f64(defect.norm()));
    }
    let max_defect = ys.iter().copied().fold(0.0, f64::max);
    // Round-off level of g itself at these separations is ~1e−16·|g|.
    let exact = max_defect <= 1e-14;
    let slope = if exact { None } else { loglog_fit(&xs, &ys).map(|f| f.slope) };
    Ok(SymmetryDefect {
        exact_symmetry: exact,
        max_defect,
        slope,
        samples: xs.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ResolventMethod {
    Direct,
    Neumann { max_terms: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct ResolventReport {
    pub method: ResolventMethod,
    /// `‖(I − A)x − b‖ / ‖b‖` in `L²(μ)`.
    pub residual: f64,
    /// Neumann only: `‖A^K b‖` per partial sum.
    pub increments: Vec<f64>,
    pub condition_estimate: Option<f64>,
}

pub const SINGULAR_THRESHOLD: f64 = 1e12;

/// Factorised `I − A`.
pub fn factor_resolvent<T: Real>(a: &KernelMatrix<T>) -> Result<(Lu<T>, f64)> {
    let n = a.dim();
    let dense = a.to_dense();
    let m = CMatrix::from_row_fn(n, n, |i, row| {
        for (j, r) in row.iter_mut().enumerate() {
            *r = -dense[(i, j)];
        }
        row[i] += Complex::new(T::one(), T::zero());
    });
    drop(dense);
    let lu = m.lu()?;
    let cond = to_f64(lu.condition_estimate(&m));
    if !(cond < SINGULAR_THRESHOLD) {
        return Err(Error::Singular(format!(
            "condition estimate {cond:.3e} of I − A exceeds {SINGULAR_THRESHOLD:e}"
        )));
    }
    Ok((lu, cond))
}

/// Solves `(I − A)x = b`.
pub fn resolvent_solve<T: Real>(
    a: &KernelMatrix<T>,
    b: &[Complex<T>],
    method: ResolventMethod,
) -> Result<(Vec<Complex<T>>, ResolventReport)> {
    let mu = &a.mu;
    let nb = mu_norm(b, mu);
    let (x, increments, cond) = match method {
        ResolventMethod::Direct => {
            let (lu, cond) = factor_resolvent(a)?;
            (lu.solve(b), Vec::new(), Some(cond))
        }
        ResolventMethod::Neumann { max_terms } => {
            let (x, inc) = neumann_partial_sums(a, b, max_terms);
            (x.last().cloned().unwrap(), inc, None)
        }
    };
    let ax = a.apply(&x);
    let r: Vec<Complex<T>> = x.iter().zip(&ax).zip(b).map(|((xi, ai), bi)| *xi - *ai - *bi).collect();
    let residual = if nb == T::zero() {
        to_f64(mu_norm(&r, mu))
    } else {
        to_f64(mu_norm(&r, mu) / nb)
    };
    Ok((
        x,
        ResolventReport {
            method,
            residual,
            increments,
            condition_estimate: cond,
        },
    ))
}

/// Partial sums `x_K = Σ_{k≤K} A^k b` for `K = 0..=max_terms` and the
/// increments `‖A^K b‖`.
pub fn neumann_partial_sums<T: Real>(
    a: &KernelMatrix<T>,
    b: &[Complex<T>],
    max_terms: usize,
) -> (Vec<Vec<Complex<T>>>, Vec<f64>) {
    neumann_sums_op(a, &a.mu, b, max_terms)
}

fn neumann_sums_op<T: Real, O: LinearOperator<T> + ?Sized>(
    a: &O,
    mu: &[T],
    b: &[Complex<T>],
    max_terms: usize,
) -> (Vec<Vec<Complex<T>>>, Vec<f64>) {
    let mut term = b.to_vec();
    let mut x = b.to_vec();
    let mut sums = vec![x.clone()];
    let mut inc = vec![to_f64(mu_norm(&term, mu))];
    for _ in 0..max_terms {
        term = a.apply(&term);
        for (xi, t) in x.iter_mut().zip(&term) {
            *xi += *t;
        }
        inc.push(to_f64(mu_norm(&term, mu)));
        sums.push(x.clone());
    }
    (sums, inc)
}

#[derive(Clone, Debug, Serialize)]
pub struct NeumannCheck {
    /// `ν = ‖A‖` on `L²(μ)`.
    pub nu: f64,
    pub direct_residual: f64,
    /// `(K, ‖x_K − x‖/‖b‖, ν^{K+1}/(1−ν))`.
    pub rows: Vec<(usize, f64, f64)>,
    /// `None` when `ν ≥ 1` and the bound does not apply.
    pub bound_holds: Option<bool>,
}

/// Compares Neumann partial sums with the direct solution.
pub fn neumann_check<T: Real>(a: &KernelMatrix<T>, b: &[Complex<T>], max_terms: usize, seed: u64) -> Result<NeumannCheck> {
    let nu = operator_norm_l2(a, &a.mu, None, seed)?.value;
    let (x, rep) = resolvent_solve(a, b, ResolventMethod::Direct)?;
    let nb = to_f64(mu_norm(b, &a.mu));
    let (sums, _) = neumann_partial_sums(a, b, max_terms);
    let mut rows = Vec::new();
    let mut holds = true;
    for (k, xk) in sums.iter().enumerate() {
        let e: Vec<Complex<T>> = xk.iter().zip(&x).map(|(p, q)| *p - *q).collect();
        let err = to_f64(mu_norm(&e, &a.mu)) / nb;
        let bound = if nu < 1.0 {
            nu.powi(k as i32 + 1) / (1.0 - nu)
        } else {
            f64::INFINITY
        };
        // Slack for the power-iteration tolerance and the solve residual.
        if err > bound * (1.0 + 1e-6) + 1e-12 {
            holds = false;
        }
        rows.push((k, err, bound));
    }
    Ok(NeumannCheck {
        nu,
        direct_residual: rep.residual,
        rows,
        bound_holds: (nu < 1.0).then_some(holds),
    })
}

enum Inverse<'a, T: Real> {
    Direct(Lu<T>),
    Neumann { a: &'a (dyn LinearOperator<T> + 'a), terms: usize },
}

/// `P = K(I − A)⁻¹`, applied without forming the product.
pub struct Projection<'a, T: Real> {
    pub k: &'a KernelMatrix<T>,
    inv: Inverse<'a, T>,
    pub condition_estimate: Option<f64>,
}

impl<'a, T: Real> Projection<'a, T> {
    pub fn new(k: &'a KernelMatrix<T>, a: &'a KernelMatrix<T>, method: ResolventMethod) -> Result<Self> {
        if k.dim() != a.dim() {
            return Err(Error::Shape("K and A differ in size".into()));
        }
        Ok(match method {
            ResolventMethod::Direct => {
                let (lu, cond) = factor_resolvent(a)?;
                Self {
                    k,
                    inv: Inverse::Direct(lu),
                    condition_estimate: Some(cond),
                }
            }
            ResolventMethod::Neumann { max_terms } => Self::neumann(k, a, max_terms),
        })
    }

    /// Truncated Neumann inverse with any operator standing for `A`.
    pub fn neumann(k: &'a KernelMatrix<T>, a: &'a (dyn LinearOperator<T> + 'a), terms: usize) -> Self {
        Self {
            k,
            inv: Inverse::Neumann { a, terms },
            condition_estimate: None,
        }
    }

    fn solve(&self, f: &[Complex<T>]) -> Vec<Complex<T>> {
        match &self.inv {
            Inverse::Direct(lu) => lu.solve(f),
            Inverse::Neumann { a, terms } => neumann_sums_op(*a, &self.k.mu, f, *terms).0.pop().unwrap(),
        }
    }

    fn solve_h(&self, f: &[Complex<T>]) -> Vec<Complex<T>> {
        match &self.inv {
            Inverse::Direct(lu) => lu.solve_h(f),
            Inverse::Neumann { a, terms } => {
                let mut term = f.to_vec();
                let mut x = f.to_vec();
                for _ in 0..*terms {
                    term = a.apply_h(&term);
                    for (xi, t) in x.iter_mut().zip(&term) {
                        *xi += *t;
                    }
                }
                x
            }
        }
    }

    pub fn mu(&self) -> &[T] {
        &self.k.mu
    }

    /// Dense matrix of `P`, one solve per column.
    pub fn to_dense(&self) -> CMatrix<T> {
        let n = self.k.dim();
        let cols: Vec<Vec<Complex<T>>> = (0..n)
            .map(|j| {
                let mut e = vec![czero(); n];
                e[j] = Complex::new(T::one(), T::zero());
                self.apply(&e)
            })
            .collect();
        CMatrix::from_fn(n, n, |i, j| cols[j][i])
    }
}

impl<T: Real> LinearOperator<T> for Projection<'_, T> {
    fn dim(&self) -> usize {
        self.k.dim()
    }
    fn apply(&self, f: &[Complex<T>]) -> Vec<Complex<T>> {
        self.k.apply(&self.solve(f))
    }
    fn apply_h(&self, f: &[Complex<T>]) -> Vec<Complex<T>> {
        self.solve_h(&self.k.apply_h(f))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectionReport {
    pub skew_norm: f64,
    pub condition_estimate: Option<f64>,
    /// `‖P² − P‖` on `L²(μ)`.
    pub idempotence_defect: f64,
    /// `‖P* − P‖` on `L²(μ)`.
    pub self_adjointness_defect: f64,
    pub correction_free: bool,
}

/// Builds `P = K(I − A)⁻¹` and measures how far it is from an orthogonal
/// projection. The `C₂`/`T₂` corrections are not included.
pub fn reconstruct_projection<'a, T: Real>(
    k: &'a KernelMatrix<T>,
    a: &'a KernelMatrix<T>,
    method: ResolventMethod,
    seed: u64,
) -> Result<(Projection<'a, T>, ProjectionReport)> {
    let p = Projection::new(k, a, method)?;
    let mu = p.mu().to_vec();
    let skew_norm = operator_norm_l2(a, &mu, None, seed)?.value;
    let idem = FnOperator {
        dim: p.dim(),
        f: |x: &[Complex<T>]| {
            let px = p.apply(x);
            let ppx = p.apply(&px);
            ppx.iter().zip(&px).map(|(a, b)| *a - *b).collect::<Vec<_>>()
        },
        g: |x: &[Complex<T>]| {
            let px = p.apply_h(x);
            let ppx = p.apply_h(&px);
            ppx.iter().zip(&px).map(|(a, b)| *a - *b).collect::<Vec<_>>()
        },
    };
    let idempotence_defect = operator_norm_l2(&idem, &mu, None, seed ^ 1)?.value;
    // μ-adjoint P* = W⁻¹PᴴW.
    let sa = FnOperator {
        dim: p.dim(),
        f: |x: &[Complex<T>]| {
            let wx: Vec<_> = x.iter().zip(&mu).map(|(a, w)| *a * *w).collect();
            let y = p.apply_h(&wx);
            let px = p.apply(x);
            y.iter().zip(&mu).zip(&px).map(|((a, w), b)| *a / *w - *b).collect::<Vec<_>>()
        },
        g: |x: &[Complex<T>]| {
            let wx: Vec<_> = x.iter().zip(&mu).map(|(a, w)| *a / *w).collect();
            let y = p.apply(&wx);
            let px = p.apply_h(x);
            y.iter().zip(&mu).zip(&px).map(|((a, w), b)| *a * *w - *b).collect::<Vec<_>>()
        },
    };
    let self_adjointness_defect = operator_norm_l2(&sa, &mu, None, seed ^ 2)?.value;
    let report = ProjectionReport {
        skew_norm,
        condition_estimate: p.condition_estimate,
        idempotence_defect,
        self_adjointness_defect,
        correction_free: true,
    };
    Ok((p, report))
}

#[derive(Clone, Debug, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub method: &'static str,
    /// `true` when the value is the largest singular value of the finite
    /// matrix; `false` for random lower bounds.
    pub certified: bool,
    pub iterations: usize,
}

pub const POWER_TOL: f64 = 1e-8;
pub const POWER_MAX_ITER: usize = 10_000;
pub const ROUNDOFF_NORM: f64 = 1e-12;

/// `‖op‖` on `L²_σ(μ)` by power iteration on `D·op·D⁻¹`, `D = (σμ)^{1/2}`.
pub fn operator_norm_l2<T: Real, O: LinearOperator<T> + ?Sized>(
    op: &O,
    mu: &[T],
    sigma: Option<&[T]>,
    seed: u64,
) -> Result<NormEstimate> {
    let n = op.dim();
    let d: Vec<T> = match sigma {
        Some(s) => s.iter().zip(mu).map(|(a, b)| (*a * *b).sqrt()).collect(),
        None => mu.iter().map(|b| b.sqrt()).collect(),
    };
    let apply = |x: &[Complex<T>]| {
        let y: Vec<_> = x.iter().zip(&d).map(|(a, s)| *a / *s).collect();
        op.apply(&y).into_iter().zip(&d).map(|(a, s)| a * *s).collect::<Vec<_>>()
    };
    let apply_h = |x: &[Complex<T>]| {
        let y: Vec<_> = x.iter().zip(&d).map(|(a, s)| *a * *s).collect();
        op.apply_h(&y).into_iter().zip(&d).map(|(a, s)| a / *s).collect::<Vec<_>>()
    };
    let r = largest_singular_value(n, apply, apply_h, POWER_TOL, ROUNDOFF_NORM, POWER_MAX_ITER, seed);
    if !r.converged {
        return Err(Error::NonConvergence(format!(
            "power iteration did not converge in {POWER_MAX_ITER} steps (last {:.6e})",
            to_f64(r.value)
        )));
    }
    Ok(NormEstimate {
        value: to_f64(r.value),
        method: "power-iteration",
        certified: true,
        iterations: r.iterations,
    })
}

fn lp_norm<T: Real>(f: &[Complex<T>], w: &[T], p: f64) -> f64 {
    let s: f64 = f
        .iter()
        .zip(w)
        .map(|(a, b)| to_f64(a.norm()).powf(p) * to_f64(*b))
        .sum();
    s.powf(1.0 / p)
}

/// Test functions for random lower bounds: Gaussian noise, ±1 noise,
/// single-node spikes and smooth low-degree polynomials in the coordinates.
fn trial_vectors<T: Real>(nodes: &[Pt<T>], trials: usize, seed: u64) -> Vec<Vec<Complex<T>>> {
    let n = nodes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|t| match t % 4 {
            0 => random_cvec(n, &mut rng),
            1 => (0..n)
                .map(|_| Complex::new(if rng.gen::<bool>() { T::one() } else { -T::one() }, T::zero()))
                .collect(),
            2 => {
                let k = rng.gen_range(0..n);
                let mut v = vec![czero(); n];
                v[k] = Complex::new(T::one(), T::zero());
                v
            }
            _ => {
                let c: Vec<Complex<T>> = random_cvec(6, &mut rng);
                nodes
                    .iter()
                    .map(|p| c[0] + c[1] * p[0] + c[2] * p[1] + c[3] * p[0].conj() + c[4] * p[0] * p[1].conj() + c[5] * p[0] * p[0])
                    .collect()
            }
        })
        .collect()
}

/// `‖op‖` on `L^p_σ(μ)`: exact (power iteration) for `p = 2`, a random
/// lower bound otherwise.
pub fn weighted_operator_norm<T: Real, O: LinearOperator<T> + ?Sized>(
    op: &O,
    mu: &[T],
    nodes: &[Pt<T>],
    sigma: &[T],
    p: f64,
    seed: u64,
) -> Result<NormEstimate> {
    if sigma.iter().any(|s| !(*s > T::zero())) {
        return Err(Error::InvalidParameter("weight must be positive".into()));
    }
    if p == 2.0 {
        return operator_norm_l2(op, mu, Some(sigma), seed);
    }
    let w: Vec<T> = sigma.iter().zip(mu).map(|(a, b)| *a * *b).collect();
    let trials = trial_vectors(nodes, 200, seed);
    let best = trials
        .iter()
        .map(|f| lp_norm(&op.apply(f), &w, p) / lp_norm(f, &w, p))
        .fold(0.0, f64::max);
    Ok(NormEstimate {
        value: best,
        method: "random-lower-bound",
        certified: false,
        iterations: trials.len(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Improvement {
    pub max_ratio: f64,
    pub p: f64,
    pub epsilon: f64,
    pub trials: usize,
}

/// `max ‖Af‖_{p+ε} / ‖f‖_p` over seeded random `f` (unweighted `μ`).
pub fn improvement_check<T: Real, O: LinearOperator<T> + ?Sized>(
    a: &O,
    mu: &[T],
    nodes: &[Pt<T>],
    tag: MetricTag,
    n: usize,
    p: f64,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<Improvement> {
    let nf = n as f64;
    let top = match tag {
        MetricTag::BoundarySzego => 1.0 / (2.0 * nf - 1.0),
        MetricTag::InteriorMcNeal => 1.0 / (2.0 * nf + 1.0),
    };
    if !(0.0..top).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!("ε = {epsilon} outside [0, {top})")));
    }
    let fs = trial_vectors(nodes, trials, seed);
    let max_ratio = fs
        .iter()
        .map(|f| lp_norm(&a.apply(f), mu, p + epsilon) / lp_norm(f, mu, p))
        .fold(0.0, f64::max);
    Ok(Improvement {
        max_ratio,
        p,
        epsilon,
        trials: fs.len(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TruncationRow {
    pub s: f64,
    pub skew_near_norm: f64,
    pub skew_near_weighted_norm: Option<f64>,
    /// `sup |K_far|·(s/2)^{2n}`; close to 1 or below.
    pub far_sup_scaled: f64,
}

/// Splits `K` with the cutoff `χ_s(d)` (1 below `s/2`, 0 beyond `s`) and
/// measures the skew part of the near piece along a ladder of `s`.
pub fn truncation_split<T: Real>(
    k: &KernelMatrix<T>,
    domain: &DomainModel<T>,
    grid: &Grid<T>,
    ladder: &[f64],
    sigma: Option<&[T]>,
    seed: u64,
) -> Result<Vec<TruncationRow>> {
    let n = grid.len();
    if k.dim() != n {
        return Err(Error::CarrierMismatch("kernel and grid differ".into()));
    }
    let metric = Metric::new(domain, MetricTag::BoundarySzego);
    let prep = metric.prepare_all(&grid.nodes);
    let dist = CMatrix::from_row_fn(n, n, |i, row| {
        for (j, r) in row.iter_mut().enumerate() {
            *r = Complex::new(metric.between(&prep[i], &prep[j]), T::zero());
        }
    });
    let two_n = 2 * domain.n() as i32;
    let mut out = Vec::new();
    for &s in ladder {
        let st: T = lit(s);
        let mask = dist.map(|_, _, d| Complex::new(smoothstep_cutoff(d.re, st).0, T::zero()));
        let near = k.masked(&mask, true, OperatorKind::NearPart);
        let a = near.skew();
        let skew_near_norm = operator_norm_l2(&a, &k.mu, None, seed)?.value;
        let skew_near_weighted_norm = match sigma {
            Some(sg) => Some(operator_norm_l2(&a, &k.mu, Some(sg), seed)?.value),
            None => None,
        };
        let far_sup = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| to_f64(k.kernel(i, j).norm()) * (1.0 - to_f64(mask[(i, j)].re)))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        out.push(TruncationRow {
            s,
            skew_near_norm,
            skew_near_weighted_norm,
            far_sup_scaled: far_sup * (0.5 * s).powi(two_n),
        });
    }
    Ok(out)
}

/// `∫(∫|K(z,w)σ(w)^{-1}|^q dσ(w))^{p/q} dσ(z)` from the off-diagonal
/// densities; `+∞` when a term overflows.
pub fn double_norm<T: Real>(k: &KernelMatrix<T>, sigma: &[T], p: f64) -> f64 {
    let q = p / (p - 1.0);
    let n = k.dim();
    let mu: Vec<f64> = k.mu.iter().map(|x| to_f64(*x)).collect();
    let sg: Vec<f64> = sigma.iter().map(|x| to_f64(*x)).collect();
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let inner: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (to_f64(k.density(i, j).norm()) / sg[j]).powf(q) * sg[j] * mu[j])
                .sum();
            inner.powf(p / q) * sg[i] * mu[i]
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    if total.is_finite() {
        total
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests;
