//! Model strongly pseudoconvex domains and the pointwise objects built on
//! them: defining function jets, the Levi polynomial, the glued support
//! function `g`, the Cauchy–Fantappiè generating form and its `∂̄`, and the
//! special holomorphic coordinates at a boundary point.

mod coercivity;
mod frame;
pub mod poly;

pub use coercivity::{
    check_invariants, choose_cutoff, random_boundary_point, random_interior_point,
    verify_coercivity, Coercivity, InvariantReport,
};
pub use frame::SpecialFrame;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cplx, creal, czero, lit, pt_dist, Pt, Real};
use poly::{unit, unit2, WirtingerPoly};

/// Which model the defining function comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DomainKind {
    UnitBall,
    /// `ρ = Σ a_j |z_j|² − 1`.
    ComplexEllipsoid { a: Vec<f64> },
    /// `ρ = |z|² − 1 + ε |z₁|² Re(z₁^k)`.
    PerturbedBall { amplitude: f64, frequency: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChiMode {
    /// `χ ≡ 1`: the Levi polynomial is used everywhere.
    Global,
    /// Quintic smoothstep in `|z − w|`, 1 below `c/2` and 0 beyond `c`.
    Smoothstep,
}

/// Value and all derivatives of `ρ` up to the order the kernels need.
///
/// `mixed[j][k] = ∂²ρ/∂z_j∂z̄_k`, `third[j][k][l] = ∂³ρ/∂z_j∂z_k∂z̄_l`.
#[derive(Clone, Copy, Debug)]
pub struct Jet<T: Real> {
    pub rho: T,
    pub d: [Complex<T>; 2],
    pub hol: [[Complex<T>; 2]; 2],
    pub mixed: [[Complex<T>; 2]; 2],
    pub third: [[[Complex<T>; 2]; 2]; 2],
}

impl<T: Real> Jet<T> {
    /// `|∂ρ| = (Σ|ρ_j|²)^{1/2}`; the real gradient has twice this length.
    pub fn dnorm(&self, n: usize) -> T {
        (0..n).map(|j| self.d[j].norm_sqr()).sum::<T>().sqrt()
    }

    /// Outward unit normal as a complex vector, `conj(∂ρ)/|∂ρ|`.
    pub fn normal(&self, n: usize) -> Pt<T> {
        let s = self.dnorm(n);
        let mut v = [czero(); 2];
        for j in 0..n {
            v[j] = self.d[j].conj() / s;
        }
        v
    }
}

/// Generating-form data at a pair `(w, z)`.
///
/// `h[l][m] = ∂G_m/∂w̄_l` and `b[l] = ∂g/∂w̄_l`.
#[derive(Clone, Copy, Debug)]
pub struct GeneratingForm<T: Real> {
    pub g_coef: [Complex<T>; 2],
    pub g: Complex<T>,
    pub eta: [Complex<T>; 2],
    pub h: [[Complex<T>; 2]; 2],
    pub b: [Complex<T>; 2],
}

#[derive(Clone, Debug)]
pub struct DomainModel<T: Real> {
    n: usize,
    kind: DomainKind,
    cutoff_c: T,
    chi_mode: ChiMode,
    rho: WirtingerPoly<T>,
}

/// Tolerance for "on the boundary" checks.
pub fn boundary_tol<T: Real>() -> T {
    lit::<T>(1e-10).max(T::epsilon() * lit(1e4))
}

impl<T: Real> DomainModel<T> {
    /// Builds a model. In `Global` mode the positivity of `Re(−P_w(z))` is
    /// sampled immediately and the model is rejected if it fails.
    pub fn new(n: usize, kind: DomainKind, chi_mode: ChiMode, cutoff_c: f64) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(Error::Unsupported(format!("complex dimension {n}")));
        }
        if !(cutoff_c > 0.0) {
            return Err(Error::InvalidParameter("cutoff_c must be positive".into()));
        }
        let mut p = WirtingerPoly::default();
        p.push(creal(-T::one()), [0, 0], [0, 0]);
        match &kind {
            DomainKind::UnitBall => {
                for j in 0..n {
                    p.push(creal(T::one()), unit(j), unit(j));
                }
            }
            DomainKind::ComplexEllipsoid { a } => {
                if a.len() != n || a.iter().any(|x| !(*x > 0.0)) {
                    return Err(Error::InvalidParameter(
                        "ellipsoid needs n positive coefficients".into(),
                    ));
                }
                for (j, aj) in a.iter().enumerate() {
                    p.push(creal(lit(*aj)), unit(j), unit(j));
                }
            }
            DomainKind::PerturbedBall {
                amplitude,
                frequency,
            } => {
                if *frequency < 1 || !amplitude.is_finite() {
                    return Err(Error::InvalidParameter(
                        "perturbation needs finite amplitude and frequency >= 1".into(),
                    ));
                }
                for j in 0..n {
                    p.push(creal(T::one()), unit(j), unit(j));
                }
                let half = creal(lit::<T>(0.5 * amplitude));
                let k = *frequency;
                p.push(half, [k + 1, 0], [1, 0]);
                p.push(half, [1, 0], [k + 1, 0]);
            }
        }
        let m = Self {
            n,
            kind,
            cutoff_c: lit(cutoff_c),
            chi_mode,
            rho: p,
        };
        if chi_mode == ChiMode::Global {
            m.check_global_positivity(2000, 7)?;
        }
        Ok(m)
    }

    pub fn unit_ball(n: usize) -> Result<Self> {
        Self::new(n, DomainKind::UnitBall, ChiMode::Global, 1.0)
    }

    pub fn ellipsoid(a: &[f64]) -> Result<Self> {
        Self::new(
            a.len(),
            DomainKind::ComplexEllipsoid { a: a.to_vec() },
            ChiMode::Global,
            1.0,
        )
    }

    pub fn perturbed_ball(n: usize, amplitude: f64, frequency: u32, cutoff_c: f64) -> Result<Self> {
        Self::new(
            n,
            DomainKind::PerturbedBall {
                amplitude,
                frequency,
            },
            ChiMode::Smoothstep,
            cutoff_c,
        )
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn chi_mode(&self) -> ChiMode {
        self.chi_mode
    }

    pub fn cutoff_c(&self) -> T {
        self.cutoff_c
    }

    /// Short descriptor used in file headers and reports.
    pub fn describe(&self) -> String {
        let kind = match &self.kind {
            DomainKind::UnitBall => "ball".to_string(),
            DomainKind::ComplexEllipsoid { a } => format!(
                "ellipsoid({})",
                a.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
            ),
            DomainKind::PerturbedBall {
                amplitude,
                frequency,
            } => format!("perturbed({amplitude},{frequency})"),
        };
        let chi = match self.chi_mode {
            ChiMode::Global => "global".to_string(),
            ChiMode::Smoothstep => format!("smoothstep(c={})", self.cutoff_c),
        };
        format!("{kind} n={} chi={chi}", self.n)
    }

    #[inline]
    pub fn rho(&self, z: &Pt<T>) -> T {
        self.rho.value(z)
    }

    /// Full jet of `ρ` at `z`.
    pub fn jet(&self, z: &Pt<T>) -> Jet<T> {
        let n = self.n;
        let mut j = Jet {
            rho: self.rho.value(z),
            d: [czero(); 2],
            hol: [[czero(); 2]; 2],
            mixed: [[czero(); 2]; 2],
            third: [[[czero(); 2]; 2]; 2],
        };
        for a in 0..n {
            j.d[a] = self.rho.deriv(z, unit(a), [0, 0]);
            for b in 0..n {
                j.hol[a][b] = self.rho.deriv(z, unit2(a, b), [0, 0]);
                j.mixed[a][b] = self.rho.deriv(z, unit(a), unit(b));
                for c in 0..n {
                    j.third[a][b][c] = self.rho.deriv(z, unit2(a, b), unit(c));
                }
            }
        }
        j
    }

    /// `ρ`, `∂ρ`, holomorphic and mixed Hessians at `z`.
    pub fn eval_defining(&self, z: &Pt<T>) -> Jet<T> {
        self.jet(z)
    }

    pub fn is_on_boundary(&self, w: &Pt<T>) -> bool {
        self.rho(w).abs() <= boundary_tol()
    }

    pub fn ensure_boundary(&self, w: &Pt<T>) -> Result<()> {
        let r = self.rho(w);
        if r.abs() <= boundary_tol() {
            Ok(())
        } else {
            Err(Error::OffBoundary(crate::scalar::to_f64(r.abs())))
        }
    }

    /// Cutoff `χ(r)` and `χ'(r)`.
    #[inline]
    pub fn cutoff(&self, r: T) -> (T, T) {
        match self.chi_mode {
            ChiMode::Global => (T::one(), T::zero()),
            ChiMode::Smoothstep => smoothstep_cutoff(r, self.cutoff_c),
        }
    }

    /// `P_w(z)` evaluated from a jet at `w`; `w` need not lie on `bD`.
    #[inline]
    pub fn levi_poly_jet(&self, w: &Pt<T>, jw: &Jet<T>, z: &Pt<T>) -> Complex<T> {
        let half = lit::<T>(0.5);
        let mut s = czero();
        for j in 0..self.n {
            let dj = z[j] - w[j];
            s += jw.d[j] * dj;
            for k in 0..self.n {
                s += jw.hol[j][k] * dj * (z[k] - w[k]) * half;
            }
        }
        s
    }

    /// Levi polynomial at a boundary point.
    pub fn levi_polynomial(&self, w: &Pt<T>, z: &Pt<T>) -> Result<Complex<T>> {
        self.ensure_boundary(w)?;
        Ok(self.levi_poly_jet(w, &self.jet(w), z))
    }

    /// `Σ ρ_{jk̄}(w) v_j v̄_k` at a boundary point.
    pub fn levi_form(&self, w: &Pt<T>, v: &Pt<T>) -> Result<T> {
        self.ensure_boundary(w)?;
        Ok(hermitian_form(&self.jet(w).mixed, v, self.n))
    }

    /// Boundary support function from a jet at `w`.
    #[inline]
    pub fn g_boundary_jet(&self, w: &Pt<T>, jw: &Jet<T>, z: &Pt<T>) -> Complex<T> {
        let r = pt_dist(w, z, self.n);
        let (chi, _) = self.cutoff(r);
        let q = -self.levi_poly_jet(w, jw, z);
        if chi == T::one() {
            q
        } else {
            q * chi + creal((T::one() - chi) * r * r)
        }
    }

    /// `g(w,z) = χ(−P_w(z)) + (1−χ)|w−z|²`.
    pub fn g_boundary(&self, w: &Pt<T>, z: &Pt<T>) -> Complex<T> {
        self.g_boundary_jet(w, &self.jet(w), z)
    }

    /// `g(w,z) = −ρ(w) + χ(−P_w(z)) + (1−χ)|w−z|²` for `w ∈ D̄`.
    pub fn g_interior(&self, w: &Pt<T>, z: &Pt<T>) -> Complex<T> {
        let jw = self.jet(w);
        self.g_interior_jet(w, &jw, z)
    }

    #[inline]
    pub fn g_interior_jet(&self, w: &Pt<T>, jw: &Jet<T>, z: &Pt<T>) -> Complex<T> {
        creal(-jw.rho) + self.g_boundary_jet(w, jw, z)
    }

    /// Generating form and its `∂̄_w` derivatives from a jet at `w`.
    /// `g` is the boundary support function; see [`Self::interior_form_jet`].
    pub fn form_jet(&self, w: &Pt<T>, jw: &Jet<T>, z: &Pt<T>) -> GeneratingForm<T> {
        let n = self.n;
        let half = lit::<T>(0.5);
        let mut hv = [czero(); 2];
        for j in 0..n {
            hv[j] = w[j] - z[j];
        }
        let r = pt_dist(w, z, n);
        let (chi, dchi) = self.cutoff(r);
        let one_m = T::one() - chi;

        // L_m = ρ_m − ½ Σ_k ρ_mk h_k, so that Σ L_m h_m = −P_w(z).
        let mut l = [czero(); 2];
        let mut q = czero();
        for m in 0..n {
            let mut s = jw.d[m];
            for k in 0..n {
                s -= jw.hol[m][k] * hv[k] * half;
            }
            l[m] = s;
            q += s * hv[m];
        }
        let r2 = r * r;
        let g = q * chi + creal(one_m * r2);

        let mut gc = [czero(); 2];
        for m in 0..n {
            gc[m] = l[m] * chi + hv[m].conj() * one_m;
        }
        // ∂r/∂w̄_l = h_l / (2r); only needed inside the glue annulus.
        let glue = dchi != T::zero() && r > T::zero();
        let mut h = [[czero(); 2]; 2];
        let mut b = [czero(); 2];
        for li in 0..n {
            for m in 0..n {
                let mut s = jw.mixed[m][li];
                for k in 0..n {
                    s -= jw.third[m][k][li] * hv[k] * half;
                }
                let mut v = s * chi;
                if li == m {
                    v += creal(one_m);
                }
                if glue {
                    v += hv[li] * (l[m] - hv[m].conj()) * (dchi / (r + r));
                }
                h[li][m] = v;
            }
            let mut dq = czero();
            for j in 0..n {
                dq += jw.mixed[j][li] * hv[j];
                for k in 0..n {
                    dq -= jw.third[j][k][li] * hv[j] * hv[k] * half;
                }
            }
            let mut v = dq * chi + hv[li] * one_m;
            if glue {
                v += hv[li] * (q - creal(r2)) * (dchi / (r + r));
            }
            b[li] = v;
        }
        let mut eta = [czero(); 2];
        for m in 0..n {
            eta[m] = gc[m] / g;
        }
        GeneratingForm {
            g_coef: gc,
            g,
            eta,
            h,
            b,
        }
    }

    /// Generating form at a boundary point `w`, rejecting the pole `z = w`.
    pub fn generating_form(&self, w: &Pt<T>, z: &Pt<T>) -> Result<GeneratingForm<T>> {
        self.ensure_boundary(w)?;
        if pt_dist(w, z, self.n) == T::zero() {
            return Err(Error::Pole);
        }
        Ok(self.form_jet(w, &self.jet(w), z))
    }

    /// Interior variant: `g` and `b` carry the extra `−ρ(w)` term.
    pub fn interior_form_jet(&self, w: &Pt<T>, jw: &Jet<T>, z: &Pt<T>) -> GeneratingForm<T> {
        let mut f = self.form_jet(w, jw, z);
        f.g -= creal(jw.rho);
        for l in 0..self.n {
            f.b[l] -= jw.d[l].conj();
        }
        for m in 0..self.n {
            f.eta[m] = f.g_coef[m] / f.g;
        }
        f
    }

    /// Radius `R(u)` of the boundary along the unit direction `u`.
    pub fn radial(&self, u: &Pt<T>) -> T {
        let f = |r: T| {
            let p = scale(u, r, self.n);
            self.rho(&p)
        };
        // March outward until the sign changes, then bisect and polish.
        let step = lit::<T>(0.05);
        let mut lo = T::zero();
        let mut hi = step;
        let mut guard = 0;
        while f(hi) < T::zero() {
            lo = hi;
            hi += step;
            guard += 1;
            assert!(guard < 2000, "boundary not found along ray");
        }
        for _ in 0..200 {
            let mid = (lo + hi) * lit(0.5);
            if f(mid) < T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::epsilon() * lit(64.0) {
                break;
            }
        }
        let mut r = (lo + hi) * lit(0.5);
        for _ in 0..3 {
            let p = scale(u, r, self.n);
            let jt = self.jet(&p);
            let mut dr = T::zero();
            for j in 0..self.n {
                dr += (jt.d[j] * u[j]).re;
            }
            dr = dr + dr;
            if dr == T::zero() {
                break;
            }
            let nr = r - jt.rho / dr;
            if nr > lo - step && nr < hi + step {
                r = nr;
            }
        }
        r
    }

    /// Boundary point in direction `u` (unit vector).
    pub fn boundary_point(&self, u: &Pt<T>) -> Pt<T> {
        scale(u, self.radial(u), self.n)
    }

    /// Orthonormal basis of the complex tangent space at `w` (n − 1 vectors),
    /// Gram–Schmidt on the projections of the standard basis.
    pub fn complex_tangent_basis(&self, jw: &Jet<T>) -> Vec<Pt<T>> {
        let n = self.n;
        let nu = jw.normal(n);
        let mut basis: Vec<Pt<T>> = Vec::new();
        for e in 0..n {
            let mut v = [czero(); 2];
            v[e] = creal(T::one());
            let c = nu[e].conj();
            for j in 0..n {
                v[j] -= nu[j] * c;
            }
            for q in &basis {
                let c = crate::scalar::hdot(&v, q, n);
                for j in 0..n {
                    v[j] -= q[j] * c;
                }
            }
            let nv = crate::scalar::pt_norm(&v, n);
            if nv > lit(1e-8) {
                for vj in v.iter_mut().take(n) {
                    *vj = *vj / nv;
                }
                basis.push(v);
            }
            if basis.len() == n - 1 {
                break;
            }
        }
        basis
    }

    fn check_global_positivity(&self, samples: usize, seed: u64) -> Result<()> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let hot = coercivity::low_levi_points(self, samples, &mut rng);
        let mut worst = (T::infinity(), crate::scalar::origin(), crate::scalar::origin());
        for i in 0..samples {
            let (w, z) = if i % 2 == 0 {
                let w = random_boundary_point(self, &mut rng);
                (w, random_interior_point(self, &mut rng))
            } else {
                coercivity::sample_pair(self, i / 2, &hot, &mut rng)
            };
            let d = pt_dist(&w, &z, self.n);
            if d < lit(1e-9) {
                continue;
            }
            let v = (-self.levi_poly_jet(&w, &self.jet(&w), &z)).re / (d * d);
            if v < worst.0 {
                worst = (v, w, z);
            }
        }
        if worst.0 > T::zero() {
            Ok(())
        } else {
            Err(Error::FailedCoercivity {
                kappa: crate::scalar::to_f64(worst.0),
                w: fmt_pt(&worst.1, self.n),
                z: fmt_pt(&worst.2, self.n),
            })
        }
    }
}

/// Quintic smoothstep cutoff: 1 on `[0, c/2]`, 0 on `[c, ∞)`.
pub fn smoothstep_cutoff<T: Real>(r: T, c: T) -> (T, T) {
    let half = c * lit(0.5);
    if r <= half {
        return (T::one(), T::zero());
    }
    if r >= c {
        return (T::zero(), T::zero());
    }
    let t = (r - half) / half;
    let t2 = t * t;
    let s = t2 * t * (lit::<T>(10.0) - lit::<T>(15.0) * t + lit::<T>(6.0) * t2);
    let ds = lit::<T>(30.0) * t2 * (T::one() - t) * (T::one() - t);
    (T::one() - s, -ds / half)
}

/// `Σ M_{jk} v_j v̄_k` for a Hermitian `M`.
pub fn hermitian_form<T: Real>(m: &[[Complex<T>; 2]; 2], v: &Pt<T>, n: usize) -> T {
    let mut s = czero();
    for j in 0..n {
        for k in 0..n {
            s += m[j][k] * v[j] * v[k].conj();
        }
    }
    s.re
}

#[inline]
pub(crate) fn scale<T: Real>(u: &Pt<T>, r: T, n: usize) -> Pt<T> {
    let mut p = [czero(); 2];
    for j in 0..n {
        p[j] = u[j] * r;
    }
    p
}

pub(crate) fn fmt_pt<T: Real>(p: &Pt<T>, n: usize) -> String {
    let parts: Vec<String> = (0..n)
        .map(|j| format!("{:.6}{:+.6}i", p[j].re, p[j].im))
        .collect();
    format!("({})", parts.join(", "))
}

/// Convenience constructor for a point of C¹ or C².
pub fn pt<T: Real>(z1: (f64, f64), z2: (f64, f64)) -> Pt<T> {
    [cplx(lit(z1.0), lit(z1.1)), cplx(lit(z2.0), lit(z2.1))]
}
