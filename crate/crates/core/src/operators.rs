//! Nyström discretisations of the boundary main term `C♯`, the
//! Cauchy–Fantappiè operator `C₁`, the Bergman main term `T₁` and the
//! positive comparison operator `Γ`.
//!
//! A discretised operator is stored as
//!
//! ```text
//! M = O + diag(d) + Σ c·diag(l)·D·diag(r)
//! ```
//!
//! where `O` holds the off-diagonal quadrature entries `K(z_i, w_j)·m_j`,
//! `d` the diagonal rule, and the last sum the spectral corrections used on
//! equispaced planar curves (`D` is the periodic differentiation matrix).
//! Kernel values are recovered from `O`, so size and decay checks never see
//! the corrections.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{envelope_fit, LineFit};
use crate::geometry::{DomainModel, Jet};
use crate::linalg::{periodic_diff_matrix, CMatrix};
use crate::metric::{Metric, Prepared};
use crate::quadrature::{leray_levi_from_jet, Grid, GridKind, Layout};
use crate::scalar::{cplx, creal, czero, lit, to_f64, Pt, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OperatorKind {
    CSharp,
    CauchyFantappie,
    BergmanMain,
    Gamma,
    Adjoint,
    Skew,
    NearPart,
    FarPart,
    Custom,
}

/// Measure the kernel is integrated against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MeasureConvention {
    Lebesgue,
    LerayLevi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DiagonalPolicy {
    /// Punctured rule, `M_ii = 0`.
    Excluded,
    /// Kernel value at the node times its weight (bounded kernels).
    Included,
    /// `M_ii = 1 − Σ_{j≠i} (C₁)_ij`: the jump relation, exact on constants.
    Subtracted,
    /// Subtracted diagonal plus the spectral derivative term that makes
    /// the planar Cauchy rule spectrally accurate on equispaced curves.
    SubtractedSpectral,
}

/// `coef · diag(left) · D · diag(right)`.
#[derive(Clone, Debug)]
pub struct SpectralTerm<T: Real> {
    pub coef: Complex<T>,
    pub left: Vec<T>,
    pub right: Vec<T>,
    diff: Arc<Vec<T>>,
}

impl<T: Real> SpectralTerm<T> {
    fn apply(&self, f: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = f.len();
        let rf: Vec<Complex<T>> = f.iter().zip(&self.right).map(|(a, r)| *a * *r).collect();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let row = &self.diff[i * n..(i + 1) * n];
                let mut s = czero::<T>();
                for (d, v) in row.iter().zip(&rf) {
                    s += *v * *d;
                }
                s * self.coef * self.left[i]
            })
            .collect()
    }

    /// `(c L D R)ᴴ = −c̄ R D L` because `D` is antisymmetric.
    fn apply_h(&self, f: &[Complex<T>]) -> Vec<Complex<T>> {
        let t = SpectralTerm {
            coef: -self.coef.conj(),
            left: self.right.clone(),
            right: self.left.clone(),
            diff: self.diff.clone(),
        };
        t.apply(f)
    }

    fn entry(&self, i: usize, j: usize) -> Complex<T> {
        let n = self.left.len();
        self.coef * (self.left[i] * self.diff[i * n + j] * self.right[j])
    }
}

/// Something that can be applied together with its plain (Euclidean)
/// conjugate transpose.
pub trait LinearOperator<T: Real>: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, f: &[Complex<T>]) -> Vec<Complex<T>>;
    fn apply_h(&self, f: &[Complex<T>]) -> Vec<Complex<T>>;
}

#[derive(Clone, Debug)]
pub struct KernelMatrix<T: Real> {
    pub kind: OperatorKind,
    pub convention: MeasureConvention,
    pub diagonal: DiagonalPolicy,
    pub grid_kind: GridKind,
    /// Node weights of `μ`, the measure of the unweighted `L²` space.
    pub mu: Vec<T>,
    /// Column weights `m_j` of the convention (`Λ_j μ_j` or `μ_j`).
    pub col_weights: Vec<T>,
    /// Off-diagonal entries `K(z_i, w_j)·m_j`; zero on the diagonal.
    pub offdiag: CMatrix<T>,
    pub diag: Vec<Complex<T>>,
    pub spectral: Vec<SpectralTerm<T>>,
}

impl<T: Real> LinearOperator<T> for KernelMatrix<T> {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn apply(&self, f: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(f.len(), self.dim(), "apply: size mismatch");
        let mut out = self.offdiag.matvec(f);
        for ((o, d), x) in out.iter_mut().zip(&self.diag).zip(f) {
            *o += *d * *x;
        }
        for s in &self.spectral {
            for (o, v) in out.iter_mut().zip(s.apply(f)) {
                *o += v;
            }
        }
        out
    }

    fn apply_h(&self, f: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(f.len(), self.dim(), "apply_h: size mismatch");
        let mut out = self.offdiag.matvec_h(f);
        for ((o, d), x) in out.iter_mut().zip(&self.diag).zip(f) {
            *o += d.conj() * *x;
        }
        for s in &self.spectral {
            for (o, v) in out.iter_mut().zip(s.apply_h(f)) {
                *o += v;
            }
        }
        out
    }
}

impl<T: Real> KernelMatrix<T> {
    /// Wraps an explicit matrix acting on `L²(μ)`.
    pub fn from_dense(m: &CMatrix<T>, mu: &[T]) -> Result<Self> {
        let n = mu.len();
        if m.rows() != n || m.cols() != n {
            return Err(Error::Shape("matrix and weights differ in size".into()));
        }
        let offdiag = CMatrix::from_row_fn(n, n, |i, row| {
            row.copy_from_slice(m.row(i));
            row[i] = czero();
        });
        Ok(Self {
            kind: OperatorKind::Custom,
            convention: MeasureConvention::Lebesgue,
            diagonal: DiagonalPolicy::Included,
            grid_kind: GridKind::Boundary,
            mu: mu.to_vec(),
            col_weights: mu.to_vec(),
            offdiag,
            diag: (0..n).map(|i| m[(i, i)]).collect(),
            spectral: Vec::new(),
        })
    }

    /// Checked application.
    pub fn try_apply(&self, f: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        if f.len() != self.dim() {
            return Err(Error::Shape(format!(
                "operator of size {} applied to a vector of length {}",
                self.dim(),
                f.len()
            )));
        }
        Ok(self.apply(f))
    }

    /// Full matrix entry `M_ij`.
    pub fn entry(&self, i: usize, j: usize) -> Complex<T> {
        let mut v = self.offdiag[(i, j)];
        if i == j {
            v += self.diag[i];
        }
        for s in &self.spectral {
            v += s.entry(i, j);
        }
        v
    }

    /// Kernel density against `μ` at an off-diagonal pair.
    #[inline]
    pub fn density(&self, i: usize, j: usize) -> Complex<T> {
        self.offdiag[(i, j)] / self.mu[j]
    }

    /// Kernel value against the convention's measure.
    #[inline]
    pub fn kernel(&self, i: usize, j: usize) -> Complex<T> {
        self.offdiag[(i, j)] / self.col_weights[j]
    }

    pub fn to_dense(&self) -> CMatrix<T> {
        let n = self.dim();
        CMatrix::from_row_fn(n, n, |i, row| {
            row.copy_from_slice(self.offdiag.row(i));
            row[i] += self.diag[i];
            for s in &self.spectral {
                for (j, r) in row.iter_mut().enumerate() {
                    *r += s.entry(i, j);
                }
            }
        })
    }

    /// Adjoint on the unweighted `L²(μ)`: `M* = W⁻¹ Mᴴ W`. For the
    /// Leray–Levi convention this folds `Λ` into the entries before
    /// transposing, so off-diagonal densities are `conj(K_ji)·Λ_i`.
    pub fn adjoint(&self) -> Self {
        let n = self.dim();
        let mu = &self.mu;
        let offdiag = CMatrix::from_row_fn(n, n, |i, row| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = if i == j {
                    czero()
                } else {
                    self.offdiag[(j, i)].conj() * (mu[j] / mu[i])
                };
            }
        });
        let spectral = self
            .spectral
            .iter()
            .map(|s| SpectralTerm {
                coef: -s.coef.conj(),
                left: s.right.iter().zip(mu).map(|(r, m)| *r / *m).collect(),
                right: s.left.iter().zip(mu).map(|(l, m)| *l * *m).collect(),
                diff: s.diff.clone(),
            })
            .collect();
        Self {
            kind: OperatorKind::Adjoint,
            convention: MeasureConvention::Lebesgue,
            diagonal: self.diagonal,
            grid_kind: self.grid_kind,
            mu: self.mu.clone(),
            col_weights: self.mu.clone(),
            offdiag,
            diag: self.diag.iter().map(|d| d.conj()).collect(),
            spectral,
        }
    }

    /// `M* − M`, assembled in one pass over `O`.
    pub fn skew(&self) -> Self {
        let n = self.dim();
        let mu = &self.mu;
        let offdiag = CMatrix::from_row_fn(n, n, |i, row| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = if i == j {
                    czero()
                } else {
                    self.offdiag[(j, i)].conj() * (mu[j] / mu[i]) - self.offdiag[(i, j)]
                };
            }
        });
        let mut spectral: Vec<SpectralTerm<T>> = self
            .spectral
            .iter()
            .map(|s| SpectralTerm {
                coef: -s.coef.conj(),
                left: s.right.iter().zip(mu).map(|(r, m)| *r / *m).collect(),
                right: s.left.iter().zip(mu).map(|(l, m)| *l * *m).collect(),
                diff: s.diff.clone(),
            })
            .collect();
        for s in &self.spectral {
            spectral.push(SpectralTerm {
                coef: -s.coef,
                ..s.clone()
            });
        }
        Self {
            kind: OperatorKind::Skew,
            convention: MeasureConvention::Lebesgue,
            diagonal: self.diagonal,
            grid_kind: self.grid_kind,
            mu: self.mu.clone(),
            col_weights: self.mu.clone(),
            offdiag,
            diag: self.diag.iter().map(|d| d.conj() - *d).collect(),
            spectral,
        }
    }

    /// Largest modulus over all entries of the full matrix.
    pub fn max_abs(&self) -> T {
        if self.spectral.is_empty() {
            let d = self.diag.iter().map(|x| x.norm()).fold(T::zero(), T::max);
            return self.offdiag.max_abs().max(d);
        }
        let n = self.dim();
        (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| self.entry(i, j).norm()).fold(T::zero(), T::max))
            .reduce(T::zero, T::max)
    }

    /// Off-diagonal part multiplied entrywise by `mask(i, j)`; diagonal and
    /// corrections are kept when `keep_local` is set.
    pub fn masked(&self, mask: &CMatrix<T>, keep_local: bool, kind: OperatorKind) -> Self {
        let n = self.dim();
        let offdiag = CMatrix::from_row_fn(n, n, |i, row| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = self.offdiag[(i, j)] * mask[(i, j)].re;
            }
        });
        Self {
            kind,
            offdiag,
            diag: if keep_local {
                self.diag.clone()
            } else {
                vec![czero(); n]
            },
            spectral: if keep_local {
                self.spectral.clone()
            } else {
                Vec::new()
            },
            ..self.clone()
        }
    }

    /// Writes the full matrix as `row col re im` lines.
    pub fn dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.dim();
        writeln!(out, "# kslab-matrix v1")?;
        writeln!(
            out,
            "# kind {:?} convention {:?} diagonal {:?} size {n}",
            self.kind, self.convention, self.diagonal
        )?;
        writeln!(out, "# apply(f)_i = sum_j M_ij f_j; columns: row col re im")?;
        for i in 0..n {
            for j in 0..n {
                let v = self.entry(i, j);
                writeln!(out, "{i} {j} {:e} {:e}", to_f64(v.re), to_f64(v.im))?;
            }
        }
        Ok(())
    }
}

/// Per-source data reused by every boundary kernel evaluation.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryNode<T: Real> {
    pub w: Pt<T>,
    pub jet: Jet<T>,
    pub lambda: T,
    /// `n = 1`: the unit tangent `iν`. `n = 2`: unused.
    pub tau: Complex<T>,
    /// `D_jlm = det[dw_j(e), dw̄_l(e), dw_m(e)]` on the oriented frame
    /// `(iν, v, iv)` of `T_w(bD)`, `v = (−ν̄₂, ν̄₁)`.
    pub dets: [[[Complex<T>; 2]; 2]; 2],
}

impl<T: Real> BoundaryNode<T> {
    pub fn new(d: &DomainModel<T>, w: &Pt<T>) -> Self {
        let n = d.n();
        let jet = d.jet(w);
        let nu = jet.normal(n);
        let i = cplx(T::zero(), T::one());
        let mut dets = [[[czero(); 2]; 2]; 2];
        if n == 2 {
            let e1 = [i * nu[0], i * nu[1]];
            let v = [-nu[1].conj(), nu[0].conj()];
            let e3 = [i * v[0], i * v[1]];
            let frame = [e1, v, e3];
            for (j, dj) in dets.iter_mut().enumerate() {
                for (l, dl) in dj.iter_mut().enumerate() {
                    for (m, dm) in dl.iter_mut().enumerate() {
                        let r0 = [frame[0][j], frame[1][j], frame[2][j]];
                        let r1 = [frame[0][l].conj(), frame[1][l].conj(), frame[2][l].conj()];
                        let r2 = [frame[0][m], frame[1][m], frame[2][m]];
                        *dm = det3(r0, r1, r2);
                    }
                }
            }
        }
        Self {
            w: *w,
            jet,
            lambda: leray_levi_from_jet(d, &jet),
            tau: i * nu[0],
            dets,
        }
    }
}

fn det3<T: Real>(a: [Complex<T>; 3], b: [Complex<T>; 3], c: [Complex<T>; 3]) -> Complex<T> {
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0])
}

fn boundary_nodes<T: Real>(d: &DomainModel<T>, grid: &Grid<T>) -> Result<Vec<BoundaryNode<T>>> {
    if grid.kind != GridKind::Boundary {
        return Err(Error::InvalidParameter("boundary operator needs a boundary grid".into()));
    }
    if grid.n != d.n() {
        return Err(Error::CarrierMismatch("grid and domain dimensions differ".into()));
    }
    if !(grid.separation > T::zero()) {
        return Err(Error::InvalidParameter("coincident nodes in grid".into()));
    }
    Ok(grid.nodes.par_iter().map(|w| BoundaryNode::new(d, w)).collect())
}

fn two_pi_i<T: Real>() -> Complex<T> {
    cplx(T::zero(), T::TAU())
}

/// `C♯` density against `μ`: `Λ(w)/g(w,z)ⁿ`.
#[inline]
pub fn c_sharp_density_at<T: Real>(d: &DomainModel<T>, src: &BoundaryNode<T>, z: &Pt<T>) -> Complex<T> {
    let g = d.g_boundary_jet(&src.w, &src.jet, z);
    let gn = if d.n() == 1 { g } else { g * g };
    creal(src.lambda) / gn
}

/// `C₁` density against `μ`: the pull-back of `G ∧ (∂̄G)^{n−1} / gⁿ`
/// divided by `(2πi)ⁿ`, evaluated on an oriented orthonormal tangent frame.
#[inline]
pub fn cauchy_fantappie_density_at<T: Real>(d: &DomainModel<T>, src: &BoundaryNode<T>, z: &Pt<T>) -> Complex<T> {
    let f = d.form_jet(&src.w, &src.jet, z);
    if d.n() == 1 {
        return f.g_coef[0] * src.tau / (f.g * two_pi_i());
    }
    let mut s = czero::<T>();
    for j in 0..2 {
        let mut inner = czero();
        for l in 0..2 {
            for m in 0..2 {
                inner += f.h[l][m] * src.dets[j][l][m];
            }
        }
        s += f.g_coef[j] * inner;
    }
    let c = two_pi_i::<T>();
    s / (c * c * f.g * f.g)
}

pub fn c_sharp_density<T: Real>(d: &DomainModel<T>, w: &Pt<T>, z: &Pt<T>) -> Result<Complex<T>> {
    d.ensure_boundary(w)?;
    Ok(c_sharp_density_at(d, &BoundaryNode::new(d, w), z))
}

pub fn cauchy_fantappie_density<T: Real>(d: &DomainModel<T>, w: &Pt<T>, z: &Pt<T>) -> Result<Complex<T>> {
    d.ensure_boundary(w)?;
    Ok(cauchy_fantappie_density_at(d, &BoundaryNode::new(d, w), z))
}

/// `K₁(w,z) = (n!/πⁿ)(g·det H − Gᵀ adj(H) b)/g^{n+1}` with the interior
/// support function.
#[inline]
pub fn bergman_main_at<T: Real>(d: &DomainModel<T>, w: &Pt<T>, jw: &Jet<T>, z: &Pt<T>) -> Complex<T> {
    let f = d.interior_form_jet(w, jw, z);
    let g = f.g;
    if d.n() == 1 {
        let num = g * f.h[0][0] - f.g_coef[0] * f.b[0];
        return num / (g * g * T::PI());
    }
    let h = &f.h;
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    // adj[m][l] for H with rows l and columns m.
    let adj = [[h[1][1], -h[0][1]], [-h[1][0], h[0][0]]];
    let mut q = czero();
    for m in 0..2 {
        for l in 0..2 {
            q += f.g_coef[m] * adj[m][l] * f.b[l];
        }
    }
    let c = lit::<T>(2.0) / (T::PI() * T::PI());
    (g * det - q) * c / (g * g * g)
}

/// The same kernel as `(n!/πⁿ)·det(H/g − b Gᵀ/g²)`; used to guard the
/// expanded numerator.
pub fn bergman_main_det_form<T: Real>(d: &DomainModel<T>, w: &Pt<T>, z: &Pt<T>) -> Complex<T> {
    let jw = d.jet(w);
    let f = d.interior_form_jet(w, &jw, z);
    let g = f.g;
    let e = |l: usize, m: usize| f.h[l][m] / g - f.b[l] * f.g_coef[m] / (g * g);
    if d.n() == 1 {
        e(0, 0) / T::PI()
    } else {
        (e(0, 0) * e(1, 1) - e(0, 1) * e(1, 0)) * (lit::<T>(2.0) / (T::PI() * T::PI()))
    }
}

pub fn bergman_main_kernel<T: Real>(d: &DomainModel<T>, w: &Pt<T>, z: &Pt<T>) -> Complex<T> {
    bergman_main_at(d, w, &d.jet(w), z)
}

/// `|g(w,z)|^{−(n+1)}` with the interior support function.
#[inline]
pub fn gamma_at<T: Real>(d: &DomainModel<T>, w: &Pt<T>, jw: &Jet<T>, z: &Pt<T>) -> T {
    d.g_interior_jet(w, jw, z).norm().powi(-(d.n() as i32 + 1))
}

pub fn gamma_kernel<T: Real>(d: &DomainModel<T>, w: &Pt<T>, z: &Pt<T>) -> T {
    gamma_at(d, w, &d.jet(w), z)
}

fn is_equispaced_circle<T: Real>(grid: &Grid<T>) -> bool {
    grid.n == 1 && matches!(grid.layout, Layout::Circle { .. })
}

fn assemble_boundary<T: Real, F>(nodes: &[BoundaryNode<T>], mu: &[T], dens: F) -> CMatrix<T>
where
    F: Fn(&BoundaryNode<T>, &Pt<T>) -> Complex<T> + Sync,
{
    let n = nodes.len();
    CMatrix::from_row_fn(n, n, |i, row| {
        let z = nodes[i].w;
        for (j, r) in row.iter_mut().enumerate() {
            *r = if i == j {
                czero()
            } else {
                dens(&nodes[j], &z) * mu[j]
            };
        }
    })
}

/// Jump diagonal from the `C₁` row sums, plus the spectral term on
/// equispaced planar curves.
fn boundary_local_rule<T: Real>(
    grid: &Grid<T>,
    c1_offdiag: &CMatrix<T>,
) -> (DiagonalPolicy, Vec<Complex<T>>, Vec<SpectralTerm<T>>) {
    let n = grid.len();
    let diag: Vec<Complex<T>> = (0..n)
        .into_par_iter()
        .map(|i| creal::<T>(T::one()) - c1_offdiag.row(i).iter().copied().sum::<Complex<T>>())
        .collect();
    if is_equispaced_circle(grid) {
        // (h/2πi)·∂_θ f with h = 2π/N.
        let coef = cplx(T::zero(), -T::one() / lit(n as f64));
        let term = SpectralTerm {
            coef,
            left: vec![T::one(); n],
            right: vec![T::one(); n],
            diff: Arc::new(periodic_diff_matrix(n)),
        };
        (DiagonalPolicy::SubtractedSpectral, diag, vec![term])
    } else {
        (DiagonalPolicy::Subtracted, diag, Vec::new())
    }
}

/// `C₁` on a boundary grid (densities against surface measure).
pub fn build_cauchy_fantappie<T: Real>(d: &DomainModel<T>, grid: &Grid<T>) -> Result<KernelMatrix<T>> {
    if !(1..=2).contains(&d.n()) {
        return Err(Error::Unsupported(format!("C₁ for n = {}", d.n())));
    }
    let nodes = boundary_nodes(d, grid)?;
    let off = assemble_boundary(&nodes, &grid.weights, |s, z| cauchy_fantappie_density_at(d, s, z));
    let (policy, diag, spectral) = boundary_local_rule(grid, &off);
    Ok(KernelMatrix {
        kind: OperatorKind::CauchyFantappie,
        convention: MeasureConvention::Lebesgue,
        diagonal: policy,
        grid_kind: GridKind::Boundary,
        mu: grid.weights.clone(),
        col_weights: grid.weights.clone(),
        offdiag: off,
        diag,
        spectral,
    })
}

/// `C♯` with kernel `g(w,z)^{−n}` against the Leray–Levi measure. The
/// local rule (diagonal and spectral term) is the one of `C₁`; the two
/// kernels share their leading singularity.
pub fn build_c_sharp<T: Real>(d: &DomainModel<T>, grid: &Grid<T>) -> Result<KernelMatrix<T>> {
    if !(1..=2).contains(&d.n()) {
        return Err(Error::Unsupported(format!("C♯ for n = {}", d.n())));
    }
    let nodes = boundary_nodes(d, grid)?;
    let lam = grid.lambda()?.to_vec();
    let m: Vec<T> = grid.weights.iter().zip(&lam).map(|(a, b)| *a * *b).collect();
    let c1 = assemble_boundary(&nodes, &grid.weights, |s, z| cauchy_fantappie_density_at(d, s, z));
    let (policy, diag, spectral) = boundary_local_rule(grid, &c1);
    drop(c1);
    let off = assemble_boundary(&nodes, &grid.weights, |s, z| c_sharp_density_at(d, s, z));
    Ok(KernelMatrix {
        kind: OperatorKind::CSharp,
        convention: MeasureConvention::LerayLevi,
        diagonal: policy,
        grid_kind: GridKind::Boundary,
        mu: grid.weights.clone(),
        col_weights: m,
        offdiag: off,
        diag,
        spectral,
    })
}

fn assemble_interior<T: Real, F>(d: &DomainModel<T>, grid: &Grid<T>, kernel: F, kind: OperatorKind) -> Result<KernelMatrix<T>>
where
    F: Fn(&Pt<T>, &Jet<T>, &Pt<T>) -> Complex<T> + Sync,
{
    if !(1..=2).contains(&d.n()) {
        return Err(Error::Unsupported(format!("interior kernels for n = {}", d.n())));
    }
    if grid.kind != GridKind::Interior {
        return Err(Error::InvalidParameter("interior operator needs an interior grid".into()));
    }
    let jets: Vec<Jet<T>> = grid.nodes.par_iter().map(|w| d.jet(w)).collect();
    let n = grid.len();
    let mu = &grid.weights;
    let off = CMatrix::from_row_fn(n, n, |i, row| {
        let z = grid.nodes[i];
        for (j, r) in row.iter_mut().enumerate() {
            *r = if i == j {
                czero()
            } else {
                kernel(&grid.nodes[j], &jets[j], &z) * mu[j]
            };
        }
    });
    let diag = (0..n)
        .map(|i| kernel(&grid.nodes[i], &jets[i], &grid.nodes[i]) * mu[i])
        .collect();
    Ok(KernelMatrix {
        kind,
        convention: MeasureConvention::Lebesgue,
        diagonal: DiagonalPolicy::Included,
        grid_kind: GridKind::Interior,
        mu: mu.clone(),
        col_weights: mu.clone(),
        offdiag: off,
        diag,
        spectral: Vec::new(),
    })
}

/// Bergman main term `T₁f(z) = ∫ K₁(w,z) f(w) dV(w)`.
pub fn build_bergman_main<T: Real>(d: &DomainModel<T>, grid: &Grid<T>) -> Result<KernelMatrix<T>> {
    assemble_interior(d, grid, |w, jw, z| bergman_main_at(d, w, jw, z), OperatorKind::BergmanMain)
}

/// Positive comparison operator with kernel `|g(w,z)|^{−(n+1)}`.
pub fn build_gamma<T: Real>(d: &DomainModel<T>, grid: &Grid<T>) -> Result<KernelMatrix<T>> {
    assemble_interior(d, grid, |w, jw, z| creal(gamma_at(d, w, jw, z)), OperatorKind::Gamma)
}

/// `C♯` applied without storing the matrix; used where `N²` complex
/// entries do not fit in memory.
pub struct LazyCSharp<'a, T: Real> {
    domain: &'a DomainModel<T>,
    nodes: Vec<BoundaryNode<T>>,
    pub mu: Vec<T>,
    pub diag: Vec<Complex<T>>,
}

impl<'a, T: Real> LazyCSharp<'a, T> {
    pub fn new(d: &'a DomainModel<T>, grid: &Grid<T>) -> Result<Self> {
        let nodes = boundary_nodes(d, grid)?;
        let mu = grid.weights.clone();
        let diag = (0..nodes.len())
            .into_par_iter()
            .map(|i| {
                let z = nodes[i].w;
                let mut s = czero();
                for (j, src) in nodes.iter().enumerate() {
                    if j != i {
                        s += cauchy_fantappie_density_at(d, src, &z) * mu[j];
                    }
                }
                creal::<T>(T::one()) - s
            })
            .collect();
        Ok(Self {
            domain: d,
            nodes,
            mu,
            diag,
        })
    }

    #[inline]
    fn entry(&self, i: usize, j: usize) -> Complex<T> {
        if i == j {
            self.diag[i]
        } else {
            c_sharp_density_at(self.domain, &self.nodes[j], &self.nodes[i].w) * self.mu[j]
        }
    }

    /// Applies the operator to several vectors in one sweep.
    pub fn apply_many(&self, fs: &[Vec<Complex<T>>]) -> Vec<Vec<Complex<T>>> {
        let n = self.nodes.len();
        let rows: Vec<Vec<Complex<T>>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![czero(); fs.len()];
                for j in 0..n {
                    let k = self.entry(i, j);
                    for (a, f) in acc.iter_mut().zip(fs) {
                        *a += k * f[j];
                    }
                }
                acc
            })
            .collect();
        (0..fs.len())
            .map(|c| rows.iter().map(|r| r[c]).collect())
            .collect()
    }

    /// `max_ij |(M* − M)_ij|` computed pairwise.
    pub fn skew_max(&self) -> T {
        let n = self.nodes.len();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut best = T::zero();
                for j in i..n {
                    let a = self.entry(j, i).conj() * (self.mu[j] / self.mu[i]) - self.entry(i, j);
                    best = best.max(a.norm());
                }
                best
            })
            .reduce(T::zero, T::max)
    }
}

impl<T: Real> LinearOperator<T> for LazyCSharp<'_, T> {
    fn dim(&self) -> usize {
        self.nodes.len()
    }

    fn apply(&self, f: &[Complex<T>]) -> Vec<Complex<T>> {
        self.apply_many(&[f.to_vec()]).pop().unwrap()
    }

    fn apply_h(&self, f: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.nodes.len();
        (0..n)
            .into_par_iter()
            .map(|j| {
                let mut s = czero();
                for (i, fi) in f.iter().enumerate() {
                    s += self.entry(i, j).conj() * *fi;
                }
                s
            })
            .collect()
    }
}

/// Rows used by pairwise scans: all of them when `n² ≤ budget`, otherwise
/// an evenly spaced subset.
pub fn scan_rows(n: usize, budget: usize) -> Vec<usize> {
    let max_rows = (budget / n.max(1)).max(1);
    if n <= max_rows {
        (0..n).collect()
    } else {
        let stride = n.div_ceil(max_rows);
        (0..n).step_by(stride).collect()
    }
}

/// Off-diagonal pairs `(d_ij, |value_ij|)` over the scan rows.
pub fn pair_scan<T: Real, F>(metric: &Metric<'_, T>, prep: &[Prepared<T>], rows: &[usize], value: F) -> Vec<(f64, f64)>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    rows.par_iter()
        .flat_map_iter(|&i| {
            let pi = prep[i];
            let value = &value;
            (0..prep.len()).filter(move |&j| j != i).map(move |j| {
                let dij = to_f64(metric.between(&pi, &prep[j]));
                (dij, value(i, j))
            })
        })
        .collect()
}

/// Near-diagonal fitting window: from three times the smallest separation
/// over one decade.
pub fn near_decade(pairs: &[(f64, f64)]) -> (f64, f64) {
    let dmin = pairs
        .iter()
        .map(|p| p.0)
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let dmax = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    let lo = 3.0 * dmin;
    let hi = (10.0 * lo).min(0.5 * dmax);
    (lo, hi.max(lo * 1.5))
}

/// Decay record shared by the remainder and skew checks.
#[derive(Clone, Debug, Serialize)]
pub struct DecayCheck {
    /// All scanned values were below `1e-9` (relative to the base kernel).
    pub degenerate_zero: bool,
    pub max_abs: f64,
    /// `sup |v_ij|·d_ij^target` off the diagonal.
    pub sup_normalized: f64,
    pub target: f64,
    pub slope: Option<f64>,
    pub window: (f64, f64),
    pub pairs: usize,
}

pub fn decay_check(pairs: &[(f64, f64)], target: f64, zero_tol: f64) -> DecayCheck {
    let max_abs = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    let sup = pairs
        .iter()
        .filter(|p| p.0 > 0.0)
        .map(|p| p.1 * p.0.powf(target))
        .fold(0.0, f64::max);
    let (lo, hi) = near_decade(pairs);
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let degenerate = max_abs <= zero_tol;
    let slope = if degenerate {
        None
    } else {
        envelope_fit(&x, &y, lo, hi, 8).map(|f: LineFit| f.slope)
    };
    DecayCheck {
        degenerate_zero: degenerate,
        max_abs,
        sup_normalized: sup,
        target,
        slope,
        window: (lo, hi),
        pairs: pairs.len(),
    }
}

/// Pointwise `R = C₁ − C♯` (densities against `μ`) with the size bound
/// `|R| ≲ d^{−(2n−1)}` under the boundary metric.
pub fn remainder_bound_check<T: Real>(
    c1: &KernelMatrix<T>,
    csharp: &KernelMatrix<T>,
    domain: &DomainModel<T>,
    grid: &Grid<T>,
) -> Result<DecayCheck> {
    if c1.dim() != csharp.dim() || c1.dim() != grid.len() {
        return Err(Error::CarrierMismatch("C₁, C♯ and grid sizes differ".into()));
    }
    let metric = Metric::new(domain, crate::metric::MetricTag::BoundarySzego);
    let prep = metric.prepare_all(&grid.nodes);
    let rows = scan_rows(grid.len(), 4_000_000);
    let pairs = pair_scan(&metric, &prep, &rows, |i, j| {
        to_f64((c1.density(i, j) - csharp.density(i, j)).norm())
    });
    let scale = rows
        .iter()
        .map(|&i| {
            (0..grid.len())
                .filter(|&j| j != i)
                .map(|j| to_f64(csharp.density(i, j).norm()))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let n = domain.n() as f64;
    Ok(decay_check(&pairs, 2.0 * n - 1.0, 1e-10 * scale.max(1.0)))
}

/// Size and domination statistics of `Γ` against `T₁`.
#[derive(Clone, Debug, Serialize)]
pub struct GammaCheck {
    /// `sup |K₁|/Γ`.
    pub domination_constant: f64,
    /// `sup Γ_ij · max(δ_i, δ_j)^{n+1}` with `δ = d(·, bD)`.
    pub boundary_size: f64,
    /// `sup Γ_ij · d_ij^{n+1}`.
    pub distance_size: f64,
    /// Range of `Γ_ij / Γ_ji`.
    pub symmetry_range: (f64, f64),
}

pub fn gamma_check<T: Real>(
    t1: &KernelMatrix<T>,
    gamma: &KernelMatrix<T>,
    domain: &DomainModel<T>,
    grid: &Grid<T>,
    delta: &[T],
) -> Result<GammaCheck> {
    let n = grid.len();
    if t1.dim() != n || gamma.dim() != n || delta.len() != n {
        return Err(Error::CarrierMismatch("Γ check operands differ in size".into()));
    }
    let metric = Metric::new(domain, crate::metric::MetricTag::InteriorMcNeal);
    let prep = metric.prepare_all(&grid.nodes);
    let p = domain.n() as i32 + 1;
    let rows = scan_rows(n, 4_000_000);
    let stats: Vec<[f64; 5]> = rows
        .par_iter()
        .map(|&i| {
            let mut s = [0.0, 0.0, 0.0, f64::INFINITY, 0.0];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let gij = to_f64(gamma.kernel(i, j).re);
                let gji = to_f64(gamma.kernel(j, i).re);
                s[0] = s[0].max(to_f64(t1.kernel(i, j).norm()) / gij);
                let dm = to_f64(delta[i].max(delta[j]));
                s[1] = s[1].max(gij * dm.powi(p));
                let dij = to_f64(metric.between(&prep[i], &prep[j]));
                s[2] = s[2].max(gij * dij.powi(p));
                s[3] = s[3].min(gij / gji);
                s[4] = s[4].max(gij / gji);
            }
            s
        })
        .collect();
    let fold = |k: usize, f: fn(f64, f64) -> f64, init: f64| stats.iter().map(|s| s[k]).fold(init, f);
    Ok(GammaCheck {
        domination_constant: fold(0, f64::max, 0.0),
        boundary_size: fold(1, f64::max, 0.0),
        distance_size: fold(2, f64::max, 0.0),
        symmetry_range: (fold(3, f64::min, f64::INFINITY), fold(4, f64::max, 0.0)),
    })
}

/// Which argument of `K(target, source)` is perturbed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Vary {
    Source,
    Target,
}

#[derive(Clone, Debug, Serialize)]
pub struct SmoothnessCheck {
    /// `sup |ΔK|·d^power·(d'/d)^{−γ}`.
    pub sup_ratio: f64,
    /// Envelope slope of `|ΔK|·d^power` against `d'/d`.
    pub fitted_exponent: Option<f64>,
    pub triples: usize,
}

/// Hölder-type smoothness of a kernel under a quasi-metric: triples
/// `(x, x', y)` with `d(x, y) ≥ c·d(x, x')`, where `x` is the perturbed
/// argument. `power` is the size exponent that normalises `|ΔK|`.
#[allow(clippy::too_many_arguments)]
pub fn smoothness_estimate_check<T: Real, K>(
    kernel: K,
    metric: &Metric<'_, T>,
    nodes: &[Pt<T>],
    vary: Vary,
    gamma: f64,
    separation: f64,
    power: f64,
    samples: usize,
    seed: u64,
) -> Result<SmoothnessCheck>
where
    K: Fn(usize, usize) -> Complex<T> + Sync,
{
    let prep = metric.prepare_all(nodes);
    let n = nodes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<(usize, usize, f64)> = (0..samples)
        .map(|_| {
            let x = rng.gen_range(0..n);
            let mut y = rng.gen_range(0..n);
            while y == x {
                y = rng.gen_range(0..n);
            }
            (x, y, -2.0 * rng.gen::<f64>())
        })
        .collect();
    let rows: Vec<Option<(f64, f64)>> = picks
        .par_iter()
        .map(|&(x, y, lr)| {
            let dxy = to_f64(metric.between(&prep[x], &prep[y]));
            let want = dxy * 10f64.powf(lr) / separation;
            let mut best: Option<(usize, f64)> = None;
            for (k, q) in prep.iter().enumerate() {
                if k == x || k == y {
                    continue;
                }
                let dk = to_f64(metric.between(&prep[x], q));
                if dk <= 0.0 || dk * separation > dxy {
                    continue;
                }
                let err = (dk.ln() - want.ln()).abs();
                if best.is_none_or(|b| err < (b.1.ln() - want.ln()).abs()) {
                    best = Some((k, dk));
                }
            }
            let (xp, dp) = best?;
            let (a, b) = match vary {
                Vary::Source => (kernel(y, x), kernel(y, xp)),
                Vary::Target => (kernel(x, y), kernel(xp, y)),
            };
            let dk = to_f64((a - b).norm());
            Some((dp / dxy, dk * dxy.powf(power)))
        })
        .collect();
    let pts: Vec<(f64, f64)> = rows.into_iter().flatten().collect();
    if pts.len() < 20 {
        return Err(Error::InsufficientData(format!(
            "only {} admissible smoothness triples",
            pts.len()
        )));
    }
    let sup = pts
        .iter()
        .map(|(r, v)| v * r.powf(-gamma))
        .fold(0.0, f64::max);
    let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(0.0, f64::max) * 1.0001;
    let fit = if pts.iter().all(|p| p.1 == 0.0) {
        None
    } else {
        envelope_fit(&x, &y, lo, hi, 8).map(|f| f.slope)
    };
    Ok(SmoothnessCheck {
        sup_ratio: sup,
        fitted_exponent: fit,
        triples: pts.len(),
    })
}

/// Samples a function on grid nodes.
pub fn sample<T: Real, F: Fn(&Pt<T>) -> Complex<T>>(grid: &Grid<T>, f: F) -> Vec<Complex<T>> {
    grid.nodes.iter().map(f).collect()
}

/// `z^α` as a closure.
pub fn monomial<T: Real>(alpha: [u32; 2]) -> impl Fn(&Pt<T>) -> Complex<T> {
    move |p: &Pt<T>| p[0].powu(alpha[0]) * p[1].powu(alpha[1])
}

/// Relative `L²(μ)` residual `‖a − b‖/‖b‖`.
pub fn relative_residual<T: Real>(a: &[Complex<T>], b: &[Complex<T>], mu: &[T]) -> f64 {
    let num: T = a
        .iter()
        .zip(b)
        .zip(mu)
        .map(|((x, y), w)| (*x - *y).norm_sqr() * *w)
        .sum();
    let den: T = b.iter().zip(mu).map(|(y, w)| y.norm_sqr() * *w).sum();
    to_f64((num / den).sqrt())
}

#[cfg(test)]
mod tests;
