use num_complex::Complex;

use super::{DomainModel, Jet};
use crate::error::Result;
use crate::scalar::{creal, czero, lit, Pt, Real};

/// Holomorphic coordinates adapted to a point `x` near the boundary.
///
/// With `U` unitary whose first column is the unit normal at `x` and
/// `ξ = Uᴴ(z − x)`, the coordinates are
/// `ζ₁ = ξ₁ + (1/2|∂ρ|) Σ ρ'_{ab} ξ_a ξ_b` and `ζ_j = ξ_j` for `j ≥ 2`,
/// where `ρ' = Uᵀ (∂²ρ/∂z∂z) U`. Thus `ζ₁ = P_x(z) / |∂ρ(x)|`.
#[derive(Clone, Copy, Debug)]
pub struct SpecialFrame<T: Real> {
    pub base: Pt<T>,
    pub n: usize,
    /// Columns: unit normal, then the unit complex tangent.
    pub unitary: [[Complex<T>; 2]; 2],
    pub dnorm: T,
    /// Quadratic shear coefficients `ρ'` in rotated coordinates.
    pub shear: [[Complex<T>; 2]; 2],
}

impl<T: Real> SpecialFrame<T> {
    /// Frame at a boundary point.
    pub fn new(domain: &DomainModel<T>, w: &Pt<T>) -> Result<Self> {
        domain.ensure_boundary(w)?;
        Ok(Self::at(domain, w, &domain.jet(w)))
    }

    /// Frame at any point where `∂ρ ≠ 0`; used by the interior metric.
    pub fn at(domain: &DomainModel<T>, x: &Pt<T>, jx: &Jet<T>) -> Self {
        let n = domain.n();
        let nu = jx.normal(n);
        let mut u = [[czero(); 2]; 2];
        u[0][0] = nu[0];
        if n == 2 {
            u[1][0] = nu[1];
            u[0][1] = -nu[1].conj();
            u[1][1] = nu[0].conj();
        }
        let mut shear = [[czero(); 2]; 2];
        for a in 0..n {
            for b in 0..n {
                let mut s = czero();
                for j in 0..n {
                    for k in 0..n {
                        s += u[j][a] * jx.hol[j][k] * u[k][b];
                    }
                }
                shear[a][b] = s;
            }
        }
        Self {
            base: *x,
            n,
            unitary: u,
            dnorm: jx.dnorm(n),
            shear,
        }
    }

    fn rotate(&self, z: &Pt<T>) -> Pt<T> {
        let mut xi = [czero(); 2];
        for a in 0..self.n {
            for j in 0..self.n {
                xi[a] += self.unitary[j][a].conj() * (z[j] - self.base[j]);
            }
        }
        xi
    }

    pub fn forward(&self, z: &Pt<T>) -> Pt<T> {
        let xi = self.rotate(z);
        let mut q = czero();
        for a in 0..self.n {
            for b in 0..self.n {
                q += self.shear[a][b] * xi[a] * xi[b];
            }
        }
        let mut zeta = xi;
        zeta[0] = xi[0] + q / (self.dnorm + self.dnorm);
        zeta
    }

    pub fn inverse(&self, zeta: &Pt<T>) -> Pt<T> {
        let two_s = self.dnorm + self.dnorm;
        let mut xi = [czero(); 2];
        xi[1] = if self.n == 2 { zeta[1] } else { czero() };
        // A ξ₁² + B ξ₁ + C = 0, taking the root that vanishes with ζ.
        let a = self.shear[0][0] / two_s;
        let (bq, cq) = if self.n == 2 {
            (
                creal(T::one()) + self.shear[0][1] * xi[1] * lit::<T>(2.0) / two_s,
                self.shear[1][1] * xi[1] * xi[1] / two_s - zeta[0],
            )
        } else {
            (creal(T::one()), -zeta[0])
        };
        let disc = (bq * bq - a * cq * lit::<T>(4.0)).sqrt();
        let den = if (bq + disc).norm() >= (bq - disc).norm() {
            bq + disc
        } else {
            bq - disc
        };
        xi[0] = -(cq * lit::<T>(2.0)) / den;
        let mut z = self.base;
        for j in 0..self.n {
            for a in 0..self.n {
                z[j] += self.unitary[j][a] * xi[a];
            }
        }
        z
    }

    /// `|ζ₁| + Σ_{j≥2} |ζ_j|²` at `z`.
    pub fn mcneal(&self, z: &Pt<T>) -> T {
        let zeta = self.forward(z);
        let mut s = zeta[0].norm();
        for zj in zeta.iter().take(self.n).skip(1) {
            s += zj.norm_sqr();
        }
        s
    }
}
