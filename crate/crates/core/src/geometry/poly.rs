//! Real-valued polynomials in Wirtinger form `Σ c z^α z̄^β`.
//!
//! Every model defining function is such a polynomial, so all derivatives in
//! `z` and `z̄` are exact and cheap.

use num_complex::Complex;

use crate::scalar::{czero, Pt, Real};

#[derive(Clone, Debug)]
pub struct Term<T: Real> {
    pub coef: Complex<T>,
    pub alpha: [u32; 2],
    pub beta: [u32; 2],
}

#[derive(Clone, Debug, Default)]
pub struct WirtingerPoly<T: Real> {
    pub terms: Vec<Term<T>>,
}

#[inline]
fn falling(k: u32, d: u32) -> u32 {
    if d > k {
        return 0;
    }
    (0..d).fold(1, |acc, i| acc * (k - i))
}

impl<T: Real> WirtingerPoly<T> {
    pub fn push(&mut self, coef: Complex<T>, alpha: [u32; 2], beta: [u32; 2]) {
        self.terms.push(Term { coef, alpha, beta });
    }

    /// `∂^{|a|+|b|} / ∂z^a ∂z̄^b` of the polynomial at `z`.
    pub fn deriv(&self, z: &Pt<T>, a: [u32; 2], b: [u32; 2]) -> Complex<T> {
        let zb = [z[0].conj(), z[1].conj()];
        let mut s = czero();
        for t in &self.terms {
            let f = falling(t.alpha[0], a[0])
                * falling(t.alpha[1], a[1])
                * falling(t.beta[0], b[0])
                * falling(t.beta[1], b[1]);
            if f == 0 {
                continue;
            }
            let mut m = t.coef * T::from_u32(f).unwrap();
            for j in 0..2 {
                let pa = t.alpha[j] - a[j];
                let pb = t.beta[j] - b[j];
                if pa > 0 {
                    m *= z[j].powu(pa);
                }
                if pb > 0 {
                    m *= zb[j].powu(pb);
                }
            }
            s += m;
        }
        s
    }

    pub fn value(&self, z: &Pt<T>) -> T {
        self.deriv(z, [0, 0], [0, 0]).re
    }
}

pub(crate) fn unit(j: usize) -> [u32; 2] {
    let mut e = [0, 0];
    e[j] = 1;
    e
}

pub(crate) fn unit2(j: usize, k: usize) -> [u32; 2] {
    let mut e = [0, 0];
    e[j] += 1;
    e[k] += 1;
    e
}
