//! Scalar abstraction shared by every module.
//!
//! All geometry, quadrature and operator code is written against [`Real`], so
//! the same routines run in `f64` (the default used by the experiments) and in
//! `f32` for cheap exploratory sweeps.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar type usable by the laboratory.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Default
        + Debug
        + Display
        + LowerExp
        + Send
        + Sync
        + 'static
{
}

/// Complex scalar over `T`.
pub type Cplx<T> = Complex<T>;

/// A point of C² stored with two complex coordinates. For one-dimensional
/// domains the second coordinate is kept at zero.
pub type Pt<T> = [Complex<T>; 2];

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts a `T` into `f64` for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline]
pub fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub fn creal<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}

#[inline]
pub fn origin<T: Real>() -> Pt<T> {
    [czero(), czero()]
}

/// Euclidean distance between two points, first `n` coordinates.
#[inline]
pub fn pt_dist<T: Real>(a: &Pt<T>, b: &Pt<T>, n: usize) -> T {
    let mut s = T::zero();
    for j in 0..n {
        s += (a[j] - b[j]).norm_sqr();
    }
    s.sqrt()
}

#[inline]
pub fn pt_norm<T: Real>(a: &Pt<T>, n: usize) -> T {
    let mut s = T::zero();
    for aj in a.iter().take(n) {
        s += aj.norm_sqr();
    }
    s.sqrt()
}

/// Hermitian product Σ a_j conj(b_j).
#[inline]
pub fn hdot<T: Real>(a: &Pt<T>, b: &Pt<T>, n: usize) -> Complex<T> {
    let mut s = czero();
    for j in 0..n {
        s += a[j] * b[j].conj();
    }
    s
}

/// Converts a point between scalar types.
pub fn pt_cast<T: Real, U: Real>(p: &Pt<T>) -> Pt<U> {
    [
        Complex::new(lit(to_f64(p[0].re)), lit(to_f64(p[0].im))),
        Complex::new(lit(to_f64(p[1].re)), lit(to_f64(p[1].im))),
    ]
}
