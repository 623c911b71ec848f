//! Dense complex linear algebra used by the operator modules.
//!
//! Row-major storage, partial-pivot LU, and a seeded power iteration for the
//! largest singular value. Row loops are split across the rayon pool; every
//! reduction is done in a fixed order so results do not depend on scheduling.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{czero, lit, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T: Real> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![czero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length mismatch");
        Self { rows, cols, data }
    }

    /// Fills the matrix row by row in parallel.
    pub fn from_row_fn<F>(rows: usize, cols: usize, f: F) -> Self
    where
        F: Fn(usize, &mut [Complex<T>]) + Sync,
    {
        let mut data = vec![czero(); rows * cols];
        if cols > 0 {
            data.par_chunks_mut(cols)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
        }
        Self { rows, cols, data }
    }

    pub fn from_fn<F>(rows: usize, cols: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> Complex<T> + Sync,
    {
        Self::from_row_fn(rows, cols, |i, row| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = f(i, j);
            }
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Complex<T>] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [Complex<T>] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn matvec(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(x.len(), self.cols, "matvec size mismatch");
        self.data
            .par_chunks(self.cols.max(1))
            .map(|row| {
                let mut s = czero();
                for (a, b) in row.iter().zip(x) {
                    s += *a * *b;
                }
                s
            })
            .collect()
    }

    /// `Mᴴx` without forming `Mᴴ`. Rows are split into fixed blocks whose
    /// partial sums are added in block order.
    pub fn matvec_h(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(x.len(), self.rows, "matvec_h size mismatch");
        let c = self.cols;
        let block = self.rows.div_ceil(64).max(1);
        let parts: Vec<Vec<Complex<T>>> = (0..self.rows.div_ceil(block))
            .into_par_iter()
            .map(|b| {
                let mut acc = vec![czero(); c];
                for i in b * block..((b + 1) * block).min(self.rows) {
                    let xi = x[i];
                    for (a, m) in acc.iter_mut().zip(self.row(i)) {
                        *a += m.conj() * xi;
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![czero(); c];
        for p in parts {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn conj_transpose(&self) -> Self {
        let (r, c) = (self.rows, self.cols);
        Self::from_fn(c, r, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = (self.rows, self.cols);
        Self::from_fn(c, r, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul size mismatch");
        let k = self.cols;
        let m = other.cols;
        Self::from_row_fn(self.rows, m, |i, out| {
            let a = self.row(i);
            for (l, al) in a.iter().enumerate().take(k) {
                if al.re == T::zero() && al.im == T::zero() {
                    continue;
                }
                let b = other.row(l);
                for (o, bv) in out.iter_mut().zip(b) {
                    *o += *al * *bv;
                }
            }
        })
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| *a - *b)
            .collect();
        Self::from_rows(self.rows, self.cols, data)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| *a + *b)
            .collect();
        Self::from_rows(self.rows, self.cols, data)
    }

    pub fn scale_rows_cols(&self, row_scale: &[T], col_scale: &[T]) -> Self {
        Self::from_row_fn(self.rows, self.cols, |i, out| {
            let src = self.row(i);
            for j in 0..out.len() {
                out[j] = src[j] * (row_scale[i] * col_scale[j]);
            }
        })
    }

    pub fn map<F: Fn(usize, usize, Complex<T>) -> Complex<T> + Sync>(&self, f: F) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| f(i, j, self[(i, j)]))
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .map(|z| z.norm())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    /// Partial-pivot LU factorisation of a square matrix.
    pub fn lu(&self) -> Result<Lu<T>> {
        if !self.is_square() {
            return Err(Error::Shape(format!(
                "LU needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        Lu::factor(self.clone())
    }
}

impl<T: Real> std::ops::Index<(usize, usize)> for CMatrix<T> {
    type Output = Complex<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T: Real> std::ops::IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factors with row permutation: `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu<T: Real> {
    lu: CMatrix<T>,
    perm: Vec<usize>,
    /// max|u_ii| / min|u_ii|, a cheap conditioning indicator.
    pivot_ratio: T,
}

impl<T: Real> Lu<T> {
    fn factor(mut a: CMatrix<T>) -> Result<Self> {
        let n = a.rows;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].norm();
            for i in k + 1..n {
                let v = a[(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() {
                return Err(Error::Singular(format!("zero pivot in column {k}")));
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = a[(k, j)];
                    a[(k, j)] = a[(p, j)];
                    a[(p, j)] = tmp;
                }
            }
            let pivot = a[(k, k)];
            let (head, tail) = a.data.split_at_mut((k + 1) * n);
            let pivot_row = &head[k * n..(k + 1) * n];
            tail.par_chunks_mut(n).for_each(|row| {
                let f = row[k] / pivot;
                row[k] = f;
                if f.re != T::zero() || f.im != T::zero() {
                    for j in k + 1..n {
                        let u = pivot_row[j];
                        row[j] -= f * u;
                    }
                }
            });
        }
        let mut umax = T::zero();
        let mut umin = T::infinity();
        for i in 0..n {
            let v = a[(i, i)].norm();
            umax = umax.max(v);
            umin = umin.min(v);
        }
        Ok(Self {
            lu: a,
            perm,
            pivot_ratio: umax / umin,
        })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    pub fn pivot_ratio(&self) -> T {
        self.pivot_ratio
    }

    pub fn solve(&self, b: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x: Vec<Complex<T>> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let mut s = x[i];
            for j in 0..i {
                s -= row[j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut s = x[i];
            for j in i + 1..n {
                s -= row[j] * x[j];
            }
            x[i] = s / row[i];
        }
        x
    }

    /// Solves `Aᴴx = b` with the same factors.
    pub fn solve_h(&self, b: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        // PA = LU, so Aᴴ = Uᴴ Lᴴ P.
        let mut y = b.to_vec();
        for j in 0..n {
            let row = self.lu.row(j);
            y[j] = y[j] / row[j].conj();
            let yj = y[j];
            for i in j + 1..n {
                y[i] -= row[i].conj() * yj;
            }
        }
        for j in (0..n).rev() {
            let row = self.lu.row(j);
            let uj = y[j];
            for i in 0..j {
                y[i] -= row[i].conj() * uj;
            }
        }
        let mut x = vec![czero(); n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Solves `A X = B` column by column; `B` is given and returned row-major.
    pub fn solve_matrix(&self, b: &CMatrix<T>) -> CMatrix<T> {
        let n = self.dim();
        assert_eq!(b.rows(), n);
        let bt = b.transpose();
        let cols: Vec<Vec<Complex<T>>> = (0..bt.rows())
            .into_par_iter()
            .map(|c| self.solve(bt.row(c)))
            .collect();
        CMatrix::from_fn(n, b.cols(), |i, j| cols[j][i])
    }

    /// Estimate of the 1-norm condition number using the explicit inverse on
    /// small systems and the pivot ratio otherwise.
    pub fn condition_estimate(&self, a: &CMatrix<T>) -> T {
        let n = self.dim();
        if n > 1200 {
            return self.pivot_ratio;
        }
        let inv = self.solve_matrix(&CMatrix::identity(n));
        one_norm(a) * one_norm(&inv)
    }
}

pub fn one_norm<T: Real>(a: &CMatrix<T>) -> T {
    let mut best = T::zero();
    for j in 0..a.cols() {
        let mut s = T::zero();
        for i in 0..a.rows() {
            s += a[(i, j)].norm();
        }
        best = best.max(s);
    }
    best
}

/// Weighted Euclidean norm (Σ |x_i|² w_i)^{1/2}.
pub fn wnorm<T: Real>(x: &[Complex<T>], w: &[T]) -> T {
    x.iter()
        .zip(w)
        .map(|(a, b)| a.norm_sqr() * *b)
        .sum::<T>()
        .sqrt()
}

/// Weighted inner product Σ x_i conj(y_i) w_i.
pub fn winner<T: Real>(x: &[Complex<T>], y: &[Complex<T>], w: &[T]) -> Complex<T> {
    let mut s = czero();
    for ((a, b), c) in x.iter().zip(y).zip(w) {
        s += *a * b.conj() * *c;
    }
    s
}

pub fn vsub<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Vec<Complex<T>> {
    a.iter().zip(b).map(|(x, y)| *x - *y).collect()
}

pub fn vadd<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Vec<Complex<T>> {
    a.iter().zip(b).map(|(x, y)| *x + *y).collect()
}

/// Outcome of the largest-singular-value iteration.
#[derive(Clone, Debug)]
pub struct PowerIteration<T: Real> {
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest singular value of an operator given by `apply` and its plain
/// (unweighted) conjugate transpose `apply_h`, using power iteration on
/// `AᴴA` from a seeded start vector. Estimates that stay below `floor` are
/// accepted as converged: the relative test is meaningless at round-off.
pub fn largest_singular_value<T, F, G>(
    dim: usize,
    apply: F,
    apply_h: G,
    tol: f64,
    floor: f64,
    max_iter: usize,
    seed: u64,
) -> PowerIteration<T>
where
    T: Real,
    F: Fn(&[Complex<T>]) -> Vec<Complex<T>>,
    G: Fn(&[Complex<T>]) -> Vec<Complex<T>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<Complex<T>> = (0..dim)
        .map(|_| Complex::new(lit(rng.gen_range(-1.0..1.0)), lit(rng.gen_range(-1.0..1.0))))
        .collect();
    let ones = vec![T::one(); dim];
    let nv = wnorm(&v, &ones);
    if nv == T::zero() || dim == 0 {
        return PowerIteration {
            value: T::zero(),
            iterations: 0,
            converged: true,
        };
    }
    v.iter_mut().for_each(|x| *x = *x / nv);
    let mut prev = T::zero();
    for it in 1..=max_iter {
        let av = apply(&v);
        let sigma = wnorm(&av, &ones);
        if sigma == T::zero() {
            return PowerIteration {
                value: T::zero(),
                iterations: it,
                converged: true,
            };
        }
        let mut w = apply_h(&av);
        let nw = wnorm(&w, &ones);
        w.iter_mut().for_each(|x| *x = *x / nw);
        v = w;
        let settled = (sigma - prev).abs() <= lit::<T>(tol) * sigma || (sigma < lit(floor) && prev < lit(floor));
        if it > 2 && settled {
            return PowerIteration {
                value: sigma,
                iterations: it,
                converged: true,
            };
        }
        prev = sigma;
    }
    PowerIteration {
        value: prev,
        iterations: max_iter,
        converged: false,
    }
}

/// Spectral differentiation matrix for `m` equispaced samples of a
/// 2π-periodic function: `D_ij = ½(-1)^{i-j} cot((θ_i-θ_j)/2)` for even `m`,
/// with `csc` in place of `cot` for odd `m`. Even `m` zeroes the `m/2` mode.
pub fn periodic_diff_matrix<T: Real>(m: usize) -> Vec<T> {
    let mut d = vec![T::zero(); m * m];
    let h = T::TAU() / lit(m as f64);
    let half = lit::<T>(0.5);
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let k = i as i64 - j as i64;
            let sign = if k.rem_euclid(2) == 0 { T::one() } else { -T::one() };
            let x = h * lit(k as f64) * half;
            let c = if m % 2 == 0 { x.cos() } else { T::one() };
            d[i * m + j] = half * sign * (c / x.sin());
        }
    }
    d
}
