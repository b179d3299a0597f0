//! Dense complex linear algebra used by the solvers.
//!
//! Matrices are stored row-major. The routines here cover exactly what the
//! transport solvers need: products, the symmetric tridiagonal eigenproblem,
//! a complex Schur decomposition, a Bartels-Stewart Lyapunov solver and a
//! pivoted LU solve for small dense systems.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use num_traits::{Float, Zero};

use crate::error::{Error, Result};

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(*d, 0.0);
        }
        m
    }

    /// Builds a matrix from a row-major element vector.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), rows * cols, "element count does not match shape");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
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

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [Complex64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> Complex64 {
        self.diagonal().into_iter().sum()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: Complex64, other: &CMatrix) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest `|a_ij - conj(a_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Replaces the matrix by its Hermitian part `(A + A^H) / 2`.
    pub fn hermitize(&mut self) {
        for i in 0..self.rows {
            for j in i..self.cols {
                let avg = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
                self[(i, j)] = avg;
                self[(j, i)] = avg.conj();
            }
        }
    }

    /// Copies out the square block `[start, start + len)` on both axes.
    pub fn principal_block(&self, start: usize, len: usize) -> Self {
        Self::from_fn(len, len, |i, j| self[(start + i, start + j)])
    }

    pub fn matmul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, a) in self.row(i).iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^H * rhs` without forming the adjoint.
    pub fn adjoint_matmul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.rows, rhs.rows, "inner dimensions differ");
        let mut out = CMatrix::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let b_row = rhs.row(k);
            for (i, a) in self.row(k).iter().enumerate() {
                let a = a.conj();
                if a.is_zero() {
                    continue;
                }
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * rhs^H` without forming the adjoint.
    pub fn matmul_adjoint(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.cols, "inner dimensions differ");
        let mut out = CMatrix::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..rhs.rows {
                let mut acc = ZERO;
                for (a, b) in a_row.iter().zip(rhs.row(j)) {
                    acc += a * b.conj();
                }
                out.data[i * rhs.rows + j] = acc;
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

/// Eigen-decomposition of a real symmetric tridiagonal matrix.
///
/// `diag` has length n and `offdiag` length n-1. Returns eigenvalues in
/// ascending order and the matching orthonormal eigenvectors, stored so that
/// `vectors[i]` is the i-th eigenvector.
pub fn symmetric_tridiagonal_eigen(diag: &[f64], offdiag: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = diag.len();
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    assert_eq!(offdiag.len() + 1, n, "off-diagonal must have n-1 entries");
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(offdiag);
    // z[row][col], columns are eigenvectors
    let mut z = vec![vec![0.0; n]; n];
    for (i, row) in z.iter_mut().enumerate() {
        row[i] = 1.0;
    }

    // Implicit QL with Wilkinson shifts.
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence("symmetric tridiagonal QL iteration"));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    let zf = row[i + 1];
                    row[i + 1] = s * row[i] + c * zf;
                    row[i] = c * row[i] - s * zf;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&k| d[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = z.iter().map(|row| row[k]).collect();
            // fix the sign so the first significant component is positive
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            v
        })
        .collect();
    Ok((values, vectors))
}

/// Complex Schur form `A = Q T Q^H` with `T` upper triangular and `Q` unitary.
#[derive(Debug, Clone)]
pub struct Schur {
    pub q: CMatrix,
    pub t: CMatrix,
}

impl Schur {
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.t.diagonal()
    }
}

#[inline]
fn abs1(z: Complex64) -> f64 {
    z.re.abs() + z.im.abs()
}

/// Reduces `a` to upper Hessenberg form by Householder reflections,
/// accumulating the unitary transform in `q` (`A = Q H Q^H`).
fn hessenberg(a: &mut CMatrix, q: &mut CMatrix) {
    let n = a.rows();
    let mut v = vec![ZERO; n];
    for k in 0..n.saturating_sub(2) {
        let alpha_norm = (k + 1..n).map(|i| a[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if alpha_norm == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { ONE };
        for i in 0..n {
            v[i] = if i > k { a[(i, k)] } else { ZERO };
        }
        v[k + 1] += phase * alpha_norm;
        let vnorm2: f64 = v[k + 1..].iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        // A <- (I - beta v v^H) A
        for j in k..n {
            let mut s = ZERO;
            for i in k + 1..n {
                s += v[i].conj() * a[(i, j)];
            }
            s *= beta;
            for i in k + 1..n {
                let vi = v[i];
                a[(i, j)] -= vi * s;
            }
        }
        // A <- A (I - beta v v^H), Q <- Q (I - beta v v^H)
        for m in [&mut *a, &mut *q] {
            for i in 0..n {
                let row = m.row_mut(i);
                let mut s = ZERO;
                for j in k + 1..n {
                    s += row[j] * v[j];
                }
                s *= beta;
                for j in k + 1..n {
                    row[j] -= s * v[j].conj();
                }
            }
        }
        for i in k + 2..n {
            a[(i, k)] = ZERO;
        }
    }
}

/// Complex Schur decomposition by Hessenberg reduction followed by shifted QR
/// sweeps with Givens rotations.
pub fn schur(a: &CMatrix) -> Result<Schur> {
    assert!(a.is_square(), "Schur decomposition needs a square matrix");
    let n = a.rows();
    let mut h = a.clone();
    let mut q = CMatrix::identity(n);
    if n <= 1 {
        return Ok(Schur { q, t: h });
    }
    hessenberg(&mut h, &mut q);

    let max_iter = 60 * n;
    let mut hi = n - 1;
    let mut iter_since_deflation = 0usize;
    let mut total_iter = 0usize;
    while hi > 0 {
        let mut l = hi;
        while l > 0 {
            let s = abs1(h[(l - 1, l - 1)]) + abs1(h[(l, l)]);
            let s = if s == 0.0 { h.max_abs() } else { s };
            if abs1(h[(l, l - 1)]) <= f64::EPSILON * s {
                h[(l, l - 1)] = ZERO;
                break;
            }
            l -= 1;
        }
        if l == hi {
            hi -= 1;
            iter_since_deflation = 0;
            continue;
        }
        iter_since_deflation += 1;
        total_iter += 1;
        if total_iter > max_iter {
            return Err(Error::NoConvergence("complex Schur QR iteration"));
        }

        let shift = if iter_since_deflation % 11 == 10 {
            // exceptional shift
            h[(hi, hi)] + Complex64::new(0.75 * abs1(h[(hi, hi - 1)]), 0.0)
        } else {
            let a11 = h[(hi - 1, hi - 1)];
            let a12 = h[(hi - 1, hi)];
            let a21 = h[(hi, hi - 1)];
            let a22 = h[(hi, hi)];
            let half = (a11 - a22) * 0.5;
            let disc = (half * half + a12 * a21).sqrt();
            let mid = (a11 + a22) * 0.5;
            let mu1 = mid + disc;
            let mu2 = mid - disc;
            if (mu1 - a22).norm() <= (mu2 - a22).norm() {
                mu1
            } else {
                mu2
            }
        };

        let mut x = h[(l, l)] - shift;
        let mut y = h[(l + 1, l)];
        for k in l..hi {
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            let (c, s) = if r == 0.0 {
                (1.0, ZERO)
            } else if x.norm() == 0.0 {
                (0.0, y.conj() / y.norm())
            } else {
                let xn = x.norm();
                (xn / r, (x / xn) * y.conj() / r)
            };
            // rows k, k+1
            let col_start = if k > l { k - 1 } else { k };
            {
                let (upper, lower) = h.data.split_at_mut((k + 1) * n);
                let rk = &mut upper[k * n..(k + 1) * n];
                let rk1 = &mut lower[..n];
                for j in col_start..n {
                    let h1 = rk[j];
                    let h2 = rk1[j];
                    rk[j] = h1 * c + s * h2;
                    rk1[j] = -s.conj() * h1 + h2 * c;
                }
            }
            // columns k, k+1
            let row_end = (k + 2).min(hi);
            for i in 0..=row_end {
                let row = h.row_mut(i);
                let h1 = row[k];
                let h2 = row[k + 1];
                row[k] = h1 * c + s.conj() * h2;
                row[k + 1] = -s * h1 + h2 * c;
            }
            for i in 0..n {
                let row = q.row_mut(i);
                let h1 = row[k];
                let h2 = row[k + 1];
                row[k] = h1 * c + s.conj() * h2;
                row[k + 1] = -s * h1 + h2 * c;
            }
            if k + 1 < hi {
                x = h[(k + 1, k)];
                y = h[(k + 2, k)];
            }
        }
    }
    for i in 1..n {
        for j in 0..i {
            h[(i, j)] = ZERO;
        }
    }
    Ok(Schur { q, t: h })
}

/// Solves `A X + X A^H + C = 0` by the Bartels-Stewart method on the complex
/// Schur form of `A`.
///
/// Fails with [`Error::Singular`] when two eigenvalues satisfy
/// `lambda_i + conj(lambda_j) ~ 0`, i.e. `A` is not strictly stable.
pub fn solve_lyapunov(a: &CMatrix, c: &CMatrix) -> Result<CMatrix> {
    let sch = schur(a)?;
    solve_lyapunov_schur(&sch, c)
}

/// Bartels-Stewart back substitution for a precomputed Schur form.
pub fn solve_lyapunov_schur(sch: &Schur, c: &CMatrix) -> Result<CMatrix> {
    let n = sch.t.rows();
    let t = &sch.t;
    // Ct = -Q^H C Q, solve T Y + Y T^H = Ct
    let ct = sch.q.adjoint_matmul(&c.matmul(&sch.q)).scale_real(-1.0);
    let scale = t.max_abs().max(1.0);
    // Y stored column-major for cache-friendly column solves.
    let mut y_cols: Vec<Vec<Complex64>> = vec![Vec::new(); n];
    for j in (0..n).rev() {
        let mut rhs: Vec<Complex64> = (0..n).map(|i| ct[(i, j)]).collect();
        for k in j + 1..n {
            let tjk = t[(j, k)].conj();
            if tjk.is_zero() {
                continue;
            }
            for (r, yk) in rhs.iter_mut().zip(&y_cols[k]) {
                *r -= tjk * yk;
            }
        }
        let shift = t[(j, j)].conj();
        // upper-triangular back substitution with (T + shift I)
        let mut col = vec![ZERO; n];
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            let trow = t.row(i);
            for k in i + 1..n {
                acc -= trow[k] * col[k];
            }
            let pivot = trow[i] + shift;
            if pivot.norm() <= 1e-13 * scale {
                return Err(Error::Singular(
                    "Lyapunov operator has eigenvalue pair with lambda_i + conj(lambda_j) = 0",
                ));
            }
            col[i] = acc / pivot;
        }
        y_cols[j] = col;
    }
    let y = CMatrix::from_fn(n, n, |i, j| y_cols[j][i]);
    Ok(sch.q.matmul(&y).matmul_adjoint(&sch.q))
}

/// Solves `A x = b` for a dense square `A` by LU with partial pivoting.
pub fn lu_solve(a: &CMatrix, b: &[Complex64]) -> Result<Vec<Complex64>> {
    assert!(a.is_square());
    let n = a.rows();
    assert_eq!(b.len(), n);
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, m[(i, k)].norm()))
            .fold((k, -1.0), |acc, it| if it.1 > acc.1 { it } else { acc });
        if pmax <= 1e-14 * scale {
            return Err(Error::Singular("dense linear system is singular"));
        }
        if p != k {
            for j in 0..n {
                m.data.swap(k * n + j, p * n + j);
            }
            x.swap(k, p);
        }
        let pivot = m[(k, k)];
        for i in k + 1..n {
            let f = m[(i, k)] / pivot;
            if f.is_zero() {
                continue;
            }
            m[(i, k)] = ZERO;
            for j in k + 1..n {
                let mk = m[(k, j)];
                m[(i, j)] -= f * mk;
            }
            let xk = x[k];
            x[i] -= f * xk;
        }
    }
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in i + 1..n {
            acc -= m[(i, j)] * x[j];
        }
        x[i] = acc / m[(i, i)];
    }
    Ok(x)
}

/// Solves the linear matrix equation `op(X) = rhs` for an `n x n` unknown,
/// where `op` is any linear map on `n x n` matrices. The operator is
/// assembled column by column from basis matrices, so this is meant for
/// small `n` (the cost is `O(n^6)`).
pub fn solve_superoperator(n: usize, op: impl Fn(&CMatrix) -> CMatrix, rhs: &CMatrix) -> Result<CMatrix> {
    let dim = n * n;
    let mut big = CMatrix::zeros(dim, dim);
    let mut basis = CMatrix::zeros(n, n);
    for col in 0..dim {
        basis.data[col] = ONE;
        let image = op(&basis);
        basis.data[col] = ZERO;
        for (row, v) in image.data.iter().enumerate() {
            big[(row, col)] = *v;
        }
    }
    let x = lu_solve(&big, &rhs.data)?;
    Ok(CMatrix::from_vec(n, n, x))
}
