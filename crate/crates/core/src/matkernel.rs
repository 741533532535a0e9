//! Small dense matrix kernel.
//!
//! Everything in this crate works in state dimensions of 2 to 6, so the
//! kernel favours accuracy and determinism over asymptotic speed: symmetric
//! matrices are stored once in packed lower-triangular form, the
//! eigendecomposition is cyclic Jacobi, and inverses go through Cholesky.

use std::fmt;
use std::ops::{Add, Index, Mul, Sub};

use crate::error::{Error, Result};

/// Absolute floor used by rank tests so that the zero matrix has rank 0.
pub const RANK_FLOOR: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense row-major matrix, used for dynamics and observation models.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err(Error::invalid("matrix must have at least one row and column"));
        }
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::invalid("ragged matrix rows"));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.concat(),
        })
    }

    /// Planar rotation by `angle` radians.
    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rows: 2,
            cols: 2,
            data: vec![c, -s, s, c],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|k| self.get(i, k) * other.get(k, j)).sum()
        })
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mul_vec dimension mismatch");
        (0..self.rows)
            .map(|i| dot(&self.data[i * self.cols..(i + 1) * self.cols], v))
            .collect()
    }

    /// `selfᵀ · v`
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "tr_mul_vec dimension mismatch");
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j) * v[i]).sum())
            .collect()
    }

    /// `self · s · selfᵀ`, symmetric by construction.
    pub fn congruence(&self, s: &SymMatrix) -> SymMatrix {
        assert_eq!(self.cols, s.dim(), "congruence dimension mismatch");
        let ms = Matrix::from_fn(self.rows, s.dim(), |i, j| {
            (0..s.dim()).map(|k| self.get(i, k) * s.get(k, j)).sum()
        });
        SymMatrix::from_fn(self.rows, |i, j| {
            (0..s.dim()).map(|k| ms.get(i, k) * self.get(j, k)).sum()
        })
    }

    /// `selfᵀ · s · self`, symmetric by construction.
    pub fn tr_congruence(&self, s: &SymMatrix) -> SymMatrix {
        self.transpose().congruence(s)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

/// Dense symmetric matrix stored once as its packed lower triangle.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    packed: Vec<f64>,
}

#[inline]
fn packed_index(i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    r * (r + 1) / 2 + c
}

impl SymMatrix {
    /// # Panics
    /// If `dim == 0`.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        Self {
            dim,
            packed: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, s);
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Builds the matrix from its lower triangle; `f` is called with `i >= j`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        let mut packed = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in 0..=i {
                packed.push(f(i, j));
            }
        }
        Self { dim, packed }
    }

    /// Builds from full rows, averaging the two triangles.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("SymMatrix dimension must be at least 1"));
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("SymMatrix rows must form a square matrix"));
        }
        Ok(Self::from_fn(n, |i, j| 0.5 * (rows[i][j] + rows[j][i])))
    }

    /// Symmetric part of a square dense matrix.
    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        if m.rows() != m.cols() || m.rows() == 0 {
            return Err(Error::invalid("SymMatrix requires a non-empty square matrix"));
        }
        Ok(Self::from_fn(m.rows(), |i, j| 0.5 * (m.get(i, j) + m.get(j, i))))
    }

    /// `v · vᵀ`
    pub fn outer(v: &[f64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[packed_index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.packed[packed_index(i, j)] = v;
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let v = self.get(i, j);
                s += v * v;
            }
        }
        s.sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.packed.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            packed: self.packed.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += a · other`
    pub fn axpy(&mut self, a: f64, other: &SymMatrix) {
        assert_eq!(self.dim, other.dim, "axpy dimension mismatch");
        for (x, y) in self.packed.iter_mut().zip(&other.packed) {
            *x += a * y;
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.dim, v.len(), "mul_vec dimension mismatch");
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn matmul(&self, other: &SymMatrix) -> Matrix {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        Matrix::from_fn(self.dim, self.dim, |i, j| {
            (0..self.dim).map(|k| self.get(i, k) * other.get(k, j)).sum()
        })
    }

    /// `vᵀ · self · v`
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.mul_vec(v))
    }

    /// `Tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim, "trace_product dimension mismatch");
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.get(i, j) * other.get(j, i);
            }
        }
        s
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigen_sym(self).values[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *eigen_sym(self).values.last().expect("dim >= 1")
    }

    pub fn is_finite(&self) -> bool {
        self.packed.iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<f64>> = (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect();
        f.debug_struct("SymMatrix").field("rows", &rows).finish()
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;

    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;

    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;

    fn mul(self, rhs: f64) -> SymMatrix {
        self.scale(rhs)
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.packed[packed_index(i, j)]
    }
}

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = m + jitter·I`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L·Lᵀ·x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let y = self.solve_lower(b);
        self.solve_upper(&y)
    }

    /// Solves `L·y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l.get(i, k) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        y
    }

    /// Solves `Lᵀ·x = y`.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l.get(k, i) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
        x
    }

    pub fn inverse(&self) -> SymMatrix {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for (i, v) in col.into_iter().enumerate() {
                inv.set(i, j, v);
            }
        }
        SymMatrix::from_matrix(&inv).expect("square")
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l.get(i, i).ln()).sum::<f64>()
    }
}

/// Cholesky factorization of `m + jitter·I`; `None` when that matrix is not
/// positive definite. Indefinite input is a verdict, not an error.
pub fn cholesky_psd(m: &SymMatrix, jitter: f64) -> Option<Cholesky> {
    let n = m.dim();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m.get(j, j) + jitter;
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l.set(j, j, djj);
        for i in j + 1..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / djj);
        }
    }
    Some(Cholesky { l })
}

/// Upper-triangular `R` (`cols × cols`) of a Householder QR of a tall matrix,
/// so that `RᵀR = MᵀM` without forming the product.
pub fn qr_r(m: &Matrix) -> Matrix {
    let (rows, cols) = (m.rows(), m.cols());
    assert!(rows >= cols, "qr_r needs rows >= cols");
    let mut a = m.clone();
    for k in 0..cols {
        let norm = (k..rows).map(|i| a.get(i, k).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a.get(k, k) > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..rows).map(|i| a.get(i, k)).collect();
        v[0] -= alpha;
        let vnorm_sq = norm_sq(&v);
        if vnorm_sq == 0.0 {
            continue;
        }
        for j in k..cols {
            let proj = (k..rows).map(|i| v[i - k] * a.get(i, j)).sum::<f64>() * 2.0 / vnorm_sq;
            for i in k..rows {
                a.set(i, j, a.get(i, j) - proj * v[i - k]);
            }
        }
    }
    Matrix::from_fn(cols, cols, |i, j| if j >= i { a.get(i, j) } else { 0.0 })
}

/// Inverse of a positive-definite matrix.
pub fn sym_inverse(m: &SymMatrix) -> Result<SymMatrix> {
    match cholesky_psd(m, 0.0) {
        Some(ch) => Ok(ch.inverse()),
        None => Err(Error::SingularMatrix {
            min_eigenvalue: m.min_eigenvalue(),
        }),
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvector
/// columns.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }

    /// `V · diag(f(λ)) · Vᵀ`
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        SymMatrix::from_fn(n, |i, j| {
            (0..n)
                .map(|k| self.vectors.get(i, k) * fv[k] * self.vectors.get(j, k))
                .sum()
        })
    }
}

/// Cyclic Jacobi eigendecomposition.
pub fn eigen_sym(m: &SymMatrix) -> SymEigen {
    let n = m.dim();
    let mut a = m.to_matrix();
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();

    for sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a.get(p, q) * a.get(p, q);
            }
        }
        if off == 0.0 || off.sqrt() <= 1e-300_f64.max(f64::EPSILON * f64::EPSILON * scale) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                // negligible against both diagonal entries: drop it
                let g = 100.0 * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a.set(p, q, 0.0);
                    a.set(q, p, 0.0);
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, n, |i, k| v.get(i, order[k]));
    SymEigen { values, vectors }
}

/// Number of eigenvalues strictly above `rel_tol · max(λ_max, RANK_FLOOR)`.
pub fn numerical_rank(m: &SymMatrix, rel_tol: f64) -> usize {
    let eig = eigen_sym(m);
    let lmax = eig.values.last().copied().unwrap_or(0.0);
    let threshold = rel_tol * lmax.max(RANK_FLOOR);
    eig.values.iter().filter(|&&v| v > threshold).count()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn vec_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn vec_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn vec_scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `acc += s · a`
pub fn vec_axpy(acc: &mut [f64], s: f64, a: &[f64]) {
    for (x, y) in acc.iter_mut().zip(a) {
        *x += s * y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn random_pd(dim: usize, seed: &[f64]) -> SymMatrix {
        // B·Bᵀ + 0.5·I from a flat vector of entries
        let b = Matrix::from_fn(dim, dim, |i, j| seed[(i * dim + j) % seed.len()]);
        let mut m = b.congruence(&SymMatrix::identity(dim));
        m.axpy(0.5, &SymMatrix::identity(dim));
        m
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let ch = cholesky_psd(&SymMatrix::identity(2), 0.0).unwrap();
        assert_eq!(ch.factor(), &Matrix::identity(2));

        let ch = cholesky_psd(&SymMatrix::from_diag(&[4.0, 1.0]), 0.0).unwrap();
        assert_eq!(ch.factor().get(0, 0), 2.0);
        assert_eq!(ch.factor().get(1, 1), 1.0);
        assert_eq!(ch.factor().get(1, 0), 0.0);
    }

    #[test]
    fn cholesky_indefinite_is_a_verdict() {
        assert!(cholesky_psd(&SymMatrix::from_diag(&[1.0, -1.0]), 0.0).is_none());
        // jitter lifts a PSD matrix into PD
        let z = SymMatrix::zeros(2);
        assert!(cholesky_psd(&z, 0.0).is_none());
        assert!(cholesky_psd(&z, 1e-6).is_some());
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(SymMatrix::from_rows(&[]).is_err());
        assert!(Matrix::from_rows(&[]).is_err());
    }

    #[test]
    fn inverse_examples() {
        let inv = sym_inverse(&SymMatrix::identity(2)).unwrap();
        assert_eq!(inv, SymMatrix::identity(2));

        let inv = sym_inverse(&SymMatrix::from_diag(&[2.0, 4.0])).unwrap();
        assert!(close(inv.get(0, 0), 0.5, 1e-15) && close(inv.get(1, 1), 0.25, 1e-15));

        let m = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let inv = sym_inverse(&m).unwrap();
        assert!(close(inv.get(0, 0), 2.0 / 3.0, 1e-14));
        assert!(close(inv.get(0, 1), -1.0 / 3.0, 1e-14));
        assert!(close(inv.get(1, 1), 2.0 / 3.0, 1e-14));
    }

    #[test]
    fn inverse_of_singular_reports_min_eigenvalue() {
        let m = SymMatrix::from_diag(&[1.0, -2.0]);
        match sym_inverse(&m) {
            Err(Error::SingularMatrix { min_eigenvalue }) => {
                assert!(close(min_eigenvalue, -2.0, 1e-12))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn eigen_examples() {
        let e = eigen_sym(&SymMatrix::from_diag(&[3.0, 1.0]));
        assert_eq!(e.values, vec![1.0, 3.0]);

        let e = eigen_sym(&SymMatrix::identity(3));
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);

        let m = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = eigen_sym(&m);
        assert!(close(e.values[0], 1.0, 1e-14) && close(e.values[1], 3.0, 1e-14));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&SymMatrix::zeros(2), 1e-6), 0);
        assert_eq!(numerical_rank(&SymMatrix::outer(&[1.0, 1.0]), 1e-6), 1);
        assert_eq!(numerical_rank(&SymMatrix::from_diag(&[1.0, 1e-9]), 1e-6), 1);
        assert_eq!(numerical_rank(&SymMatrix::from_diag(&[1.0, 1e-3]), 1e-6), 2);
    }

    #[test]
    fn congruence_matches_dense_product() {
        let a = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p = a.congruence(&SymMatrix::identity(2));
        assert_eq!(p, SymMatrix::from_diag(&[4.0, 1.0]));
        let h = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let u = h.tr_congruence(&SymMatrix::from_diag(&[0.5]));
        assert_eq!(u.get(0, 1), 1.0);
        assert_eq!(u.get(1, 1), 2.0);
    }

    #[test]
    fn qr_r_reproduces_gram() {
        let m = Matrix::from_rows(&[
            vec![1.0, 2.0, 0.5],
            vec![-1.0, 0.0, 3.0],
            vec![4.0, 1.0, 1.0],
            vec![0.0, -2.0, 2.0],
        ])
        .unwrap();
        let r = qr_r(&m);
        let lhs = r.transpose().matmul(&r);
        let rhs = m.transpose().matmul(&m);
        for i in 0..3 {
            for j in 0..3 {
                assert!((lhs.get(i, j) - rhs.get(i, j)).abs() < 1e-12);
                if j < i {
                    assert_eq!(r.get(i, j), 0.0);
                }
            }
        }
    }

    fn pd_strategy() -> impl Strategy<Value = SymMatrix> {
        (2usize..=6, prop::collection::vec(-2.0f64..2.0, 36))
            .prop_map(|(dim, entries)| random_pd(dim, &entries))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn double_inverse_round_trips(m in pd_strategy()) {
            let back = sym_inverse(&sym_inverse(&m).unwrap()).unwrap();
            let rel = (&back - &m).frobenius_norm() / m.frobenius_norm();
            prop_assert!(rel <= 1e-8, "relative error {rel}");
        }

        #[test]
        fn inverse_residual_small(m in pd_strategy()) {
            let inv = sym_inverse(&m).unwrap();
            let prod = m.matmul(&inv);
            for i in 0..m.dim() {
                for j in 0..m.dim() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((prod.get(i, j) - target).abs() <= 1e-10);
                }
            }
        }

        #[test]
        fn eigen_reconstructs(m in pd_strategy(), shift in -5.0f64..5.0) {
            let mut m = m;
            m.axpy(shift, &SymMatrix::identity(m.dim()));
            let e = eigen_sym(&m);
            let fro = m.frobenius_norm();
            let back = e.map_values(|v| v);
            prop_assert!((&back - &m).frobenius_norm() <= 1e-9 * fro);
            prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
            let vtv = e.vectors.transpose().matmul(&e.vectors);
            for i in 0..m.dim() {
                for j in 0..m.dim() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((vtv.get(i, j) - target).abs() <= 1e-10);
                }
                let v = e.vector(i);
                let mv = m.mul_vec(&v);
                let resid: f64 = mv.iter().zip(&v).map(|(a, b)| (a - e.values[i] * b).powi(2)).sum::<f64>().sqrt();
                prop_assert!(resid <= 1e-9 * fro);
            }
        }

        #[test]
        fn outer_product_has_rank_one(v in prop::collection::vec(-10.0f64..10.0, 2..=6)) {
            prop_assume!(norm_sq(&v) > 1e-6);
            prop_assert_eq!(numerical_rank(&SymMatrix::outer(&v), 1e-6), 1);
        }
    }
}
