//! Small dense linear algebra: the handful of routines the estimators,
//! the design solver and PCA need. Matrices here are at most a few dozen
//! rows wide, so everything is plain row-major storage and textbook loops.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Domain(format!(
                    "row {i} has length {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns<R: AsRef<[T]>>(cols: &[R]) -> Result<Self> {
        Ok(Self::from_rows(cols)?.transpose())
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.rows_iter().map(|r| r.to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Domain(format!(
                "shape mismatch: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        self.rows_iter().map(|r| dot(r, v)).collect()
    }

    /// `vᵀ M v`.
    pub fn quadratic_form(&self, v: &[T]) -> T {
        dot(v, &self.matvec(v))
    }

    pub fn max_abs_diff(&self, other: &Matrix<T>) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    ///
    /// Eigenvalues are returned in descending order; column `k` of the
    /// returned matrix is the eigenvector for eigenvalue `k`.
    pub fn symmetric_eigen(&self) -> Result<(Vec<T>, Matrix<T>)> {
        if self.rows != self.cols {
            return Err(Error::Domain(
                "eigen-decomposition of a non-square matrix".into(),
            ));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut v = Self::identity(n);
        let scale = self.frobenius_norm();
        const MAX_SWEEPS: usize = 100;

        let mut converged = n < 2 || scale == T::zero();
        for _ in 0..MAX_SWEEPS {
            if converged {
                break;
            }
            let mut rotated = false;
            for p in 0..n - 1 {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    // Negligible against both diagonal entries: drop it.
                    let small = T::epsilon() * T::lit(0.5) * (a[(p, p)].abs() + a[(q, q)].abs());
                    if apq.abs() <= small.max(T::min_positive_value()) {
                        a[(p, q)] = T::zero();
                        a[(q, p)] = T::zero();
                        continue;
                    }
                    rotated = true;
                    let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                    let t = if theta.is_infinite() {
                        T::zero()
                    } else {
                        let sign = if theta < T::zero() {
                            -T::one()
                        } else {
                            T::one()
                        };
                        sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                    };
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
            converged = !rotated;
        }
        if !converged {
            return Err(Error::Numerical(format!(
                "Jacobi eigen-solver did not converge in {MAX_SWEEPS} sweeps"
            )));
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            a[(j, j)]
                .partial_cmp(&a[(i, i)])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(i.cmp(&j))
        });
        let values = order.iter().map(|&i| a[(i, i)]).collect();
        let mut vectors = Self::zeros(n, n);
        for (new, &old) in order.iter().enumerate() {
            for k in 0..n {
                vectors[(k, new)] = v[(k, old)];
            }
        }
        Ok((values, vectors))
    }

    /// Inverse of a symmetric positive-definite matrix through its
    /// eigen-decomposition, refusing systems whose condition number exceeds
    /// [`Scalar::MAX_CONDITION`].
    pub fn spd_inverse(&self) -> Result<Matrix<T>> {
        let (values, vectors) = self.symmetric_eigen()?;
        let n = self.rows;
        if n == 0 {
            return Ok(Self::zeros(0, 0));
        }
        let largest = values[0];
        let smallest = values[n - 1];
        if !(smallest > T::zero()) || largest / smallest > T::lit(T::MAX_CONDITION) {
            return Err(Error::Numerical(format!(
                "matrix is numerically singular (eigenvalues in [{smallest}, {largest}])"
            )));
        }
        let mut out = Self::zeros(n, n);
        for k in 0..n {
            let inv = T::one() / values[k];
            for i in 0..n {
                let vik = vectors[(i, k)] * inv;
                for j in 0..n {
                    out[(i, j)] += vik * vectors[(j, k)];
                }
            }
        }
        Ok(out)
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Greedy Gram–Schmidt scan: returns the positions (into `vectors`) of a
/// maximal linearly independent subset, taking vectors in the given order
/// and keeping one whenever its residual against the kept ones exceeds
/// [`Scalar::RANK_TOL`] relative to `max(1, ‖v‖)`.
pub fn greedy_basis<T: Scalar, V: AsRef<[T]>>(vectors: &[V]) -> Vec<usize> {
    gram_schmidt(vectors).0
}

/// Orthonormal basis of the span of `vectors`, built by the same scan as
/// [`greedy_basis`].
pub fn orthonormal_basis<T: Scalar, V: AsRef<[T]>>(vectors: &[V]) -> Vec<Vec<T>> {
    gram_schmidt(vectors).1
}

fn gram_schmidt<T: Scalar, V: AsRef<[T]>>(vectors: &[V]) -> (Vec<usize>, Vec<Vec<T>>) {
    let mut orthonormal: Vec<Vec<T>> = Vec::new();
    let mut picked = Vec::new();
    let tol = T::lit(T::RANK_TOL);
    for (idx, v) in vectors.iter().enumerate() {
        let v = v.as_ref();
        let mut residual = v.to_vec();
        // Two passes of modified Gram–Schmidt keep the residual accurate.
        for _ in 0..2 {
            for q in &orthonormal {
                let c = dot(&residual, q);
                for (r, &qi) in residual.iter_mut().zip(q) {
                    *r -= c * qi;
                }
            }
        }
        let rn = norm(&residual);
        if rn > tol * norm(v).max(T::one()) {
            residual.iter_mut().for_each(|r| *r /= rn);
            orthonormal.push(residual);
            picked.push(idx);
        }
    }
    (picked, orthonormal)
}
