//! Small dense linear algebra kernel.
//!
//! Everything here operates on desk-scale matrices (a few dozen rows at
//! most), so the implementations favor clarity and determinism over blocking
//! or SIMD. All loops run in a fixed order, which keeps results bit-stable
//! across runs; that property is load-bearing for the reproducibility
//! contract of the CLI artifacts.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::{fl, Scalar};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    /// Builds a matrix from row vectors; all rows must share a length.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    context: format!("Mat::from_rows row {i}"),
                    expected: c,
                    got: row.len(),
                });
            }
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Ok(Mat { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat<S> {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, other.rows, "matmul shape");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == S::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.cols, v.len(), "matvec shape");
        (0..self.rows).map(|i| self.row(i).iter().zip(v).map(|(&a, &x)| a * x).sum()).collect()
    }

    pub fn add(&self, other: &Mat<S>) -> Mat<S> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Mat<S>) -> Mat<S> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: S) -> Mat<S> {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = *v * s;
        }
        out
    }

    fn zip_with(&self, other: &Mat<S>, f: impl Fn(S, S) -> S) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape");
        let mut out = self.clone();
        for (v, &o) in out.data.iter_mut().zip(&other.data) {
            *v = f(*v, o);
        }
        out
    }

    pub fn column_sums(&self) -> Vec<S> {
        let mut sums = vec![S::zero(); self.cols];
        for i in 0..self.rows {
            for (j, s) in sums.iter_mut().enumerate() {
                *s = *s + self[(i, j)];
            }
        }
        sums
    }

    pub fn row_sums(&self) -> Vec<S> {
        (0..self.rows).map(|i| self.row(i).iter().copied().sum()).collect()
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> S {
        self.data.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    /// Spectral norm (largest singular value) by power iteration on AᵀA.
    ///
    /// The starting vector is a fixed ramp rather than random so the result
    /// is deterministic; the ramp is not orthogonal to a dominant singular
    /// vector except on a measure-zero set of matrices, and the iteration
    /// recovers from near-orthogonal starts anyway since components grow
    /// geometrically.
    pub fn spectral_norm(&self) -> S {
        if self.data.iter().all(|v| *v == S::zero()) {
            return S::zero();
        }
        let at = self.transpose();
        let n = self.cols;
        let mut v: Vec<S> =
            (0..n).map(|i| S::one() + fl::<S>(i as f64) / fl::<S>((n + 1) as f64)).collect();
        normalize(&mut v);
        let mut sigma = S::zero();
        for _ in 0..500 {
            let av = self.matvec(&v);
            let mut next = at.matvec(&av);
            let norm = normalize(&mut next);
            if norm == S::zero() {
                // v landed in the null space; restart from a shifted ramp.
                v = (0..n).map(|i| S::one() + fl::<S>((i * i + 1) as f64)).collect();
                normalize(&mut v);
                continue;
            }
            let s = vec_norm(&av);
            let done = (s - sigma).abs() <= fl::<S>(1e-15) * s.max(S::one());
            sigma = s;
            v = next;
            if done {
                break;
            }
        }
        sigma
    }

    /// Upper estimate of the spectral radius via Gelfand's formula,
    /// ρ(A) = lim ‖A^m‖^{1/m}, evaluated at m = 2^16 by repeated squaring.
    ///
    /// The running power is renormalized after every squaring and the scale
    /// is carried in log space, so the estimate survives matrices whose
    /// powers would overflow or underflow long before m is reached. The
    /// result overestimates ρ by at most a factor ‖·‖-vs-ρ gap^{1/m}, which
    /// is far below the guard margins this crate uses.
    pub fn spectral_radius_estimate(&self) -> S {
        assert_eq!(self.rows, self.cols, "spectral radius expects a square matrix");
        let mut p = self.clone();
        // p approximates A^(2^j) / exp(log_scale) with j doublings applied.
        let mut log_scale = 0.0f64;
        let doublings = 16u32;
        for _ in 0..doublings {
            let norm = crate::scalar::as_f64(p.spectral_norm());
            if norm == 0.0 {
                return S::zero();
            }
            p = p.scale(fl(1.0 / norm));
            log_scale += norm.ln();
            p = p.matmul(&p);
            log_scale *= 2.0;
        }
        let final_norm = crate::scalar::as_f64(p.spectral_norm());
        if final_norm == 0.0 {
            return S::zero();
        }
        let m = f64::from(2u32).powi(doublings as i32);
        fl(((final_norm.ln() + log_scale) / m).exp())
    }

    /// Solves A x = b by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[S]) -> Result<Vec<S>> {
        assert_eq!(self.rows, self.cols, "solve expects a square matrix");
        assert_eq!(self.rows, b.len(), "solve rhs length");
        let n = self.rows;
        let mut a = self.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| {
                    a[(p, col)].abs().partial_cmp(&a[(q, col)].abs()).expect("finite pivot")
                })
                .expect("nonempty pivot range");
            let scale = a.max_abs().max(S::one());
            if a[(pivot, col)].abs() <= S::epsilon() * scale * fl::<S>(n as f64) {
                return Err(Error::Singular("gaussian elimination"));
            }
            if pivot != col {
                for j in 0..n {
                    let tmp = a[(col, j)];
                    a[(col, j)] = a[(pivot, j)];
                    a[(pivot, j)] = tmp;
                }
                x.swap(col, pivot);
            }
            for r in col + 1..n {
                let f = a[(r, col)] / a[(col, col)];
                if f == S::zero() {
                    continue;
                }
                for j in col..n {
                    a[(r, j)] = a[(r, j)] - f * a[(col, j)];
                }
                x[r] = x[r] - f * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut acc = x[col];
            for j in col + 1..n {
                acc = acc - a[(col, j)] * x[j];
            }
            x[col] = acc / a[(col, col)];
        }
        Ok(x)
    }

    /// Cholesky factor of a symmetric matrix, or `None` when the matrix is
    /// not positive definite. Used as the definiteness test.
    pub fn cholesky(&self) -> Option<Mat<S>> {
        assert_eq!(self.rows, self.cols, "cholesky expects a square matrix");
        let n = self.rows;
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self[(i, j)];
                for k in 0..j {
                    sum = sum - l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if sum <= S::zero() {
                        return None;
                    }
                    l[(i, i)] = sum.sqrt();
                } else {
                    l[(i, j)] = sum / l[(j, j)];
                }
            }
        }
        Some(l)
    }
}

impl<S: Scalar> Index<(usize, usize)> for Mat<S> {
    type Output = S;

    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S: Scalar> IndexMut<(usize, usize)> for Mat<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

pub fn vec_dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn vec_norm<S: Scalar>(a: &[S]) -> S {
    vec_dot(a, a).sqrt()
}

pub fn vec_sub<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

/// Normalizes `v` in place to unit Euclidean length; returns the old norm.
fn normalize<S: Scalar>(v: &mut [S]) -> S {
    let n = vec_norm(v);
    if n > S::zero() {
        for x in v {
            *x = *x / n;
        }
    }
    n
}
