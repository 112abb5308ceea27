//! Small dense linear algebra for the p×p regression blocks.
//!
//! The dimensions involved are the number of mean covariates, so plain
//! row-major storage and textbook Cholesky are all that is needed. Numerical
//! rank of the design matrix is the one place that needs an SVD; that goes
//! through nalgebra in `f64`.

use crate::error::{Error, Result};
use crate::real::Real;

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> SquareMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            out[(i, i)] = T::one();
        }
        out
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "matrix rows must all have length {dim}"
            )));
        }
        Ok(Self {
            dim,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    /// Gram matrix `Z'Z` of the row vectors `z_1..z_m`, each of length `dim`.
    pub fn gram(rows: &[Vec<T>], dim: usize) -> Self {
        let mut out = Self::zeros(dim);
        for z in rows {
            for j in 0..dim {
                for k in 0..=j {
                    out[(j, k)] = out[(j, k)] + z[j] * z[k];
                }
            }
        }
        for j in 0..dim {
            for k in 0..j {
                out[(k, j)] = out[(j, k)];
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&v| v * factor).collect(),
        }
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.dim)
            .map(|i| crate::real::dot(&self.data[i * self.dim..(i + 1) * self.dim], v))
            .collect()
    }

    /// True when `|A_ij - A_ji| <= tol * max|A|` for every pair.
    pub fn is_symmetric(&self, tol: T) -> bool {
        let scale = self
            .data
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
            .max(T::min_positive_value());
        (0..self.dim).all(|i| {
            (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol * scale)
        })
    }
}

impl<T> std::ops::Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.dim + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.dim + j]
    }
}

/// Lower-triangular factor `L` with `A = L L'`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky<T> {
    lower: SquareMatrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn new(a: &SquareMatrix<T>) -> Result<Self> {
        let n = a.dim();
        let mut l = SquareMatrix::zeros(n);
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag = diag - l[(j, k)] * l[(j, k)];
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return Err(Error::Factorization(format!(
                    "matrix is not positive definite (pivot {j} = {diag})"
                )));
            }
            let d = diag.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &SquareMatrix<T> {
        &self.lower
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.lower.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - self.lower[(i, k)] * y[k];
            }
            y[i] = s / self.lower[(i, i)];
        }
        y
    }

    /// Solves `L' x = y`.
    pub fn solve_upper(&self, y: &[T]) -> Vec<T> {
        let n = self.lower.dim();
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s = s - self.lower[(k, i)] * x[k];
            }
            x[i] = s / self.lower[(i, i)];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `L v`, used to colour standard normal draws.
    pub fn mul_lower(&self, v: &[T]) -> Vec<T> {
        let n = self.lower.dim();
        (0..n)
            .map(|i| (0..=i).fold(T::zero(), |acc, k| acc + self.lower[(i, k)] * v[k]))
            .collect()
    }
}

/// Numerical rank of the `m × p` matrix whose rows are `rows`: the number of
/// singular values above `rel_tol` times the largest one.
pub fn numerical_rank<T: Real>(rows: &[Vec<T>], cols: usize, rel_tol: f64) -> usize {
    if rows.is_empty() || cols == 0 {
        return 0;
    }
    let m = nalgebra::DMatrix::<f64>::from_fn(rows.len(), cols, |i, j| rows[i][j].as_f64());
    let sv = m.singular_values();
    let largest = sv.iter().copied().fold(0.0_f64, f64::max);
    if largest <= 0.0 || !largest.is_finite() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * largest).count()
}
