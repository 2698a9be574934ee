//! Band-diagonal storage and kernels.
//!
//! Factors and Gram matrices in this crate are banded with a handful of
//! diagonals, so everything here stores only the diagonals: an upper
//! triangular matrix with `p` superdiagonals costs `O(n * (p + 1))` memory
//! and all kernels run in `O(n * (p + 1))` flops.

use num_complex::Complex64;
use num_traits::Zero;
use std::ops::{Add, Div, Mul, Sub};

use crate::error::{Error, Result};

/// Scalar that the banded kernels accept: `f64` itself plus complex vectors
/// hit by a real banded matrix.
pub trait BandScalar:
    Copy
    + Zero
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
}

impl BandScalar for f64 {}
impl BandScalar for Complex64 {}

/// Upper triangular square matrix with a fixed number of superdiagonals.
///
/// `bands[d][i]` holds entry `(i, i + d)`, `d = 0..=p`, `i = 0..n - d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedUpper {
    n: usize,
    bands: Vec<Vec<f64>>,
}

impl BandedUpper {
    /// Builds from explicit diagonals; `bands[0]` is the main diagonal.
    pub fn from_bands(n: usize, bands: Vec<Vec<f64>>) -> Result<Self> {
        if bands.is_empty() || bands.len() > n {
            return Err(Error::DimensionMismatch(format!(
                "{} bands for size {n}",
                bands.len()
            )));
        }
        for (d, band) in bands.iter().enumerate() {
            if band.len() != n - d {
                return Err(Error::DimensionMismatch(format!(
                    "band {d} has length {} for size {n}",
                    band.len()
                )));
            }
        }
        Ok(Self { n, bands })
    }

    /// Identity matrix viewed as a banded factor with zero superdiagonals.
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            bands: vec![vec![1.0; n]],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Number of superdiagonals.
    pub fn bandwidth(&self) -> usize {
        self.bands.len() - 1
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if j >= i && j - i < self.bands.len() {
            self.bands[j - i][i]
        } else {
            0.0
        }
    }

    /// `U * x`.
    pub fn matvec<T: BandScalar>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![T::zero(); self.n];
        for (d, band) in self.bands.iter().enumerate() {
            for (i, &c) in band.iter().enumerate() {
                y[i] = y[i] + x[i + d] * c;
            }
        }
        y
    }

    /// `U^T * x`.
    pub fn matvec_transpose<T: BandScalar>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![T::zero(); self.n];
        for (d, band) in self.bands.iter().enumerate() {
            for (i, &c) in band.iter().enumerate() {
                y[i + d] = y[i + d] + x[i] * c;
            }
        }
        y
    }

    /// Solves `U x = b` by back substitution.
    pub fn solve_upper<T: BandScalar>(&self, b: &[T]) -> Result<Vec<T>> {
        assert_eq!(b.len(), self.n);
        let p = self.bandwidth();
        let mut x = vec![T::zero(); self.n];
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for d in 1..=p.min(self.n - 1 - i) {
                s = s - x[i + d] * self.bands[d][i];
            }
            let diag = self.bands[0][i];
            if diag == 0.0 {
                return Err(Error::RankDeficient);
            }
            x[i] = s / diag;
        }
        Ok(x)
    }

    /// Solves `U^T x = b` by forward substitution.
    pub fn solve_transpose<T: BandScalar>(&self, b: &[T]) -> Result<Vec<T>> {
        assert_eq!(b.len(), self.n);
        let p = self.bandwidth();
        let mut x = vec![T::zero(); self.n];
        for i in 0..self.n {
            let mut s = b[i];
            for d in 1..=p.min(i) {
                s = s - x[i - d] * self.bands[d][i - d];
            }
            let diag = self.bands[0][i];
            if diag == 0.0 {
                return Err(Error::RankDeficient);
            }
            x[i] = s / diag;
        }
        Ok(x)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for (d, band) in self.bands.iter().enumerate() {
            for (i, &c) in band.iter().enumerate() {
                m[(i, i + d)] = c;
            }
        }
        m
    }
}

/// Symmetric banded matrix given by its upper diagonals:
/// `bands[d][i]` holds entry `(i, i + d)`.
#[derive(Debug, Clone)]
pub struct SymmetricBanded {
    n: usize,
    bands: Vec<Vec<f64>>,
}

impl SymmetricBanded {
    pub fn from_bands(n: usize, bands: Vec<Vec<f64>>) -> Result<Self> {
        if bands.is_empty() || bands.len() > n {
            return Err(Error::DimensionMismatch(format!(
                "{} bands for size {n}",
                bands.len()
            )));
        }
        for (d, band) in bands.iter().enumerate() {
            if band.len() != n - d {
                return Err(Error::DimensionMismatch(format!(
                    "band {d} has length {} for size {n}",
                    band.len()
                )));
            }
        }
        Ok(Self { n, bands })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.bands.len() - 1
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        if hi - lo < self.bands.len() {
            self.bands[hi - lo][lo]
        } else {
            0.0
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = self.bands[0][i] * x[i];
            for d in 1..self.bands.len() {
                if i + d < self.n {
                    s += self.bands[d][i] * x[i + d];
                }
                if i >= d {
                    s += self.bands[d][i - d] * x[i - d];
                }
            }
            *yi = s;
        }
        y
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for (d, band) in self.bands.iter().enumerate() {
            for (i, &c) in band.iter().enumerate() {
                m[(i, i + d)] = c;
                m[(i + d, i)] = c;
            }
        }
        m
    }

    /// Cholesky factorization `A = U^T U` with `U` upper triangular of the
    /// same bandwidth. Fails when a pivot is not strictly positive, which is
    /// how numerically indefinite Gram matrices surface downstream.
    pub fn cholesky_upper(&self) -> Result<BandedUpper> {
        let n = self.n;
        let m = self.half_bandwidth();
        let mut u: Vec<Vec<f64>> = (0..=m).map(|d| vec![0.0; n - d]).collect();
        for i in 0..n {
            for d in 0..=m.min(n - 1 - i) {
                let j = i + d;
                let mut s = self.bands[d][i];
                // Contributions from rows k < i with both (k, i) and (k, j) in band.
                let k_min = j.saturating_sub(m);
                for k in k_min..i {
                    s -= u[i - k][k] * u[j - k][k];
                }
                if d == 0 {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::CholeskyBreakdown { pivot: i });
                    }
                    u[0][i] = s.sqrt();
                } else {
                    u[d][i] = s / u[0][i];
                }
            }
        }
        BandedUpper::from_bands(n, u)
    }
}
