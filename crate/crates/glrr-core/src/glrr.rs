//! Generalized linear recurrence relations and the band operator `Q(a)`.
//!
//! A nonzero coefficient vector `a` of length `r + 1` governs the series
//! `S` when every length-`r + 1` window of `S` is annihilated:
//! `sum_k a_k s_{i+k} = 0` for all window positions `i`. Stacking the
//! windows gives the `(N - r) x N` band matrix `Q^T(a)`; the solution set
//! `Z(a)` is an `r`-dimensional subspace of series space. Unlike an
//! ordinary recurrence, the first or last coefficient may vanish.
//!
//! All indices in this module are 0-based; in particular the insertion
//! position `tau` runs over `0..=r`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{trajectory_of_slice, Signal};

/// Coefficient vector of a GLRR: nonzero, length `r + 1` with order `r >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GlrrVector {
    coeffs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for GlrrVector {
    type Error = Error;
    fn try_from(coeffs: Vec<f64>) -> Result<Self> {
        Self::new(coeffs)
    }
}

impl From<GlrrVector> for Vec<f64> {
    fn from(a: GlrrVector) -> Self {
        a.coeffs
    }
}

impl GlrrVector {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "GLRR vector needs order >= 1, got {} coefficients",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(
                "GLRR vector contains a non-finite coefficient".into(),
            ));
        }
        if coeffs.iter().all(|&c| c == 0.0) {
            return Err(Error::ZeroVector);
        }
        Ok(Self { coeffs })
    }

    /// Order `r`; the vector has `r + 1` entries.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

/// Reduced coefficients: the `r` free entries left after pinning `-1` at
/// position `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedGlrr {
    pub dot_a: Vec<f64>,
    pub tau: usize,
}

impl ReducedGlrr {
    pub fn new(dot_a: Vec<f64>, tau: usize) -> Result<Self> {
        if dot_a.is_empty() {
            return Err(Error::InvalidInput(
                "reduced GLRR must have order >= 1".into(),
            ));
        }
        if tau > dot_a.len() {
            return Err(Error::TauOutOfRange {
                tau,
                r: dot_a.len(),
            });
        }
        Ok(Self { dot_a, tau })
    }

    pub fn order(&self) -> usize {
        self.dot_a.len()
    }
}

/// The two size-`r` index sets of the local parameterization (0-based):
/// `boundary` selects the series samples that act as boundary data,
/// `mask` selects the free coefficient positions.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSets {
    pub boundary: Vec<usize>,
    pub mask: Vec<usize>,
}

/// Boundary/mask index sets for insertion position `tau` (0-based):
/// `boundary = {0..n} \ {tau..n-r+tau}`, `mask = {0..=r} \ {tau}`.
pub fn index_sets(tau: usize, n: usize, r: usize) -> Result<IndexSets> {
    if tau > r {
        return Err(Error::TauOutOfRange { tau, r });
    }
    if n < 2 * r {
        return Err(Error::SeriesTooShort { n, r });
    }
    let boundary = (0..tau).chain(n - r + tau..n).collect();
    let mask = (0..=r).filter(|&k| k != tau).collect();
    Ok(IndexSets { boundary, mask })
}

/// Inserts `-1` at position `tau` of the reduced coefficients.
pub fn h_tau(reduced: &ReducedGlrr) -> GlrrVector {
    let mut coeffs = Vec::with_capacity(reduced.dot_a.len() + 1);
    coeffs.extend_from_slice(&reduced.dot_a[..reduced.tau]);
    coeffs.push(-1.0);
    coeffs.extend_from_slice(&reduced.dot_a[reduced.tau..]);
    GlrrVector { coeffs }
}

/// Removes position `tau`; requires the pinned `-1` to be there.
pub fn h_tau_inverse(a: &GlrrVector, tau: usize) -> Result<ReducedGlrr> {
    let r = a.order();
    if tau > r {
        return Err(Error::TauOutOfRange { tau, r });
    }
    if a.coeffs[tau] != -1.0 {
        return Err(Error::NotNormalized {
            index: tau,
            value: a.coeffs[tau],
        });
    }
    let mut dot_a = a.coeffs.clone();
    dot_a.remove(tau);
    ReducedGlrr::new(dot_a, tau)
}

/// Picks `tau` as the first index of maximal magnitude and rescales so that
/// the entry there becomes exactly `-1` (all others end up in `[-1, 1]`).
pub fn choose_tau_and_normalize(b: &GlrrVector) -> Result<(GlrrVector, usize)> {
    let mut tau = 0;
    let mut best = 0.0_f64;
    for (i, &c) in b.coeffs.iter().enumerate() {
        if c.abs() > best {
            best = c.abs();
            tau = i;
        }
    }
    if best == 0.0 {
        return Err(Error::ZeroVector);
    }
    let scale = -1.0 / b.coeffs[tau];
    let mut coeffs: Vec<f64> = b.coeffs.iter().map(|&c| c * scale).collect();
    // Pin the pivot exactly; the multiplication above can be off by an ulp.
    coeffs[tau] = -1.0;
    Ok((GlrrVector { coeffs }, tau))
}

/// Dense `(N - r) x N` matrix `Q^T(a)`: row `i` carries the coefficients
/// starting at column `i`.
pub fn q_transpose_matrix(a: &GlrrVector, n: usize) -> Result<DMatrix<f64>> {
    let r = a.order();
    if n <= r {
        return Err(Error::SeriesTooShort { n, r });
    }
    let mut m = DMatrix::zeros(n - r, n);
    for i in 0..n - r {
        for (k, &c) in a.coeffs.iter().enumerate() {
            m[(i, i + k)] = c;
        }
    }
    Ok(m)
}

/// `Q^T(a) x` without materializing the matrix: sliding correlation of the
/// coefficients with `x`.
pub fn q_transpose_apply(coeffs: &[f64], x: &[f64]) -> Vec<f64> {
    let r = coeffs.len() - 1;
    let m = x.len() - r;
    (0..m)
        .map(|i| coeffs.iter().enumerate().map(|(k, &c)| c * x[i + k]).sum())
        .collect()
}

/// Complex-vector variant of [`q_transpose_apply`] with real coefficients.
pub fn q_transpose_apply_complex(coeffs: &[f64], x: &[Complex64]) -> Vec<Complex64> {
    let r = coeffs.len() - 1;
    let m = x.len() - r;
    (0..m)
        .map(|i| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| x[i + k] * c)
                .fold(Complex64::ZERO, |acc, v| acc + v)
        })
        .collect()
}

/// `Q(a) y` without materializing the matrix: adjoint of the correlation,
/// scattering each `y_i` across window `i`.
pub fn q_apply(coeffs: &[f64], y: &[f64]) -> Vec<f64> {
    let r = coeffs.len() - 1;
    let n = y.len() + r;
    let mut out = vec![0.0; n];
    for (i, &v) in y.iter().enumerate() {
        for (k, &c) in coeffs.iter().enumerate() {
            out[i + k] += c * v;
        }
    }
    out
}

/// `||Q^T(a) S||_2`; zero exactly when `S` lies in `Z(a)`.
pub fn glrr_residual(series: &Signal, a: &GlrrVector) -> Result<f64> {
    let n = series.len();
    let r = a.order();
    if n <= r {
        return Err(Error::SeriesTooShort { n, r });
    }
    let v = q_transpose_apply(a.coeffs(), series.values());
    Ok(v.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Residual of the window formulation `a^T T_{r+1}(S)`; agrees with
/// [`glrr_residual`] and exists as the second algebraic route for tests.
pub fn glrr_residual_trajectory(series: &Signal, a: &GlrrVector) -> Result<f64> {
    let n = series.len();
    let r = a.order();
    if n <= r {
        return Err(Error::SeriesTooShort { n, r });
    }
    let traj = trajectory_of_slice(series.values(), r + 1);
    let av = nalgebra::DVector::from_column_slice(a.coeffs());
    Ok((traj.transpose() * av).norm())
}

/// Acyclic convolution of `a` with itself; the result has order `2r` and
/// its subspace `Z(a^2)` is the tangent space of the rank-`r` set at any
/// point governed by `a`.
pub fn acyclic_square(a: &GlrrVector) -> GlrrVector {
    let c = &a.coeffs;
    let mut out = vec![0.0; 2 * c.len() - 1];
    for (i, &ai) in c.iter().enumerate() {
        for (j, &aj) in c.iter().enumerate() {
            out[i + j] += ai * aj;
        }
    }
    GlrrVector { coeffs: out }
}
