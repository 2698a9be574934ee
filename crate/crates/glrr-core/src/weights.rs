//! Symmetric positive definite weight operators in banded Cholesky form.
//!
//! A weight `W` enters every norm and projection in this crate. It is
//! carried either as `W = C^T C` with a banded upper triangular `C`
//! ("banded W", the natural form when the noise precision is banded) or as
//! `W^{-1} = Chat^T Chat` ("banded W inverse", the form the fast Gram-matrix
//! route needs). The identity is the shared `p = 0` special case of both.

use num_complex::Complex64;

use crate::banded::{BandScalar, BandedUpper, SymmetricBanded};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Identity,
    /// `W = C^T C` banded.
    BandedW,
    /// `W^{-1} = Chat^T Chat` banded.
    BandedWInverse,
}

/// SPD weight matrix held through a banded upper triangular Cholesky factor.
#[derive(Debug, Clone)]
pub struct WeightOperator {
    kind: WeightKind,
    factor: BandedUpper,
}

impl WeightOperator {
    pub fn identity(n: usize) -> Self {
        Self {
            kind: WeightKind::Identity,
            factor: BandedUpper::identity(n),
        }
    }

    /// Wraps a factor `C` with `W = C^T C`; an exact identity factor
    /// collapses to the identity kind.
    pub fn banded_w(factor: BandedUpper) -> Self {
        Self {
            kind: if factor_is_identity(&factor) {
                WeightKind::Identity
            } else {
                WeightKind::BandedW
            },
            factor,
        }
    }

    /// Wraps a factor `Chat` with `W^{-1} = Chat^T Chat`; an exact identity
    /// factor collapses to the identity kind.
    pub fn banded_w_inverse(factor: BandedUpper) -> Self {
        Self {
            kind: if factor_is_identity(&factor) {
                WeightKind::Identity
            } else {
                WeightKind::BandedWInverse
            },
            factor,
        }
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.factor.size()
    }

    /// Bandwidth `p` of the stored factor.
    pub fn bandwidth(&self) -> usize {
        self.factor.bandwidth()
    }

    pub fn factor(&self) -> &BandedUpper {
        &self.factor
    }

    /// Whether `W^{-1}` itself is banded, i.e. the Gram-matrix route stays
    /// banded and fast.
    pub fn inverse_is_banded(&self) -> bool {
        matches!(self.kind, WeightKind::Identity | WeightKind::BandedWInverse)
    }

    /// Half-weight application `H x` with `||H x||_2 = ||x||_W`:
    /// `C x` for banded `W`, the triangular solve `Chat^{-T} x` for banded
    /// `W^{-1}`, and a copy for the identity.
    pub fn half_apply<T: BandScalar>(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_len(x.len())?;
        match self.kind {
            WeightKind::Identity => Ok(x.to_vec()),
            WeightKind::BandedW => Ok(self.factor.matvec(x)),
            WeightKind::BandedWInverse => self.factor.solve_transpose(x),
        }
    }

    /// `W x`.
    pub fn apply_w<T: BandScalar>(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_len(x.len())?;
        match self.kind {
            WeightKind::Identity => Ok(x.to_vec()),
            WeightKind::BandedW => {
                let cx = self.factor.matvec(x);
                Ok(self.factor.matvec_transpose(&cx))
            }
            WeightKind::BandedWInverse => {
                // W = (Chat^T Chat)^{-1}
                let u = self.factor.solve_transpose(x)?;
                self.factor.solve_upper(&u)
            }
        }
    }

    /// `W^{-1} x`.
    pub fn apply_w_inverse<T: BandScalar>(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_len(x.len())?;
        match self.kind {
            WeightKind::Identity => Ok(x.to_vec()),
            WeightKind::BandedW => {
                // W^{-1} = C^{-1} C^{-T}
                let u = self.factor.solve_transpose(x)?;
                self.factor.solve_upper(&u)
            }
            WeightKind::BandedWInverse => {
                let cx = self.factor.matvec(x);
                Ok(self.factor.matvec_transpose(&cx))
            }
        }
    }

    /// Weighted norm `||x||_W = sqrt(x^T W x)`.
    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        let h = self.half_apply(x)?;
        Ok(h.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// Weighted inner product `<x, y>_W`.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let wx = self.apply_w(x)?;
        Ok(wx.iter().zip(y).map(|(a, b)| a * b).sum())
    }

    /// Dense `W`; intended for oracles and small sizes only.
    pub fn to_dense_w(&self) -> nalgebra::DMatrix<f64> {
        let n = self.size();
        match self.kind {
            WeightKind::Identity => nalgebra::DMatrix::identity(n, n),
            WeightKind::BandedW => {
                let c = self.factor.to_dense();
                c.transpose() * c
            }
            WeightKind::BandedWInverse => {
                let c = self.factor.to_dense();
                (c.transpose() * c)
                    .try_inverse()
                    .expect("Cholesky factor is invertible")
            }
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.size() {
            return Err(Error::DimensionMismatch(format!(
                "vector length {len} vs weight size {}",
                self.size()
            )));
        }
        Ok(())
    }
}

fn factor_is_identity(factor: &BandedUpper) -> bool {
    factor.bandwidth() == 0 && (0..factor.size()).all(|i| factor.entry(i, i) == 1.0)
}

// Keep the complex instantiations referenced so both paths stay built.
#[allow(dead_code)]
fn _complex_instantiation(w: &WeightOperator, x: &[Complex64]) -> Result<Vec<Complex64>> {
    w.half_apply(x)
}

/// Inverse covariance of a stationary AR(1) process as a banded-`W` weight:
/// tridiagonal with `1/sigma2` at the corners, `(1 + phi^2)/sigma2` inside
/// and `-phi/sigma2` off the diagonal. `phi = 0` degenerates to a scaled
/// identity (exactly the identity when `sigma2 = 1`).
pub fn ar1_weight(n: usize, phi: f64, sigma2: f64) -> Result<WeightOperator> {
    let stationary = phi.is_finite() && phi.abs() < 1.0 && sigma2.is_finite() && sigma2 > 0.0;
    if !stationary {
        return Err(Error::NonstationaryAr);
    }
    if n < 2 {
        return Err(Error::InvalidInput("AR(1) weight needs n >= 2".into()));
    }
    if phi == 0.0 && sigma2 == 1.0 {
        return Ok(WeightOperator::identity(n));
    }
    let mut diag = vec![(1.0 + phi * phi) / sigma2; n];
    diag[0] = 1.0 / sigma2;
    diag[n - 1] = 1.0 / sigma2;
    let off = vec![-phi / sigma2; n - 1];
    let w = SymmetricBanded::from_bands(n, vec![diag, off])?;
    Ok(WeightOperator::banded_w(w.cholesky_upper()?))
}

/// Covariance of a stationary AR(1) process as a banded-`W^{-1}` weight
/// (`W` is the covariance itself, its inverse is the tridiagonal precision).
pub fn ar1_covariance_weight(n: usize, phi: f64, sigma2: f64) -> Result<WeightOperator> {
    let precision = ar1_weight(n, phi, sigma2)?;
    Ok(WeightOperator::banded_w_inverse(precision.factor().clone()))
}

/// Length-independent description of a weight family, as it appears on the
/// command line: `identity` or `ar1:phi=<f>,sigma2=<f>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightSpec {
    Identity,
    Ar1 { phi: f64, sigma2: f64 },
}

impl WeightSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "identity" {
            return Ok(Self::Identity);
        }
        if let Some(rest) = s.strip_prefix("ar1:") {
            let mut phi = None;
            let mut sigma2 = None;
            for part in rest.split(',') {
                let (key, value) = part.split_once('=').ok_or_else(|| {
                    Error::InvalidInput(format!("malformed weight parameter '{part}'"))
                })?;
                let parsed: f64 = value.trim().parse().map_err(|_| {
                    Error::InvalidInput(format!("bad number '{value}' in weight spec"))
                })?;
                match key.trim() {
                    "phi" => phi = Some(parsed),
                    "sigma2" => sigma2 = Some(parsed),
                    other => {
                        return Err(Error::InvalidInput(format!(
                            "unknown weight parameter '{other}'"
                        )))
                    }
                }
            }
            return Ok(Self::Ar1 {
                phi: phi.ok_or_else(|| Error::InvalidInput("ar1 weight needs phi=<f>".into()))?,
                sigma2: sigma2.unwrap_or(1.0),
            });
        }
        Err(Error::InvalidInput(format!(
            "unknown weight spec '{s}' (expected identity|ar1:phi=<f>,sigma2=<f>)"
        )))
    }

    pub fn build(&self, n: usize) -> Result<WeightOperator> {
        match *self {
            Self::Identity => Ok(WeightOperator::identity(n)),
            Self::Ar1 { phi, sigma2 } => ar1_weight(n, phi, sigma2),
        }
    }
}
