#![allow(dead_code)] // each integration target uses a different subset

//! Shared helpers for the integration suites: root-based random GLRR
//! instances (so subspace members can be built independently of the code
//! under test), an exact-rational polynomial evaluation oracle, and
//! subspace comparison utilities.

use nalgebra::DMatrix;
use num::{BigRational, FromPrimitive, ToPrimitive};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use glrr_core::{GlrrVector, Signal};

/// A root of the characteristic polynomial; pairs stand for a conjugate
/// pair so the coefficients stay real.
#[derive(Debug, Clone, Copy)]
pub enum RootSpec {
    Real(f64),
    Pair { modulus: f64, angle: f64 },
}

impl RootSpec {
    pub fn order(&self) -> usize {
        match self {
            RootSpec::Real(_) => 1,
            RootSpec::Pair { .. } => 2,
        }
    }
}

/// GLRR instance with known roots.
#[derive(Debug, Clone)]
pub struct RandomGlrr {
    pub a: GlrrVector,
    pub roots: Vec<RootSpec>,
}

/// Multiplies the ascending-coefficient polynomial by the factors of a root.
fn push_root(coeffs: &mut Vec<f64>, root: RootSpec) {
    let factor: Vec<f64> = match root {
        RootSpec::Real(rho) => vec![-rho, 1.0],
        RootSpec::Pair { modulus, angle } => {
            vec![modulus * modulus, -2.0 * modulus * angle.cos(), 1.0]
        }
    };
    let mut out = vec![0.0; coeffs.len() + factor.len() - 1];
    for (i, &c) in coeffs.iter().enumerate() {
        for (j, &f) in factor.iter().enumerate() {
            out[i + j] += c * f;
        }
    }
    *coeffs = out;
}

fn random_modulus(rng: &mut ChaCha8Rng, allow_unit: bool) -> f64 {
    if allow_unit && rng.random_bool(0.5) {
        1.0
    } else if rng.random_bool(0.5) {
        rng.random_range(0.35..0.85)
    } else {
        rng.random_range(1.15..1.6)
    }
}

/// Random order-`r` GLRR with distinct roots sampled on and off the unit
/// circle; the coefficient vector is randomly rescaled since the subspace
/// is scale-invariant.
pub fn random_glrr(rng: &mut ChaCha8Rng, r: usize, allow_unit: bool) -> RandomGlrr {
    let mut roots = Vec::new();
    let mut remaining = r;
    while remaining > 0 {
        if remaining >= 2 && rng.random_bool(0.6) {
            roots.push(RootSpec::Pair {
                modulus: random_modulus(rng, allow_unit),
                angle: rng.random_range(0.25..std::f64::consts::PI - 0.25),
            });
            remaining -= 2;
        } else {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            roots.push(RootSpec::Real(sign * random_modulus(rng, allow_unit)));
            remaining -= 1;
        }
    }
    let mut coeffs = vec![1.0];
    for &root in &roots {
        push_root(&mut coeffs, root);
    }
    let scale = rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    for c in coeffs.iter_mut() {
        *c *= scale;
    }
    RandomGlrr {
        a: GlrrVector::new(coeffs).expect("nonzero by construction"),
        roots,
    }
}

/// Random member of `Z(a)` built directly from the roots: a combination of
/// normalized exponential/sinusoidal columns, independent of any basis
/// machinery under test.
pub fn random_member(rng: &mut ChaCha8Rng, spec: &RandomGlrr, n: usize) -> Signal {
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for root in &spec.roots {
        match *root {
            RootSpec::Real(rho) => {
                columns.push((0..n).map(|i| rho.powi(i as i32)).collect());
            }
            RootSpec::Pair { modulus, angle } => {
                columns.push(
                    (0..n)
                        .map(|i| modulus.powi(i as i32) * (angle * i as f64).cos())
                        .collect(),
                );
                columns.push(
                    (0..n)
                        .map(|i| modulus.powi(i as i32) * (angle * i as f64).sin())
                        .collect(),
                );
            }
        }
    }
    let mut series = vec![0.0; n];
    for col in &columns {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let weight = rng.random_range(-1.0..1.0);
        for (s, &v) in series.iter_mut().zip(col) {
            *s += weight * v / norm;
        }
    }
    let norm = series.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for s in series.iter_mut() {
            *s /= norm;
        }
    } else {
        series[0] = 1.0;
    }
    Signal::new(series).expect("member series is finite")
}

// ---------------------------------------------------------------------------
// Exact-rational polynomial evaluation
// ---------------------------------------------------------------------------

/// Complex number with exact rational components; f64 inputs convert
/// exactly (they are dyadic rationals), so Horner evaluation below is
/// error-free.
#[derive(Clone)]
pub struct ExactComplex {
    re: BigRational,
    im: BigRational,
}

impl ExactComplex {
    pub fn from_c64(z: Complex64) -> Self {
        Self {
            re: BigRational::from_f64(z.re).expect("finite"),
            im: BigRational::from_f64(z.im).expect("finite"),
        }
    }

    fn mul(&self, other: &Self) -> Self {
        Self {
            re: &self.re * &other.re - &self.im * &other.im,
            im: &self.re * &other.im + &self.im * &other.re,
        }
    }

    fn add_real(&self, value: &BigRational) -> Self {
        Self {
            re: &self.re + value,
            im: self.im.clone(),
        }
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(
            self.re.to_f64().expect("in range"),
            self.im.to_f64().expect("in range"),
        )
    }

    pub fn abs(&self) -> f64 {
        let z = self.to_c64();
        z.norm()
    }
}

/// Exact Horner evaluation of `sum a_{k+1} z^k`, rounded only at the end.
pub fn eval_poly_exact(coeffs: &[f64], z: Complex64) -> ExactComplex {
    let zx = ExactComplex::from_c64(z);
    let mut acc = ExactComplex {
        re: BigRational::from_f64(*coeffs.last().unwrap()).unwrap(),
        im: BigRational::from_f64(0.0).unwrap(),
    };
    for &c in coeffs.iter().rev().skip(1) {
        acc = acc.mul(&zx).add_real(&BigRational::from_f64(c).unwrap());
    }
    acc
}

// ---------------------------------------------------------------------------
// Subspace utilities
// ---------------------------------------------------------------------------

/// Largest principal angle between the column spans of two orthonormal
/// matrices, through the numerically stable sine route
/// `sin(theta_max) = ||(I - Z1 Z1*) Z2||_2` (the cosine route loses half
/// the digits for nearly aligned subspaces).
pub fn max_principal_angle(z1: &DMatrix<Complex64>, z2: &DMatrix<Complex64>) -> f64 {
    let residual = z2 - z1 * (z1.adjoint() * z2);
    let sine = residual
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max);
    sine.clamp(0.0, 1.0).asin()
}

/// `Q^T(b) x` for complex coefficients and vectors (the rotated-coefficient
/// residual needs complex `b`).
pub fn q_transpose_apply_full_complex(coeffs: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
    let r = coeffs.len() - 1;
    (0..x.len() - r)
        .map(|i| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| c * x[i + k])
                .fold(Complex64::ZERO, |acc, v| acc + v)
        })
        .collect()
}

pub fn norm2(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
