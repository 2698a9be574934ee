//! Stable orthonormal bases of the GLRR subspace `Z(a)`.
//!
//! The band matrix `Q^T(a)` extends to a circulant whose eigenvalues are
//! the characteristic polynomial `g_a` sampled on the unit-circle grid.
//! Solving the circulant systems in Fourier space therefore yields a basis
//! of `Z(a)` in `O(r N log N)` flops; a grid rotation `alpha0` keeps the
//! sampled eigenvalues away from the roots of `g_a`, and an optional
//! compensated Horner scheme evaluates the polynomial as if in twice the
//! working precision. The condition number of the diagonalized system
//! grows like `N^t`, with `t` the maximal multiplicity of unit-circle
//! roots, instead of the `N^{2t}` of the Gram-matrix route.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glrr::GlrrVector;

/// How the circulant eigenvalues (and the basis correction product) are
/// evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisMethod {
    /// Plain Horner evaluation.
    Plain,
    /// Compensated Horner with error-free transformations.
    CompensatedHorner,
}

/// Grid candidates scanned for the rotation angle before refinement.
const ALPHA_GRID_CANDIDATES: usize = 512;
/// Golden-section refinement stops at this fraction of the cell `pi / N`.
const ALPHA_REFINE_REL_WIDTH: f64 = 1e-4;
/// Relative floor under which the rotated grid counts as degenerate.
const DEGENERACY_FACTOR: f64 = 1e3 * f64::EPSILON;
/// Triangular factors with a worse diagonal ratio fall back to SVD
/// orthonormalization.
const QR_DIAG_RATIO_GUARD: f64 = 1e12;

// ---------------------------------------------------------------------------
// Polynomial evaluation
// ---------------------------------------------------------------------------

/// `g_a(z) = sum_k a_{k+1} z^k` by Horner's rule.
pub fn eval_poly(a: &GlrrVector, z: Complex64) -> Complex64 {
    horner(a.coeffs(), z)
}

fn horner(coeffs: &[f64], z: Complex64) -> Complex64 {
    let mut s = Complex64::new(*coeffs.last().unwrap(), 0.0);
    for &c in coeffs.iter().rev().skip(1) {
        s = s * z + c;
    }
    s
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = f64::mul_add(a, b, -p);
    (p, e)
}

/// Rounded complex product plus its exact rounding error, obtained by
/// running error-free transformations through the four real multiply
/// streams of the 4-multiplication product formula.
#[inline]
fn comp_mul(a: Complex64, b: Complex64) -> (Complex64, Complex64) {
    let (p1, e1) = two_prod(a.re, b.re);
    let (p2, e2) = two_prod(a.im, b.im);
    let (p3, e3) = two_prod(a.re, b.im);
    let (p4, e4) = two_prod(a.im, b.re);
    let (re, e5) = two_sum(p1, -p2);
    let (im, e6) = two_sum(p3, p4);
    (
        Complex64::new(re, im),
        Complex64::new(e1 - e2 + e5, e3 + e4 + e6),
    )
}

#[inline]
fn comp_add(a: Complex64, b: Complex64) -> (Complex64, Complex64) {
    let (re, er) = two_sum(a.re, b.re);
    let (im, ei) = two_sum(a.im, b.im);
    (Complex64::new(re, im), Complex64::new(er, ei))
}

/// Compensated Horner for complex coefficients: the value matches plain
/// Horner in exact arithmetic, while the carried correction makes the
/// floating-point result behave as if computed in doubled precision.
pub fn comp_horner_complex(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    let mut s = *coeffs.last().unwrap();
    let mut corr = Complex64::ZERO;
    for &c in coeffs.iter().rev().skip(1) {
        let (p, ep) = comp_mul(s, z);
        let (s_next, es) = comp_add(p, c);
        corr = corr * z + (ep + es);
        s = s_next;
    }
    s + corr
}

/// Compensated evaluation of `g_a(z)`.
pub fn eval_poly_compensated(a: &GlrrVector, z: Complex64) -> Complex64 {
    let coeffs: Vec<Complex64> = a.coeffs().iter().map(|&c| Complex64::new(c, 0.0)).collect();
    comp_horner_complex(&coeffs, z)
}

// ---------------------------------------------------------------------------
// Circulant eigenvalues and the rotation search
// ---------------------------------------------------------------------------

/// Grid node `exp(i (2 pi j / n - alpha))`.
#[inline]
fn grid_node(j: usize, n: usize, alpha: f64) -> Complex64 {
    let theta = 2.0 * std::f64::consts::PI * (j as f64) / (n as f64) - alpha;
    Complex64::from_polar(1.0, theta)
}

/// Eigenvalues of the rotated circulant: `g_a` sampled on the
/// `alpha`-rotated unit-circle grid.
pub fn circulant_eigenvalues(
    a: &GlrrVector,
    n: usize,
    alpha: f64,
    method: BasisMethod,
) -> Vec<Complex64> {
    (0..n)
        .map(|j| {
            let z = grid_node(j, n, alpha);
            match method {
                BasisMethod::Plain => eval_poly(a, z),
                BasisMethod::CompensatedHorner => eval_poly_compensated(a, z),
            }
        })
        .collect()
}

/// Streaming min/max of `|g_a|^2` over the rotated grid; plain Horner is
/// enough here because only the argmax of the rotation matters.
fn scan_grid(coeffs: &[f64], n: usize, alpha: f64) -> (f64, f64) {
    let mut min2 = f64::INFINITY;
    let mut max2 = 0.0_f64;
    for j in 0..n {
        let g = horner(coeffs, grid_node(j, n, alpha));
        let m2 = g.norm_sqr();
        if m2 < min2 {
            min2 = m2;
        }
        if m2 > max2 {
            max2 = m2;
        }
    }
    (min2, max2)
}

/// Achieved spectrum of the rotated circulant at the selected angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationDiagnostics {
    pub alpha0: f64,
    pub min_abs_eig: f64,
    pub max_abs_eig: f64,
    /// `max_abs_eig / min_abs_eig`.
    pub condition: f64,
}

/// Finds the rotation angle in `(-pi/N, pi/N]` that approximately maximizes
/// the smallest `|g_a|` over the rotated grid: a uniform pre-scan over
/// [`ALPHA_GRID_CANDIDATES`] angles followed by golden-section refinement
/// inside the best cell. The pre-scan matters because the objective is
/// piecewise smooth with kinks wherever the active minimizing node changes.
pub fn find_alpha0(a: &GlrrVector, n: usize) -> Result<RotationDiagnostics> {
    let coeffs = a.coeffs();
    let period = 2.0 * std::f64::consts::PI / n as f64;
    let lo = -period / 2.0;
    let step = period / ALPHA_GRID_CANDIDATES as f64;

    let mut best_alpha = lo + step;
    let mut best_min2 = f64::NEG_INFINITY;
    for i in 1..=ALPHA_GRID_CANDIDATES {
        let alpha = lo + step * i as f64;
        let (min2, _) = scan_grid(coeffs, n, alpha);
        if min2 > best_min2 {
            best_min2 = min2;
            best_alpha = alpha;
        }
    }

    // Golden-section refinement of the best cell. The objective is periodic
    // in alpha, so reaching past the nominal interval ends is harmless.
    let gr = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut a_lo = best_alpha - step;
    let mut a_hi = best_alpha + step;
    let tol = ALPHA_REFINE_REL_WIDTH * (period / 2.0);
    let eval = |alpha: f64| scan_grid(coeffs, n, alpha).0;
    let mut c = a_hi - gr * (a_hi - a_lo);
    let mut d = a_lo + gr * (a_hi - a_lo);
    let mut fc = eval(c);
    let mut fd = eval(d);
    while a_hi - a_lo > tol {
        if fc > fd {
            a_hi = d;
            d = c;
            fd = fc;
            c = a_hi - gr * (a_hi - a_lo);
            fc = eval(c);
        } else {
            a_lo = c;
            c = d;
            fc = fd;
            d = a_lo + gr * (a_hi - a_lo);
            fd = eval(d);
        }
    }
    let mut alpha0 = if fc > fd { c } else { d };
    if eval(alpha0) < best_min2 {
        // Refinement never beats the scanned candidate on a kink.
        alpha0 = best_alpha;
    }
    // Normalize into (-pi/N, pi/N].
    if alpha0 <= lo {
        alpha0 += period;
    } else if alpha0 > -lo {
        alpha0 -= period;
    }

    let (min2, max2) = scan_grid(coeffs, n, alpha0);
    let min_abs_eig = min2.sqrt();
    let max_abs_eig = max2.sqrt();
    if min_abs_eig < DEGENERACY_FACTOR * max_abs_eig {
        return Err(Error::DegenerateGrid {
            min_abs: min_abs_eig,
        });
    }
    Ok(RotationDiagnostics {
        alpha0,
        min_abs_eig,
        max_abs_eig,
        condition: max_abs_eig / min_abs_eig,
    })
}

/// Writes rotation diagnostics as CSV rows `(n, alpha0, min_abs_eig,
/// max_abs_eig, condition)`.
pub fn write_diagnostics_csv(
    path: &std::path::Path,
    rows: &[(usize, RotationDiagnostics)],
) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        n: usize,
        alpha0: f64,
        min_abs_eig: f64,
        max_abs_eig: f64,
        condition: f64,
    }
    let mut writer = csv::Writer::from_path(path)?;
    for &(n, d) in rows {
        writer.serialize(Row {
            n,
            alpha0: d.alpha0,
            min_abs_eig: d.min_abs_eig,
            max_abs_eig: d.max_abs_eig,
            condition: d.condition,
        })?;
    }
    writer.flush()?;
    Ok(())
}

/// Rotation condition numbers over a list of lengths; the growth exponent
/// in `N` equals the maximal unit-circle root multiplicity of `g_a`.
pub fn condition_scaling_probe(a: &GlrrVector, n_list: &[usize]) -> Result<Vec<(usize, f64)>> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "N list must be strictly increasing".into(),
        ));
    }
    n_list
        .iter()
        .map(|&n| Ok((n, find_alpha0(a, n)?.condition)))
        .collect()
}

// ---------------------------------------------------------------------------
// FFT helpers (unitary convention)
// ---------------------------------------------------------------------------

type PlanCache = Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>;

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry((n, forward))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if forward {
                planner.plan_fft_forward(n)
            } else {
                planner.plan_fft_inverse(n)
            }
        })
        .clone()
}

/// In-place unitary DFT: `y_k = n^{-1/2} sum_j x_j exp(-2 pi i k j / n)`.
pub fn fft_unitary(x: &mut [Complex64]) {
    let n = x.len();
    plan(n, true).process(x);
    let s = 1.0 / (n as f64).sqrt();
    for v in x.iter_mut() {
        *v *= s;
    }
}

/// In-place unitary inverse DFT.
pub fn fft_unitary_inverse(x: &mut [Complex64]) {
    let n = x.len();
    plan(n, false).process(x);
    let s = 1.0 / (n as f64).sqrt();
    for v in x.iter_mut() {
        *v *= s;
    }
}

// ---------------------------------------------------------------------------
// Basis construction
// ---------------------------------------------------------------------------

/// Orthonormal basis of `Z(a)` together with the rotation and eigenvalue
/// data it was built from.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    z: DMatrix<Complex64>,
    alpha0: f64,
    eigvals: Vec<Complex64>,
    method: BasisMethod,
}

impl SubspaceBasis {
    /// `N x r` matrix with orthonormal columns spanning `Z(a)`.
    pub fn z(&self) -> &DMatrix<Complex64> {
        &self.z
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    /// Diagonal of the rotated circulant in grid order.
    pub fn eigvals(&self) -> &[Complex64] {
        &self.eigvals
    }

    pub fn method(&self) -> BasisMethod {
        self.method
    }

    pub fn len(&self) -> usize {
        self.z.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.nrows() == 0
    }

    pub fn rank(&self) -> usize {
        self.z.ncols()
    }

    pub fn min_abs_eig(&self) -> f64 {
        self.eigvals
            .iter()
            .map(|e| e.norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_eig(&self) -> f64 {
        self.eigvals.iter().map(|e| e.norm()).fold(0.0, f64::max)
    }

    pub fn condition(&self) -> f64 {
        self.max_abs_eig() / self.min_abs_eig()
    }

    /// Residual tolerance `1e-6 * max(1, cond(A_g) * eps * N)` that the
    /// basis is expected to meet in `||Q^T(a) Z||_F`; the conditioning
    /// factor is what a multiple unit-circle root costs.
    pub fn scaled_residual_tol(&self) -> f64 {
        1e-6 * (self.condition() * f64::EPSILON * self.len() as f64).max(1.0)
    }
}

/// Frobenius norm of `Q^T(a) Z`, the defect of `Z` as a basis of `Z(a)`.
pub fn basis_residual(a: &GlrrVector, basis: &SubspaceBasis) -> f64 {
    let mut acc = 0.0;
    for c in 0..basis.z.ncols() {
        let col: Vec<Complex64> = basis.z.column(c).iter().cloned().collect();
        let v = crate::glrr::q_transpose_apply_complex(a.coeffs(), &col);
        acc += v.iter().map(|x| x.norm_sqr()).sum::<f64>();
    }
    acc.sqrt()
}

/// Departure of the columns from orthonormality, `||Z* Z - I||_F`.
pub fn orthonormality_defect(basis: &SubspaceBasis) -> f64 {
    let g = basis.z.adjoint() * &basis.z;
    let r = basis.rank();
    let mut acc = 0.0;
    for i in 0..r {
        for j in 0..r {
            let target = if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::ZERO
            };
            acc += (g[(i, j)] - target).norm_sqr();
        }
    }
    acc.sqrt()
}

/// Columns of the unitary DFT of the last `r` unit vectors: entry `(k, c)`
/// is `n^{-1/2} w_k^{r-c}` with `w_k = exp(2 pi i k / n)`.
fn dft_of_last_unit_vectors(n: usize, r: usize) -> DMatrix<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    let mut m = DMatrix::zeros(n, r);
    for k in 0..n {
        let w = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64);
        let mut power = Complex64::new(scale, 0.0);
        for e in 1..=r {
            power *= w;
            // exponent e sits in column r - e
            m[(k, r - e)] = power;
        }
    }
    m
}

enum Orthonormalizer {
    Qr,
    Svd,
}

fn pick_orthonormalizer(
    m: &DMatrix<Complex64>,
) -> (
    Orthonormalizer,
    nalgebra::linalg::QR<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
) {
    let qr = m.clone().qr();
    let rmat = qr.r();
    let mut dmin = f64::INFINITY;
    let mut dmax = 0.0_f64;
    for i in 0..rmat.nrows().min(rmat.ncols()) {
        let d = rmat[(i, i)].norm();
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    if dmin == 0.0 || dmax / dmin > QR_DIAG_RATIO_GUARD {
        (Orthonormalizer::Svd, qr)
    } else {
        (Orthonormalizer::Qr, qr)
    }
}

/// Orthonormal column span of `m`: Householder QR, or SVD when the
/// triangular factor looks too ill-conditioned.
fn orthonormalize(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    match pick_orthonormalizer(m) {
        (Orthonormalizer::Qr, qr) => Ok(qr.q()),
        (Orthonormalizer::Svd, _) => {
            let svd = m.clone().svd(true, false);
            let u = svd.u.ok_or(Error::RankDeficient)?;
            Ok(u)
        }
    }
}

/// `r x r` transform `O` such that `m * O` has orthonormal columns.
fn orthonormalizing_transform(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let r = m.ncols();
    match pick_orthonormalizer(m) {
        (Orthonormalizer::Qr, qr) => {
            let rmat = qr.r();
            let eye = DMatrix::<Complex64>::identity(r, r);
            rmat.solve_upper_triangular(&eye)
                .ok_or(Error::RankDeficient)
        }
        (Orthonormalizer::Svd, _) => {
            let svd = m.clone().svd(false, true);
            let v_t = svd.v_t.ok_or(Error::RankDeficient)?;
            let mut o = v_t.adjoint();
            for c in 0..r {
                let s = svd.singular_values[c];
                if s == 0.0 {
                    return Err(Error::RankDeficient);
                }
                for i in 0..r {
                    o[(i, c)] /= Complex64::new(s, 0.0);
                }
            }
            Ok(o)
        }
    }
}

/// Builds an orthonormal basis of `Z(a)` of length `n`.
///
/// Plain route: rotate the grid by `alpha0`, invert the diagonalized
/// circulant on the DFT images of the last `r` unit vectors, orthonormalize
/// in Fourier space, transform back, and undo the rotation. The compensated
/// route instead forms the orthonormalizing transform `O`, re-evaluates
/// `R_r O` by compensated Horner (each entry of `R_r O` is a degree-`r`
/// polynomial at a grid node), rescales by the inverted eigenvalues, and
/// re-orthonormalizes to absorb the rescaling's loss of orthonormality.
pub fn basis_stable(a: &GlrrVector, n: usize, method: BasisMethod) -> Result<SubspaceBasis> {
    let r = a.order();
    if n < 2 * r {
        return Err(Error::SeriesTooShort { n, r });
    }
    let diag = find_alpha0(a, n)?;
    let alpha0 = diag.alpha0;
    let eigvals = circulant_eigenvalues(a, n, alpha0, method);

    let r_mat = dft_of_last_unit_vectors(n, r);
    let mut l_mat = r_mat.clone();
    for k in 0..n {
        for c in 0..r {
            l_mat[(k, c)] /= eigvals[k];
        }
    }

    let u_mat = match method {
        BasisMethod::Plain => orthonormalize(&l_mat)?,
        BasisMethod::CompensatedHorner => {
            let o_mat = orthonormalizing_transform(&l_mat)?;
            // B = R_r O via compensated Horner: row k of R_r is
            // n^{-1/2} (w_k^r, ..., w_k), so (B)_{k,c} factors through a
            // polynomial with the reversed column of O as coefficients.
            let scale = 1.0 / (n as f64).sqrt();
            let mut coeffs = vec![Complex64::ZERO; r];
            let mut b_mat = DMatrix::<Complex64>::zeros(n, r);
            for c in 0..r {
                for m in 0..r {
                    coeffs[m] = o_mat[(r - 1 - m, c)];
                }
                for k in 0..n {
                    let w = Complex64::from_polar(
                        1.0,
                        2.0 * std::f64::consts::PI * k as f64 / n as f64,
                    );
                    b_mat[(k, c)] = comp_horner_complex(&coeffs, w) * w * scale;
                }
            }
            for k in 0..n {
                for c in 0..r {
                    b_mat[(k, c)] /= eigvals[k];
                }
            }
            // The eigenvalue rescaling is exact per entry but not unitary;
            // re-orthonormalize before leaving Fourier space.
            orthonormalize(&b_mat)?
        }
    };

    // Back to series space column by column; the unitary inverse DFT keeps
    // the columns orthonormal.
    let mut z = DMatrix::<Complex64>::zeros(n, r);
    let mut buf = vec![Complex64::ZERO; n];
    for c in 0..r {
        for k in 0..n {
            buf[k] = u_mat[(k, c)];
        }
        fft_unitary_inverse(&mut buf);
        for k in 0..n {
            z[(k, c)] = buf[k];
        }
    }
    // Undo the rotation: row k picks up exp(-i k alpha0).
    for k in 0..n {
        let t = Complex64::from_polar(1.0, -(k as f64) * alpha0);
        for c in 0..r {
            z[(k, c)] *= t;
        }
    }

    Ok(SubspaceBasis {
        z,
        alpha0,
        eigvals,
        method,
    })
}
