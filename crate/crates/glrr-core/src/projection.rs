//! Weighted projection onto `Z(a)`.
//!
//! Two production routes compute `Pi_{Z(a),W} x`:
//!
//! * the stable route builds an orthonormal basis `Z` of `Z(a)` (module
//!   [`crate::subspace`]) and applies the weighted pseudoinverse through a
//!   QR factorization of the half-weighted basis;
//! * the baseline route solves with the Gram matrix
//!   `Gamma(a) = Q^T(a) W^{-1} Q(a)`, which stays banded when `W^{-1}` is
//!   banded but squares the conditioning of the problem.
//!
//! A dense SVD-based reference projector is included as the adjudicator
//! for tests; it is never on a production path.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::banded::BandedUpper;
use crate::error::{Error, Result};
use crate::glrr::{q_apply, q_transpose_apply, q_transpose_matrix, GlrrVector};
use crate::signal::Signal;
use crate::subspace::{basis_stable, BasisMethod, SubspaceBasis};
use crate::weights::WeightOperator;

/// Dense-feasibility cap for [`oracle_project_dense`].
pub const ORACLE_DENSE_MAX_N: usize = 2000;
/// Columns whose triangular factor falls below this diagonal ratio are
/// treated as rank deficient.
const PINV_RANK_GUARD: f64 = 1e-12;

/// Outcome of a projection.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    /// Real projected series.
    pub projected: Signal,
    /// Weighted pseudoinverse coordinates `q` when a basis was involved;
    /// the Gram-matrix route has no basis and leaves this empty.
    pub coords: Option<Vec<Complex64>>,
    /// Norm of the imaginary part discarded when realifying `Z q`.
    pub imag_leak: f64,
}

/// Which projector implements `Pi_{Z(a),W}`; the names match the CLI wire
/// format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    /// Gram-matrix route.
    Vp,
    /// Stable basis route, plain Horner.
    Svp,
    /// Stable basis route, compensated Horner.
    Svph,
}

impl ProjectionKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "vp" => Ok(Self::Vp),
            "svp" => Ok(Self::Svp),
            "svph" => Ok(Self::Svph),
            other => Err(Error::InvalidInput(format!(
                "unknown projection method '{other}' (expected vp|svp|svph)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Vp => "vp",
            Self::Svp => "svp",
            Self::Svph => "svph",
        }
    }
}

// ---------------------------------------------------------------------------
// Weighted pseudoinverse through a (possibly complex) basis
// ---------------------------------------------------------------------------

/// Reusable weighted pseudoinverse of a full-column-rank matrix `Z`:
/// a QR factorization of the half-weighted `H Z` (where `||H x|| = ||x||_W`)
/// amortized over many right-hand sides.
pub struct WeightedPinv {
    z: DMatrix<Complex64>,
    q: DMatrix<Complex64>,
    r_factor: DMatrix<Complex64>,
    w: WeightOperator,
}

impl WeightedPinv {
    pub fn new(z: DMatrix<Complex64>, w: &WeightOperator) -> Result<Self> {
        let n = z.nrows();
        let r = z.ncols();
        if n != w.size() {
            return Err(Error::DimensionMismatch(format!(
                "basis has {n} rows, weight has size {}",
                w.size()
            )));
        }
        if r == 0 || r > n {
            return Err(Error::DimensionMismatch(format!(
                "basis of {r} columns for length {n}"
            )));
        }
        let mut hz = DMatrix::<Complex64>::zeros(n, r);
        let mut col = vec![Complex64::ZERO; n];
        for c in 0..r {
            for i in 0..n {
                col[i] = z[(i, c)];
            }
            let hc = w.half_apply(&col)?;
            for i in 0..n {
                hz[(i, c)] = hc[i];
            }
        }
        let qr = hz.qr();
        let q = qr.q();
        let r_factor = qr.r();
        let mut dmin = f64::INFINITY;
        let mut dmax = 0.0_f64;
        for i in 0..r {
            let d = r_factor[(i, i)].norm();
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        if dmax == 0.0 || dmin / dmax < PINV_RANK_GUARD {
            return Err(Error::RankDeficient);
        }
        Ok(Self {
            z,
            q,
            r_factor,
            w: w.clone(),
        })
    }

    /// Pseudoinverse coordinates `q = (H Z)^+ (H x)`.
    pub fn coords(&self, x: &[f64]) -> Result<DVector<Complex64>> {
        if x.len() != self.z.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "vector length {} vs basis rows {}",
                x.len(),
                self.z.nrows()
            )));
        }
        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let hx = self.w.half_apply(&xc)?;
        let rhs = self.q.adjoint() * DVector::from_vec(hx);
        self.r_factor
            .solve_upper_triangular(&rhs)
            .ok_or(Error::RankDeficient)
    }

    /// `Pi_{Z,W} x = Z q`, realified.
    pub fn apply(&self, x: &[f64]) -> Result<ProjectionResult> {
        let coords = self.coords(x)?;
        let zq = &self.z * &coords;
        let mut projected = Vec::with_capacity(zq.len());
        let mut leak = 0.0;
        for v in zq.iter() {
            projected.push(v.re);
            leak += v.im * v.im;
        }
        if projected.iter().any(|v| !v.is_finite()) {
            return Err(Error::RankDeficient);
        }
        Ok(ProjectionResult {
            projected: Signal::new(projected)?,
            coords: Some(coords.iter().cloned().collect()),
            imag_leak: leak.sqrt(),
        })
    }
}

/// One-shot weighted pseudoinverse application (the reusable factorization
/// is [`WeightedPinv`]).
pub fn weighted_pinv_apply(
    z: &DMatrix<Complex64>,
    w: &WeightOperator,
    x: &[f64],
) -> Result<ProjectionResult> {
    WeightedPinv::new(z.clone(), w)?.apply(x)
}

// ---------------------------------------------------------------------------
// Gram-matrix route
// ---------------------------------------------------------------------------

/// Cholesky factor of `Gamma(a) = Q^T(a) W^{-1} Q(a)`, banded when
/// `W^{-1}` is banded, dense otherwise. Immutable and reusable across
/// right-hand sides.
pub enum GammaFactor {
    /// Upper factor of the `(2m+1)`-diagonal Gram matrix, `m = min(p + r, N - r)`.
    Banded(BandedUpper),
    /// Dense upper factor; the slow fallback when only `W` is banded.
    Dense(DMatrix<f64>),
}

impl GammaFactor {
    /// `Gamma^{-1} v` by two triangular solves.
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        match self {
            GammaFactor::Banded(u) => {
                let y = u.solve_transpose(v)?;
                u.solve_upper(&y)
            }
            GammaFactor::Dense(u) => {
                let rhs = DVector::from_column_slice(v);
                let y = u
                    .transpose()
                    .solve_lower_triangular(&rhs)
                    .ok_or(Error::RankDeficient)?;
                let x = u.solve_upper_triangular(&y).ok_or(Error::RankDeficient)?;
                Ok(x.iter().cloned().collect())
            }
        }
    }

    pub fn size(&self) -> usize {
        match self {
            GammaFactor::Banded(u) => u.size(),
            GammaFactor::Dense(u) => u.nrows(),
        }
    }
}

/// Columns of `M = Chat Q(a)` in one contiguous buffer: slot `t` of column
/// `j` holds row `j + t - p`, zero padded where that row falls outside the
/// matrix, so the Gram pass below can run without bounds logic (and without
/// one heap allocation per column, which wrecks cache behavior at large N).
fn m_columns_flat(
    factor: &BandedUpper,
    coeffs: &[f64],
    identity_factor: bool,
    n: usize,
    nq: usize,
) -> Vec<f64> {
    let p = factor.bandwidth();
    let r = coeffs.len() - 1;
    let slot = p + r + 1;
    let mut flat = vec![0.0; slot * nq];
    for j in 0..nq {
        let col = &mut flat[j * slot..(j + 1) * slot];
        for (t, v) in col.iter_mut().enumerate() {
            let i = j + t;
            if i < p || i - p >= n {
                continue;
            }
            let i = i - p;
            if identity_factor {
                if i >= j && i - j <= r {
                    *v = coeffs[i - j];
                }
            } else {
                let k_lo = i.max(j);
                let k_hi = (i + p).min(j + r);
                let mut s = 0.0;
                for k in k_lo..=k_hi {
                    s += factor.entry(i, k) * coeffs[k - j];
                }
                *v = s;
            }
        }
    }
    flat
}

/// Builds the Cholesky factor of `Gamma(a)`.
///
/// With banded `W^{-1} = Chat^T Chat` (identity included) the product
/// `Chat Q(a)` has `m + 1` nonzero diagonals, the Gram matrix `2m + 1`, and
/// the whole factorization runs in `O(N m^2)`. With banded `W` the Gram
/// matrix is dense and this costs `O(N^3)`; callers that care refuse large
/// sizes before getting here.
pub fn gamma_factor(a: &GlrrVector, w: &WeightOperator) -> Result<GammaFactor> {
    let n = w.size();
    let r = a.order();
    if n < 2 * r {
        return Err(Error::SeriesTooShort { n, r });
    }
    let nq = n - r;
    if w.inverse_is_banded() {
        let p = w.bandwidth();
        let m = (p + r).min(nq - 1);
        let slot = p + r + 1;
        let identity_factor = matches!(w.kind(), crate::weights::WeightKind::Identity);
        let flat = m_columns_flat(w.factor(), a.coeffs(), identity_factor, n, nq);
        let mut bands: Vec<Vec<f64>> = (0..=m).map(|d| vec![0.0; nq - d]).collect();
        for j in 0..nq {
            let col_j = &flat[j * slot..(j + 1) * slot];
            for d in 0..=m.min(nq - 1 - j) {
                let col_jd = &flat[(j + d) * slot..(j + d + 1) * slot];
                // Row i of column j sits in slot i - j + p, and in slot
                // i - j - d + p of column j + d; the padded zeros absorb
                // the edge clipping.
                let mut acc = 0.0;
                for t in d..slot {
                    acc += col_j[t] * col_jd[t - d];
                }
                bands[d][j] = acc;
            }
        }
        let gram = crate::banded::SymmetricBanded::from_bands(nq, bands)?;
        Ok(GammaFactor::Banded(gram.cholesky_upper()?))
    } else {
        // Dense fallback: B = C^{-T} Q(a), Gamma = B^T B.
        let mut b = DMatrix::<f64>::zeros(n, nq);
        let mut col = vec![0.0; n];
        for j in 0..nq {
            col.iter_mut().for_each(|v| *v = 0.0);
            for (k, &c) in a.coeffs().iter().enumerate() {
                col[j + k] = c;
            }
            let solved = w.factor().solve_transpose(&col)?;
            for i in 0..n {
                b[(i, j)] = solved[i];
            }
        }
        let gamma = b.transpose() * &b;
        let chol = gamma
            .cholesky()
            .ok_or(Error::CholeskyBreakdown { pivot: 0 })?;
        Ok(GammaFactor::Dense(chol.l().transpose()))
    }
}

/// `Gamma^{-1}(a) v` for a single right-hand side.
pub fn gamma_apply_inverse(a: &GlrrVector, w: &WeightOperator, v: &[f64]) -> Result<Vec<f64>> {
    let factor = gamma_factor(a, w)?;
    if v.len() != factor.size() {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side length {} vs Gamma size {}",
            v.len(),
            factor.size()
        )));
    }
    factor.solve(v)
}

// ---------------------------------------------------------------------------
// The two projectors
// ---------------------------------------------------------------------------

enum ProjectorInner {
    Stable {
        basis: SubspaceBasis,
        pinv: WeightedPinv,
    },
    Gamma {
        coeffs: Vec<f64>,
        factor: GammaFactor,
        w: WeightOperator,
    },
}

/// A factored projector onto `Z(a)`, reusable across right-hand sides.
pub struct Projector {
    inner: ProjectorInner,
    n: usize,
}

impl Projector {
    pub fn new(a: &GlrrVector, w: &WeightOperator, kind: ProjectionKind) -> Result<Self> {
        match kind {
            ProjectionKind::Vp => Self::gamma(a, w),
            ProjectionKind::Svp => Self::stable(a, w, BasisMethod::Plain),
            ProjectionKind::Svph => Self::stable(a, w, BasisMethod::CompensatedHorner),
        }
    }

    pub fn stable(a: &GlrrVector, w: &WeightOperator, method: BasisMethod) -> Result<Self> {
        let n = w.size();
        let basis = basis_stable(a, n, method)?;
        let pinv = WeightedPinv::new(basis.z().clone(), w)?;
        Ok(Self {
            inner: ProjectorInner::Stable { basis, pinv },
            n,
        })
    }

    pub fn gamma(a: &GlrrVector, w: &WeightOperator) -> Result<Self> {
        let n = w.size();
        let factor = gamma_factor(a, w)?;
        Ok(Self {
            inner: ProjectorInner::Gamma {
                coeffs: a.coeffs().to_vec(),
                factor,
                w: w.clone(),
            },
            n,
        })
    }

    pub fn basis(&self) -> Option<&SubspaceBasis> {
        match &self.inner {
            ProjectorInner::Stable { basis, .. } => Some(basis),
            ProjectorInner::Gamma { .. } => None,
        }
    }

    /// The Gram factorization, when this is the Gram-matrix route.
    pub fn gamma_factor(&self) -> Option<&GammaFactor> {
        match &self.inner {
            ProjectorInner::Stable { .. } => None,
            ProjectorInner::Gamma { factor, .. } => Some(factor),
        }
    }

    pub fn project(&self, x: &[f64]) -> Result<ProjectionResult> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "vector length {} vs projector size {}",
                x.len(),
                self.n
            )));
        }
        match &self.inner {
            ProjectorInner::Stable { pinv, .. } => pinv.apply(x),
            ProjectorInner::Gamma { coeffs, factor, w } => {
                let v = q_transpose_apply(coeffs, x);
                let y = factor.solve(&v)?;
                let u = q_apply(coeffs, &y);
                let wiu = w.apply_w_inverse(&u)?;
                let projected: Vec<f64> = x.iter().zip(&wiu).map(|(a, b)| a - b).collect();
                if projected.iter().any(|v| !v.is_finite()) {
                    return Err(Error::RankDeficient);
                }
                Ok(ProjectionResult {
                    projected: Signal::new(projected)?,
                    coords: None,
                    imag_leak: 0.0,
                })
            }
        }
    }
}

/// `Pi_{Z(a),W} x` through the stable basis (projection onto the basis via
/// the weighted pseudoinverse).
pub fn project_stable(
    a: &GlrrVector,
    w: &WeightOperator,
    x: &Signal,
    method: BasisMethod,
) -> Result<ProjectionResult> {
    Projector::stable(a, w, method)?.project(x.values())
}

/// `Pi_{Z(a),W} x` through the Gram matrix: `x - W^{-1} Q(a) Gamma^{-1} Q^T(a) x`.
///
/// Fast when `W^{-1}` is banded; with banded `W` the Gram matrix is dense
/// and the cost is cubic in `N`.
pub fn project_vp(a: &GlrrVector, w: &WeightOperator, x: &Signal) -> Result<ProjectionResult> {
    Projector::gamma(a, w)?.project(x.values())
}

/// Dispatch by wire-format method name.
pub fn project(
    a: &GlrrVector,
    w: &WeightOperator,
    x: &Signal,
    kind: ProjectionKind,
) -> Result<ProjectionResult> {
    Projector::new(a, w, kind)?.project(x.values())
}

// ---------------------------------------------------------------------------
// Dense reference projector
// ---------------------------------------------------------------------------

/// Brute-force reference: dense `Q^T(a)`, an orthonormal null-space basis
/// from a full SVD, and dense weighted normal equations. Adjudicates the
/// projection tests; `N` is capped at [`ORACLE_DENSE_MAX_N`].
pub fn oracle_project_dense(a: &GlrrVector, w: &WeightOperator, x: &Signal) -> Result<Signal> {
    let n = x.len();
    if n > ORACLE_DENSE_MAX_N {
        return Err(Error::SizeLimit {
            n,
            limit: ORACLE_DENSE_MAX_N,
        });
    }
    if w.size() != n {
        return Err(Error::DimensionMismatch(format!(
            "weight size {} vs series length {n}",
            w.size()
        )));
    }
    let r = a.order();
    let qt = q_transpose_matrix(a, n)?;
    // Pad with zero rows to make the SVD square so the full right factor
    // (and with it the null space) is available.
    let mut padded = DMatrix::<f64>::zeros(n, n);
    padded.view_mut((0, 0), (n - r, n)).copy_from(&qt);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::RankDeficient)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[i]
            .partial_cmp(&svd.singular_values[j])
            .unwrap()
    });
    let mut z = DMatrix::<f64>::zeros(n, r);
    for (c, &row) in order.iter().take(r).enumerate() {
        for i in 0..n {
            z[(i, c)] = v_t[(row, i)];
        }
    }
    let wd = w.to_dense_w();
    let xv = DVector::from_column_slice(x.values());
    let gram = z.transpose() * &wd * &z;
    let rhs = z.transpose() * &wd * &xv;
    let coords = gram.lu().solve(&rhs).ok_or(Error::RankDeficient)?;
    let projected = z * coords;
    Signal::new(projected.iter().cloned().collect())
}
