//! Estimation of low-rank signals in noisy time series.
//!
//! A series has rank `r` when its Hankel trajectory matrices have rank
//! `r`; equivalently it is governed by a generalized linear recurrence
//! relation (GLRR) with `r + 1` coefficients. This crate implements the
//! weighted least-squares estimation of such signals:
//!
//! * exact GLRR/Hankel algebra and banded weight operators ([`glrr`],
//!   [`signal`], [`weights`]),
//! * numerically stable orthonormal bases of the GLRR subspace through
//!   FFT-diagonalized circulants, grid rotation and compensated Horner
//!   evaluation ([`subspace`]),
//! * weighted projections onto the subspace by the stable basis route and
//!   by the banded Gram-matrix route ([`projection`]),
//! * a variable-projection Gauss-Newton solver over the local
//!   boundary-data/coefficient parameterization ([`optimizer`]),
//! * test-problem generation with a known stationary point, the accuracy
//!   and stability experiments, and CSV/SVG reporting ([`harness`]).

pub mod banded;
pub mod error;
pub mod glrr;
pub mod harness;
pub mod io;
pub mod optimizer;
pub mod projection;
pub mod signal;
pub mod subspace;
pub mod weights;

pub use error::{Error, Result};
pub use glrr::{
    acyclic_square, choose_tau_and_normalize, glrr_residual, h_tau, h_tau_inverse, index_sets,
    q_transpose_matrix, GlrrVector, IndexSets, ReducedGlrr,
};
pub use projection::{
    gamma_apply_inverse, oracle_project_dense, project, project_stable, project_vp,
    weighted_pinv_apply, GammaFactor, ProjectionKind, ProjectionResult, Projector, WeightedPinv,
};
pub use signal::{embed, series_rank, Signal, TrajectoryMatrix, RANK_TOL_DEFAULT};
pub use subspace::{
    basis_stable, circulant_eigenvalues, condition_scaling_probe, eval_poly, eval_poly_compensated,
    find_alpha0, BasisMethod, RotationDiagnostics, SubspaceBasis,
};
pub use weights::{ar1_covariance_weight, ar1_weight, WeightKind, WeightOperator};
