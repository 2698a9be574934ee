//! Brute-force adjudicators for the test suites.
//!
//! Everything here recomputes a quantity by the most direct method
//! available, independently of the production path it checks. Nothing in
//! this module is called by production code.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::signal::{embed, Signal};

/// Plain double-loop acyclic convolution.
pub fn oracle_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Rank by dense SVD of the squarest trajectory matrix; recomputed here so
/// the production rank routine has an independent witness.
pub fn oracle_rank_svd(series: &Signal, tol: f64) -> Result<usize> {
    let n = series.len();
    let traj = embed(series, n / 2 + 1)?;
    let svals = traj.entries().clone().singular_values();
    let max = svals.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return Ok(0);
    }
    Ok(svals.iter().filter(|&&s| s > tol * max).count())
}

/// Central-difference Jacobian of a vector map; step `h_rel * max(1, |p|)`
/// per coordinate. Exact on affine maps up to roundoff.
pub fn oracle_jacobian_fd<F>(f: F, params: &[f64], h_rel: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut work = params.to_vec();
    let probe = f(&work)?;
    let rows = probe.len();
    let mut jac = DMatrix::<f64>::zeros(rows, params.len());
    for col in 0..params.len() {
        let h = h_rel * params[col].abs().max(1.0);
        let saved = work[col];
        work[col] = saved + h;
        let plus = f(&work)?;
        work[col] = saved - h;
        let minus = f(&work)?;
        work[col] = saved;
        for row in 0..rows {
            jac[(row, col)] = (plus[row] - minus[row]) / (2.0 * h);
        }
    }
    Ok(jac)
}
