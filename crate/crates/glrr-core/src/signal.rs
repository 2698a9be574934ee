//! Time series, Hankel embedding and series rank.
//!
//! A length-`N` series is identified with the family of its Hankel
//! trajectory matrices `T_L`: entry `(i, j)` of `T_L(S)` is `s_{i+j}`
//! (0-based), so all antidiagonals are constant. The rank of a series is
//! the rank of the widest trajectory matrix; it counts the
//! polynomial-times-exponential-times-sinusoid terms of the series with
//! multiplicity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative singular-value cutoff for [`series_rank`]: the
/// double-precision SVD noise floor at desk-scale lengths.
pub const RANK_TOL_DEFAULT: f64 = 1e-9;

/// Real-valued time series of length at least 3 with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Signal {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Signal {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<Signal> for Vec<f64> {
    fn from(signal: Signal) -> Self {
        signal.values
    }
}

impl Signal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "signal needs at least 3 samples, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "signal contains a non-finite sample".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<usize> for Signal {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Hankel trajectory matrix of a series for a window length `1 < L < N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMatrix {
    entries: DMatrix<f64>,
    window: usize,
}

impl TrajectoryMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn window(&self) -> usize {
        self.window
    }
}

/// Embeds a series into its `L x (N - L + 1)` trajectory matrix.
pub fn embed(series: &Signal, window: usize) -> Result<TrajectoryMatrix> {
    let n = series.len();
    if window <= 1 || window >= n {
        return Err(Error::WindowOutOfRange { l: window, n });
    }
    let k = n - window + 1;
    let entries = DMatrix::from_fn(window, k, |i, j| series[i + j]);
    Ok(TrajectoryMatrix { entries, window })
}

/// Trajectory matrix of a raw slice; used where the 0-based windows of a
/// coefficient vector are needed rather than a validated [`Signal`].
pub(crate) fn trajectory_of_slice(values: &[f64], window: usize) -> DMatrix<f64> {
    let k = values.len() - window + 1;
    DMatrix::from_fn(window, k, |i, j| values[i + j])
}

/// Rank of a series: singular values of the squarest trajectory matrix are
/// counted against `tol` times the largest one.
///
/// Ranks are only meaningful below `N / 2`; series whose true rank exceeds
/// `(N - 1) / 2` come back capped at `min(L, N - L + 1)`.
pub fn series_rank(series: &Signal, tol: f64) -> Result<usize> {
    if series.values().iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroSeries);
    }
    let n = series.len();
    // min(L, N - L + 1) is maximal at L = floor(N / 2) + 1.
    let window = n / 2 + 1;
    let traj = embed(series, window)?;
    let svals = traj.entries.clone().singular_values();
    let max = svals.iter().cloned().fold(0.0_f64, f64::max);
    Ok(svals.iter().filter(|&&s| s > tol * max).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embed_matches_definition() {
        let s = Signal::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let t = embed(&s, 2).unwrap();
        let expected = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.entries(), &expected);
    }

    #[test]
    fn embed_zero_series() {
        let s = Signal::new(vec![0.0, 0.0, 0.0]).unwrap();
        let t = embed(&s, 2).unwrap();
        assert_eq!(t.entries(), &DMatrix::zeros(2, 2));
    }

    #[test]
    fn embed_last_column() {
        let s = Signal::new(vec![1.0, 1.0, 1.0, 1.0, 1.0, 2.0]).unwrap();
        let t = embed(&s, 3).unwrap();
        assert_eq!(t.entries().nrows(), 3);
        assert_eq!(t.entries().ncols(), 4);
        assert_eq!(t.entries().column(3).as_slice(), &[1.0, 1.0, 2.0]);
    }

    #[test]
    fn embed_rejects_bad_window() {
        let s = Signal::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            embed(&s, 1),
            Err(Error::WindowOutOfRange { l: 1, n: 3 })
        ));
        assert!(matches!(
            embed(&s, 3),
            Err(Error::WindowOutOfRange { l: 3, n: 3 })
        ));
    }

    #[test]
    fn hankel_antidiagonals_constant() {
        let s = Signal::new(vec![0.3, -1.2, 2.0, 5.5, -0.1, 0.0, 7.25]).unwrap();
        let t = embed(&s, 3).unwrap();
        let m = t.entries();
        for i in 1..m.nrows() {
            for j in 0..m.ncols() - 1 {
                assert_eq!(m[(i, j)], m[(i - 1, j + 1)]);
            }
        }
    }

    #[test]
    fn rank_of_interrupted_constant_is_two() {
        // Constant except the last sample: no plain LRR, but rank 2.
        let s = Signal::new(vec![1.0, 1.0, 1.0, 1.0, 1.0, 2.0]).unwrap();
        assert_eq!(series_rank(&s, RANK_TOL_DEFAULT).unwrap(), 2);
    }

    #[test]
    fn rank_of_constant_is_one() {
        let s = Signal::new(vec![3.5; 10]).unwrap();
        assert_eq!(series_rank(&s, RANK_TOL_DEFAULT).unwrap(), 1);
    }

    #[test]
    fn rank_of_linear_is_two() {
        let s = Signal::new((1..=10).map(|i| i as f64).collect()).unwrap();
        assert_eq!(series_rank(&s, RANK_TOL_DEFAULT).unwrap(), 2);
    }

    #[test]
    fn rank_rejects_zero_series() {
        let s = Signal::new(vec![0.0; 5]).unwrap();
        assert!(matches!(
            series_rank(&s, RANK_TOL_DEFAULT),
            Err(Error::ZeroSeries)
        ));
    }

    #[test]
    fn signal_rejects_short_and_non_finite() {
        assert!(Signal::new(vec![1.0, 2.0]).is_err());
        assert!(Signal::new(vec![1.0, f64::NAN, 2.0]).is_err());
    }
}
