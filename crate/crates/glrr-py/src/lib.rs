//! Python bindings for the GLRR low-rank signal estimation crate.
//!
//! Series and coefficient vectors cross the boundary as plain lists of
//! floats; basis matrices come back as lists of complex columns. Input
//! errors raise `ValueError`, numerical failures raise `RuntimeError`.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use glrr_core::error::Error;
use glrr_core::harness;
use glrr_core::optimizer::{self, SolverVariant, StopReason, VpgnOptions};
use glrr_core::projection::{self, ProjectionKind};
use glrr_core::subspace::{self, BasisMethod};
use glrr_core::weights::WeightSpec;
use glrr_core::{GlrrVector, Signal};

fn pyerr(err: Error) -> PyErr {
    match err.exit_code() {
        2 => PyValueError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn signal(values: Vec<f64>) -> PyResult<Signal> {
    Signal::new(values).map_err(pyerr)
}

fn glrr(coeffs: Vec<f64>) -> PyResult<GlrrVector> {
    GlrrVector::new(coeffs).map_err(pyerr)
}

fn weight(spec: &str, n: usize) -> PyResult<glrr_core::WeightOperator> {
    WeightSpec::parse(spec)
        .and_then(|s| s.build(n))
        .map_err(pyerr)
}

fn basis_method(method: &str) -> PyResult<BasisMethod> {
    match method {
        "plain" => Ok(BasisMethod::Plain),
        "compensated-horner" => Ok(BasisMethod::CompensatedHorner),
        other => Err(PyValueError::new_err(format!(
            "unknown basis method '{other}' (expected plain|compensated-horner)"
        ))),
    }
}

/// Rank of a series: singular values of the squarest trajectory matrix
/// above `tol` times the largest.
#[pyfunction]
#[pyo3(signature = (values, tol = glrr_core::RANK_TOL_DEFAULT))]
fn series_rank(values: Vec<f64>, tol: f64) -> PyResult<usize> {
    glrr_core::series_rank(&signal(values)?, tol).map_err(pyerr)
}

/// `||Q^T(a) S||_2`; zero exactly when the series satisfies the GLRR.
#[pyfunction]
fn glrr_residual(values: Vec<f64>, coeffs: Vec<f64>) -> PyResult<f64> {
    glrr_core::glrr_residual(&signal(values)?, &glrr(coeffs)?).map_err(pyerr)
}

/// Acyclic self-convolution; the tangent-space coefficients.
#[pyfunction]
fn acyclic_square(coeffs: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(glrr_core::acyclic_square(&glrr(coeffs)?).coeffs().to_vec())
}

/// Normalizes so the largest-magnitude coefficient becomes -1; returns
/// `(coeffs, tau)` with `tau` 0-based.
#[pyfunction]
fn choose_tau_and_normalize(coeffs: Vec<f64>) -> PyResult<(Vec<f64>, usize)> {
    let (a, tau) = glrr_core::choose_tau_and_normalize(&glrr(coeffs)?).map_err(pyerr)?;
    Ok((a.coeffs().to_vec(), tau))
}

/// `g_a(z)` by plain Horner.
#[pyfunction]
fn eval_poly(coeffs: Vec<f64>, z: Complex64) -> PyResult<Complex64> {
    Ok(subspace::eval_poly(&glrr(coeffs)?, z))
}

/// `g_a(z)` by the compensated Horner scheme (twice-working-precision
/// behavior).
#[pyfunction]
fn eval_poly_compensated(coeffs: Vec<f64>, z: Complex64) -> PyResult<Complex64> {
    Ok(subspace::eval_poly_compensated(&glrr(coeffs)?, z))
}

/// Orthonormal basis of `Z(a)`: returns a dict with `columns` (list of
/// complex columns), `alpha0`, `eigvals` and `condition`.
#[pyfunction]
#[pyo3(signature = (coeffs, n, method = "plain"))]
fn basis_stable<'py>(
    py: Python<'py>,
    coeffs: Vec<f64>,
    n: usize,
    method: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let basis = subspace::basis_stable(&glrr(coeffs)?, n, basis_method(method)?).map_err(pyerr)?;
    let columns: Vec<Vec<Complex64>> = (0..basis.rank())
        .map(|c| basis.z().column(c).iter().cloned().collect())
        .collect();
    let out = PyDict::new(py);
    out.set_item("columns", columns)?;
    out.set_item("alpha0", basis.alpha0())?;
    out.set_item("eigvals", basis.eigvals().to_vec())?;
    out.set_item("condition", basis.condition())?;
    Ok(out)
}

/// Weighted projection onto `Z(a)`; `method` is vp | svp | svph, `weights`
/// is identity | ar1:phi=<f>,sigma2=<f>. Returns a dict with `projected`,
/// `imag_leak` and `coords` (None for the Gram route).
#[pyfunction]
#[pyo3(signature = (values, coeffs, method = "svp", weights = "identity"))]
fn project<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    coeffs: Vec<f64>,
    method: &str,
    weights: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let x = signal(values)?;
    let a = glrr(coeffs)?;
    let w = weight(weights, x.len())?;
    let kind = ProjectionKind::parse(method).map_err(pyerr)?;
    let result = projection::project(&a, &w, &x, kind).map_err(pyerr)?;
    let out = PyDict::new(py);
    out.set_item("projected", result.projected.values().to_vec())?;
    out.set_item("imag_leak", result.imag_leak)?;
    out.set_item("coords", result.coords)?;
    Ok(out)
}

/// Variable-projection Gauss-Newton estimation; `method` is vpgn | svpgn |
/// svpgn-h. Returns the full report as a dict.
#[pyfunction]
#[pyo3(signature = (values, init, method = "svpgn", weights = "identity", max_iters = 200))]
fn estimate<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    init: Vec<f64>,
    method: &str,
    weights: &str,
    max_iters: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let x = signal(values)?;
    let a0 = glrr(init)?;
    let variant = SolverVariant::parse(method).map_err(pyerr)?;
    let w = weight(weights, x.len())?;
    let mut opts = VpgnOptions::new(variant, w);
    opts.max_iters = max_iters;
    let report = optimizer::vpgn_solve(&x, &a0, &opts).map_err(pyerr)?;
    let out = PyDict::new(py);
    out.set_item("estimate", report.estimate.values().to_vec())?;
    out.set_item("final_glrr", report.final_glrr.coeffs().to_vec())?;
    out.set_item(
        "stop_reason",
        match report.stop_reason {
            StopReason::StepExhausted => "step-exhausted",
            StopReason::MaxIters => "max-iters",
        },
    )?;
    out.set_item(
        "necessary_condition_residual",
        report.necessary_condition_residual,
    )?;
    let iterations: Vec<(usize, usize, f64, f64, f64)> = report
        .iterations
        .iter()
        .map(|it| (it.k, it.tau, it.objective, it.gamma, it.delta_norm))
        .collect();
    out.set_item("iterations", iterations)?;
    Ok(out)
}

/// Constructed test problem with a known stationary point; `kind` is
/// solution | projection. Returns a dict with `observed`, `y_star`,
/// `a_star`.
#[pyfunction]
#[pyo3(signature = (n, kind = "solution", weights = "identity"))]
fn make_example<'py>(
    py: Python<'py>,
    n: usize,
    kind: &str,
    weights: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let w = weight(weights, n)?;
    let (observed, y_star, a_star) = match kind {
        "solution" => {
            let ex = harness::make_example(n, &w).map_err(pyerr)?;
            (ex.x, ex.y_star, ex.a_star)
        }
        "projection" => {
            let ex = harness::make_projection_example(n, &w).map_err(pyerr)?;
            (ex.p, ex.y_star, ex.a_star)
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown example kind '{other}' (expected solution|projection)"
            )))
        }
    };
    let out = PyDict::new(py);
    out.set_item("observed", observed.values().to_vec())?;
    out.set_item("y_star", y_star.values().to_vec())?;
    out.set_item("a_star", a_star.coeffs().to_vec())?;
    Ok(out)
}

#[pymodule]
fn glrr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(series_rank, m)?)?;
    m.add_function(wrap_pyfunction!(glrr_residual, m)?)?;
    m.add_function(wrap_pyfunction!(acyclic_square, m)?)?;
    m.add_function(wrap_pyfunction!(choose_tau_and_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(eval_poly, m)?)?;
    m.add_function(wrap_pyfunction!(eval_poly_compensated, m)?)?;
    m.add_function(wrap_pyfunction!(basis_stable, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(make_example, m)?)?;
    Ok(())
}
