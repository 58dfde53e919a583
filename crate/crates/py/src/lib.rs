use clap::ValueEnum;
use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use serde_json::Value;

use cmtop::cli::{self, Case, LaxFamily, PaperFamily};
use cmtop::elliptic::{self, ThetaParams};
use cmtop::error::Error;
use cmtop::invariants::check_commute;
use cmtop::linalg::CMat;

fn err(e: Error) -> PyErr {
    match e {
        Error::Truncation { .. } | Error::Singular(_) | Error::NotInvertible(_) | Error::DivisionByZero => {
            PyArithmeticError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn choice<T: ValueEnum>(s: &str, what: &str) -> PyResult<T> {
    T::from_str(s, true).map_err(|_| PyValueError::new_err(format!("unknown {what} `{s}`")))
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

fn params(tau: Complex64) -> PyResult<ThetaParams> {
    ThetaParams::new(tau).map_err(err)
}

/// Symbolic Lax matrix as a JSON-like dict.
#[pyfunction]
fn lax<'py>(py: Python<'py>, family: &str, n: usize) -> PyResult<Bound<'py, PyAny>> {
    let l = cli::build_lax(choice(family, "family")?, n).map_err(err)?;
    to_py(py, &l.to_json().map_err(err)?)
}

/// L(z) at a numeric g, as a list of rows.
#[pyfunction]
fn lax_eval(family: &str, z: Complex64, g: Vec<Vec<Complex64>>) -> PyResult<Vec<Vec<Complex64>>> {
    let n = g.len();
    if g.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("g must be square"));
    }
    let l = cli::build_lax(choice::<LaxFamily>(family, "family")?, n).map_err(err)?;
    let gm = CMat::from_fn(n, n, |i, j| g[i][j]);
    let m = l.evaluate(z, Some(&gm)).map_err(err)?;
    Ok((0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect())
}

#[pyfunction]
#[pyo3(signature = (family, n, kmax = 2, index = "auto", order = 1))]
fn hamiltonians<'py>(
    py: Python<'py>,
    family: &str,
    n: usize,
    kmax: usize,
    index: &str,
    order: i32,
) -> PyResult<Bound<'py, PyAny>> {
    let v = cli::ham_report(choice(family, "family")?, n, kmax, index, order).map_err(err)?;
    to_py(py, &v)
}

/// Pairwise exact brackets of the polynomials in a JSON document (any layout `check commute` reads).
#[pyfunction]
fn commute<'py>(py: Python<'py>, doc: &str) -> PyResult<Bound<'py, PyAny>> {
    let v: Value = serde_json::from_str(doc).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let items = cli::read_polys(&v).map_err(err)?;
    if items.len() < 2 {
        return Err(PyValueError::new_err("need at least two polynomials"));
    }
    to_py(py, &check_commute(&items).map_err(err)?.to_json())
}

#[pyfunction]
#[pyo3(signature = (family, n, order = 1))]
fn against_paper<'py>(py: Python<'py>, family: &str, n: usize, order: i32) -> PyResult<Bound<'py, PyAny>> {
    let (v, _) = cli::against_paper(choice::<PaperFamily>(family, "family")?, n, order).map_err(err)?;
    to_py(py, &v)
}

/// Runs one verification case; returns the list of residual reports.
#[pyfunction]
#[pyo3(signature = (case, seed = None, n = 2, q = vec![1e-2, 1e-4, 1e-6], x = vec![1e-2, 1e-4, 1e-6], draws = 10, tau = Complex64::new(0.0, 2.0), family = None))]
#[allow(clippy::too_many_arguments)]
fn verify<'py>(
    py: Python<'py>,
    case: &str,
    seed: Option<u64>,
    n: usize,
    q: Vec<f64>,
    x: Vec<f64>,
    draws: usize,
    tau: Complex64,
    family: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let family = family.map(|f| choice::<PaperFamily>(f, "family")).transpose()?;
    let reps = cli::run_case(choice::<Case>(case, "case")?, n, seed, &q, &x, draws, tau, family).map_err(err)?;
    to_py(py, &Value::Array(reps.iter().map(|r| r.to_json()).collect()))
}

#[pyfunction]
#[pyo3(signature = (k, m, z, tau = Complex64::new(0.0, 2.0)))]
fn theta(k: u8, m: u8, z: Complex64, tau: Complex64) -> PyResult<Complex64> {
    elliptic::theta_km(k, m, z, &params(tau)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (u, z, tau = Complex64::new(0.0, 2.0)))]
fn phi(u: Complex64, z: Complex64, tau: Complex64) -> PyResult<Complex64> {
    elliptic::phi(u, z, &params(tau)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (z, tau = Complex64::new(0.0, 2.0)))]
fn wp(z: Complex64, tau: Complex64) -> PyResult<Complex64> {
    elliptic::wp(z, &params(tau)?).map_err(err)
}

#[pymodule]
fn cmtop_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(lax, m)?)?;
    m.add_function(wrap_pyfunction!(lax_eval, m)?)?;
    m.add_function(wrap_pyfunction!(hamiltonians, m)?)?;
    m.add_function(wrap_pyfunction!(commute, m)?)?;
    m.add_function(wrap_pyfunction!(against_paper, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(theta, m)?)?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(wp, m)?)?;
    Ok(())
}
