//! Python bindings for `hees_core`.

use std::collections::HashMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use hees_core::adaptation;
use hees_core::diagnostics::{self, RunTrace, COLUMNS};
use hees_core::harness::config::parse_config;
use hees_core::harness::experiment::{aggregate_median as median, run_experiment_with_threads};
use hees_core::objectives;
use hees_core::sampling;
use hees_core::strategies::{self, Algorithm, Strategy, StrategyState};
use hees_core::{RealVector, SquareMatrix};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<SquareMatrix> {
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    SquareMatrix::from_rows(&refs).map_err(value_error)
}

fn rows(m: &SquareMatrix) -> Vec<Vec<f64>> {
    (0..m.dim()).map(|i| m.row(i).to_vec()).collect()
}

fn vector(v: Vec<f64>) -> PyResult<RealVector> {
    RealVector::new(v).map_err(value_error)
}

fn columns(trace: &RunTrace) -> HashMap<String, Vec<f64>> {
    COLUMNS
        .iter()
        .map(|c| (c.to_string(), trace.column(c).expect("known column")))
        .collect()
}

/// Seeded random stream.
#[pyclass(module = "hees")]
struct RngStream(sampling::RngStream);

#[pymethods]
impl RngStream {
    #[new]
    fn new(seed: u64) -> Self {
        Self(sampling::RngStream::new(seed))
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed()
    }

    fn split(&self, index: u64) -> Self {
        Self(self.0.split(index))
    }

    fn uniform(&mut self) -> f64 {
        self.0.uniform()
    }

    fn standard_normal(&mut self) -> f64 {
        self.0.standard_normal()
    }

    /// `d` orthogonal Gaussian-length directions, as rows.
    fn sample_orthogonal(&mut self, d: usize) -> PyResult<Vec<Vec<f64>>> {
        if d == 0 {
            return Err(PyValueError::new_err("dimension must be positive"));
        }
        let block = sampling::sample_orthogonal(&mut self.0, d);
        Ok(block.directions().iter().map(|b| b.to_vec()).collect())
    }
}

/// Convex quadratic `f(x) = f* + (x - x*)^T H (x - x*) / 2`.
#[pyclass(module = "hees")]
struct QuadraticProblem(objectives::QuadraticProblem);

#[pymethods]
impl QuadraticProblem {
    #[new]
    #[pyo3(signature = (hessian, optimum, optimal_value = 0.0))]
    fn new(hessian: Vec<Vec<f64>>, optimum: Vec<f64>, optimal_value: f64) -> PyResult<Self> {
        objectives::QuadraticProblem::new(matrix(hessian)?, vector(optimum)?, optimal_value)
            .map(Self)
            .map_err(value_error)
    }

    #[staticmethod]
    fn sphere(d: usize) -> Self {
        Self(objectives::QuadraticProblem::sphere(d))
    }

    #[staticmethod]
    #[pyo3(signature = (d, condition, normalize_det = true, rotated = true, seed = 0))]
    fn ellipsoid(d: usize, condition: f64, normalize_det: bool, rotated: bool, seed: u64) -> PyResult<Self> {
        let mut rng = sampling::RngStream::new(seed);
        objectives::make_ellipsoid(d, condition, normalize_det, &mut rng, rotated)
            .map(Self)
            .map_err(value_error)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn hessian(&self) -> Vec<Vec<f64>> {
        rows(self.0.hessian())
    }

    #[getter]
    fn optimum(&self) -> Vec<f64> {
        self.0.optimum().to_vec()
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<f64> {
        self.0.evaluate(&x).map_err(value_error)
    }

    fn f_mu(&self, m: Vec<f64>) -> PyResult<f64> {
        if m.len() != self.0.dim() {
            return Err(PyValueError::new_err("dimension mismatch"));
        }
        Ok(objectives::f_mu(&self.0, &m))
    }
}

#[pyfunction]
fn gram_schmidt(vectors: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let vs = vectors.into_iter().map(vector).collect::<PyResult<Vec<_>>>()?;
    let out = hees_core::linalg::gram_schmidt(&vs).map_err(value_error)?;
    Ok(out.iter().map(|v| v.to_vec()).collect())
}

#[pyfunction]
fn symmetric_eigenvalues(m: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    hees_core::linalg::sym_eig(&matrix(m)?).map_err(value_error)
}

#[pyfunction]
fn compute_g_pair(h1: f64, h2: f64, u1: Vec<f64>, u2: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let g = adaptation::compute_g_pair(h1, h2, &vector(u1)?, &vector(u2)?).map_err(value_error)?;
    Ok(rows(g.matrix()))
}

#[pyfunction]
fn predicted_trace_reduction(h1: f64, h2: f64) -> PyResult<f64> {
    adaptation::predicted_trace_reduction(h1, h2).map_err(value_error)
}

#[pyfunction]
fn condition_number(c: Vec<Vec<f64>>) -> PyResult<f64> {
    diagnostics::condition_number(&matrix(c)?).map_err(value_error)
}

#[pyfunction]
fn normalized_trace_distance(c: Vec<Vec<f64>>, h: Vec<Vec<f64>>) -> PyResult<f64> {
    diagnostics::normalized_trace_distance(&matrix(c)?, &matrix(h)?).map_err(value_error)
}

#[pyfunction]
fn alpha_target(c0: Vec<Vec<f64>>, h: Vec<Vec<f64>>) -> PyResult<f64> {
    diagnostics::alpha_target(&matrix(c0)?, &matrix(h)?).map_err(value_error)
}

/// Runs one optimizer and returns its trace as a dict of columns.
#[pyfunction]
#[pyo3(signature = (algorithm, problem, m0, budget, seed, sigma0 = 1.0, a0 = None))]
fn run(
    algorithm: &str,
    problem: &QuadraticProblem,
    m0: Vec<f64>,
    budget: usize,
    seed: u64,
    sigma0: f64,
    a0: Option<Vec<Vec<f64>>>,
) -> PyResult<HashMap<String, Vec<f64>>> {
    let algorithm: Algorithm = algorithm.parse().map_err(PyValueError::new_err)?;
    let d = problem.0.dim();
    let factor = a0.map(matrix).transpose()?.unwrap_or_else(|| SquareMatrix::identity(d));
    let state = StrategyState::new(vector(m0)?, sigma0, factor).map_err(value_error)?;
    let mut rng = sampling::RngStream::new(seed);
    let trace = strategies::run(&Strategy::default_for(algorithm, d), &problem.0, state, &mut rng, budget)
        .map_err(value_error)?;
    if let Some(e) = trace.error {
        return Err(value_error(e));
    }
    Ok(columns(&trace))
}

/// Runs an experiment config; returns `(seed, columns)` per seed.
#[pyfunction]
#[pyo3(signature = (text, threads = None))]
fn run_config(py: Python<'_>, text: &str, threads: Option<usize>) -> PyResult<Vec<(u64, HashMap<String, Vec<f64>>)>> {
    let cfg = parse_config(text).map_err(value_error)?;
    let traces = py
        .detach(|| run_experiment_with_threads(&cfg, threads))
        .map_err(value_error)?;
    Ok(traces.iter().map(|t| (t.seed, columns(t))).collect())
}

/// Validates a config and returns the defaults-applied algorithm name.
#[pyfunction]
fn validate_config(text: &str) -> PyResult<String> {
    parse_config(text).map(|c| c.algorithm.to_string()).map_err(value_error)
}

/// Per-iteration lower median of `column` over the runs of a config.
#[pyfunction]
#[pyo3(signature = (text, column, threads = None))]
fn aggregate_median(py: Python<'_>, text: &str, column: &str, threads: Option<usize>) -> PyResult<Vec<(u64, f64)>> {
    let cfg = parse_config(text).map_err(value_error)?;
    let traces = py
        .detach(|| run_experiment_with_threads(&cfg, threads))
        .map_err(value_error)?;
    median(&traces, column).map_err(value_error)
}

#[pymodule]
fn hees(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<RngStream>()?;
    m.add_class::<QuadraticProblem>()?;
    m.add_function(wrap_pyfunction!(gram_schmidt, m)?)?;
    m.add_function(wrap_pyfunction!(symmetric_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(compute_g_pair, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_trace_reduction, m)?)?;
    m.add_function(wrap_pyfunction!(condition_number, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_trace_distance, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_target, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_median, m)?)?;
    Ok(())
}
