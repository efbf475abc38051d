//! Python bindings for `specreg`.
//!
//! Structured arguments and results cross the boundary as JSON-compatible
//! dicts and lists, using the same field names as the CLI's JSON output.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use specreg::estimators::{fit as fit_bundle, Fitter};
use specreg::filters::{verify_catalog, FilterSpec};
use specreg::inference::{coverage_experiment, wild_bootstrap, BootstrapOptions, CoverageConfig};
use specreg::simulation::{run_experiment, SimulationConfig};
use specreg::solvers::{SolverConfig, StopKind, StoppingRule};
use specreg::spectral::RegressionProblem;
use specreg::Error;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Input(_) => PyValueError::new_err(err.to_string()),
        Error::Io { .. } | Error::Parse { .. } => PyOSError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn from_obj<T: DeserializeOwned>(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_obj<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn problem(x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<RegressionProblem> {
    let n = x.len();
    let p = x.first().map_or(0, Vec::len);
    if x.iter().any(|row| row.len() != p) {
        return Err(PyValueError::new_err("rows of x differ in length"));
    }
    let x = DMatrix::from_fn(n, p, |i, j| x[i][j]);
    RegressionProblem::new(x, DVector::from_vec(y)).map_err(to_py)
}

/// Closed-form fit. `filter` is e.g. `{"method": "ridge", "alpha": 0.1}`.
#[pyfunction]
#[pyo3(signature = (x, y, filter, b_n = 0.0))]
fn fit(py: Python<'_>, x: Vec<Vec<f64>>, y: Vec<f64>, filter: &Bound<'_, PyAny>, b_n: f64) -> PyResult<Py<PyAny>> {
    let problem = problem(x, y)?;
    let spec: FilterSpec = from_obj(py, filter)?;
    let bundle = py.detach(|| fit_bundle(&problem, &Fitter::Spectral(spec), b_n)).map_err(to_py)?;
    to_obj(py, &bundle)
}

/// Iterative fit. `solver` is e.g. `{"scheme": "landweber", "dt": 1e-4}`;
/// `stop` is one of `"discrepancy"`, `"adjusted_optimal"`, `"fixed_k"`.
#[pyfunction]
#[pyo3(signature = (
    x, y, solver, stop, b_n = 0.0, varsigma = 1.0, noise_norm = None, truth = None,
    k_min = 1, k_max = 5000, k = None
))]
#[allow(clippy::too_many_arguments)]
fn fit_iterative(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    solver: &Bound<'_, PyAny>,
    stop: &Bound<'_, PyAny>,
    b_n: f64,
    varsigma: f64,
    noise_norm: Option<f64>,
    truth: Option<Vec<f64>>,
    k_min: usize,
    k_max: usize,
    k: Option<usize>,
) -> PyResult<Py<PyAny>> {
    let problem = problem(x, y)?;
    let config: SolverConfig = from_obj(py, solver)?;
    let kind: StopKind = from_obj(py, stop)?;
    let rule = match kind {
        StopKind::Discrepancy => {
            let norm = noise_norm.ok_or_else(|| PyValueError::new_err("discrepancy stopping needs noise_norm"))?;
            StoppingRule::discrepancy(varsigma, norm, k_max)
        }
        StopKind::AdjustedOptimal => {
            let truth = truth.ok_or_else(|| PyValueError::new_err("adjusted_optimal stopping needs truth"))?;
            StoppingRule::adjusted_optimal(DVector::from_vec(truth), k_min, k_max)
        }
        StopKind::FixedK => StoppingRule::fixed(k.ok_or_else(|| PyValueError::new_err("fixed_k stopping needs k"))?),
    };
    let fitter = Fitter::Iterative { config, stop: rule };
    let bundle = py.detach(|| fit_bundle(&problem, &fitter, b_n)).map_err(to_py)?;
    to_obj(py, &bundle)
}

/// Wild bootstrap of the max-statistic quantiles for a closed-form fit.
#[pyfunction]
#[pyo3(signature = (x, y, filter, b_n, seed, replicates = 500, alpha_star = 0.05))]
#[allow(clippy::too_many_arguments)]
fn bootstrap(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    filter: &Bound<'_, PyAny>,
    b_n: f64,
    seed: u64,
    replicates: usize,
    alpha_star: f64,
) -> PyResult<Py<PyAny>> {
    let problem = problem(x, y)?;
    let spec: FilterSpec = from_obj(py, filter)?;
    let options = BootstrapOptions { alpha_star, replicates, seed };
    let report = py.detach(|| wild_bootstrap(&problem, &spec, b_n, &options)).map_err(to_py)?;
    to_obj(py, &report)
}

/// Run a simulation study from a config dict; `seed` overrides the config's seed.
#[pyfunction]
#[pyo3(signature = (config, seed = None))]
fn simulate(py: Python<'_>, config: &Bound<'_, PyAny>, seed: Option<u64>) -> PyResult<Py<PyAny>> {
    let mut config: SimulationConfig = from_obj(py, config)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let reports = py.detach(|| run_experiment(&config)).map_err(to_py)?;
    to_obj(py, &reports)
}

/// Repeated fit-and-bootstrap coverage study.
#[pyfunction]
#[pyo3(signature = (config, seed = None))]
fn coverage(py: Python<'_>, config: &Bound<'_, PyAny>, seed: Option<u64>) -> PyResult<Py<PyAny>> {
    let mut config: CoverageConfig = from_obj(py, config)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let report = py.detach(|| coverage_experiment(&config)).map_err(to_py)?;
    to_obj(py, &report)
}

#[pyfunction]
#[pyo3(signature = (d = 1.0))]
fn verify_filters(py: Python<'_>, d: f64) -> PyResult<Py<PyAny>> {
    let reports = py.detach(|| verify_catalog(d)).map_err(to_py)?;
    to_obj(py, &reports)
}

#[pymodule]
fn pyspecreg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_iterative, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(coverage, m)?)?;
    m.add_function(wrap_pyfunction!(verify_filters, m)?)?;
    Ok(())
}
