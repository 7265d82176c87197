//! Python bindings. Results come back as plain dicts built from the same JSON
//! the CLI writes.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use mse_core::estimators::{parse_methods, run_estimator, EstimatorConfig};
use mse_core::simgen::{generate, PopulationSpec};
use mse_core::stochastics::RngStream;
use mse_core::table::builtin_dataset;
use mse_core::thbm::{fit_thbm, ThbmConfig};
use mse_core::uncertainty::{self, BenchmarkConfig, BootstrapConfig, BootstrapMode};
use mse_core::{Method, MseError};

fn err(e: MseError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

fn thbm_config(k: usize, max_iter: usize, seed: u64) -> ThbmConfig {
    ThbmConfig { k, max_iter, seed, ..ThbmConfig::default() }
}

fn method(name: &str) -> PyResult<Method> {
    name.parse().map_err(err)
}

/// Three-list capture table, cells 111, 110, 101, 011, 100, 010, 001.
#[pyclass(name = "TrsTable", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTable(mse_core::TrsTable);

#[pymethods]
impl PyTable {
    #[new]
    fn new(counts: [i64; 7]) -> PyResult<Self> {
        mse_core::TrsTable::validate(counts).map(Self).map_err(err)
    }

    #[staticmethod]
    fn dataset(name: &str) -> PyResult<Self> {
        builtin_dataset(name).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        mse_core::TrsTable::from_json_str(s).map(Self).map_err(err)
    }

    fn to_json(&self) -> String {
        self.0.to_json_string()
    }

    #[getter]
    fn counts(&self) -> [u64; 7] {
        self.0.counts()
    }

    #[getter]
    fn x0(&self) -> u64 {
        self.0.x0()
    }

    #[getter]
    fn margins(&self) -> [u64; 3] {
        self.0.margins()
    }

    fn __repr__(&self) -> String {
        format!("TrsTable({:?})", self.0.counts())
    }
}

/// Point estimate for one method.
#[pyfunction]
#[pyo3(signature = (table, method_name, k=1000, max_iter=500, seed=0))]
fn estimate<'py>(
    py: Python<'py>,
    table: &PyTable,
    method_name: &str,
    k: usize,
    max_iter: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let m = method(method_name)?;
    let cfg = EstimatorConfig { thbm: thbm_config(k, max_iter, seed), ..EstimatorConfig::default() };
    let r = py.detach(|| run_estimator(&table.0, m, &cfg)).map_err(err)?;
    to_py(py, &r)
}

/// Full THBM fit including the iteration trace.
#[pyfunction]
#[pyo3(name = "fit_thbm", signature = (table, k=1000, max_iter=500, seed=0))]
fn py_fit_thbm<'py>(py: Python<'py>, table: &PyTable, k: usize, max_iter: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = thbm_config(k, max_iter, seed);
    let fit = py.detach(|| fit_thbm(&table.0, &cfg)).map_err(err)?;
    to_py(py, &fit)
}

/// Bootstrap interval for one method; returns `(estimate, report)`.
#[pyfunction]
#[pyo3(signature = (table, method_name, b=200, seed=0, mode="nonparametric", k=1000, max_iter=500))]
#[allow(clippy::too_many_arguments)]
fn bootstrap<'py>(
    py: Python<'py>,
    table: &PyTable,
    method_name: &str,
    b: usize,
    seed: u64,
    mode: &str,
    k: usize,
    max_iter: usize,
) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let m = method(method_name)?;
    let est = EstimatorConfig { thbm: thbm_config(k, max_iter, seed), ..EstimatorConfig::default() };
    let mut cfg = BootstrapConfig::new(b, seed);
    cfg.mode = mode.parse::<BootstrapMode>().map_err(err)?;
    let (point, report) = py.detach(|| uncertainty::bootstrap_method(&table.0, m, &est, &cfg)).map_err(err)?;
    Ok((to_py(py, &point)?, to_py(py, &report)?))
}

/// Simulated tables from a preset name or spec file; returns
/// `[(table, x000), ...]`.
#[pyfunction]
#[pyo3(signature = (pop, n=None, reps=1, seed=0))]
fn simulate(pop: &str, n: Option<u64>, reps: usize, seed: u64) -> PyResult<Vec<(PyTable, u64)>> {
    let spec = PopulationSpec::resolve(pop, n).map_err(err)?;
    (0..reps as u64)
        .map(|r| {
            let sim = generate(&spec, &mut RngStream::new(seed, r)).map_err(err)?;
            Ok((PyTable(sim.table), sim.x000))
        })
        .collect()
}

/// Simulation benchmark; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (pop, n=500, reps=100, methods="all", b=200, seed=0))]
fn benchmark<'py>(
    py: Python<'py>,
    pop: &str,
    n: u64,
    reps: usize,
    methods: &str,
    b: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = PopulationSpec::resolve(pop, Some(n)).map_err(err)?;
    let methods = parse_methods(methods).map_err(err)?;
    let mut cfg = BenchmarkConfig::new(reps, seed);
    cfg.b = b;
    let report = py.detach(|| uncertainty::benchmark(&spec, &methods, &cfg)).map_err(err)?;
    to_py(py, &report)
}

/// Log-transformed interval `(lower, upper)`.
#[pyfunction]
fn chao_ci(n_hat: f64, x0: u64, sigma: f64) -> PyResult<(f64, f64)> {
    uncertainty::chao_ci(n_hat, x0, sigma).map_err(err)
}

/// Average annual cumulative incidence rate per 100,000.
#[pyfunction]
fn aacir(cases: f64, years: f64, persons: f64) -> PyResult<f64> {
    uncertainty::aacir(cases, years, persons).map_err(err)
}

#[pymodule]
fn mse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTable>()?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(py_fit_thbm, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(chao_ci, m)?)?;
    m.add_function(wrap_pyfunction!(aacir, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
