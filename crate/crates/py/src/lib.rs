//! Python bindings. Structured results cross the boundary as Python objects
//! decoded from the JSON the core crate already produces.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use locdep::bounds::{estimate_moments, estimate_r_terms, theorem_bound, BoundIngredients, TheoremId};
use locdep::empirics::{kolmogorov_distance, nonuniform_profile};
use locdep::experiment::{run, run_rate_study, ExperimentConfig};
use locdep::{stein, verify, Error, FieldModel, ModelSpec};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Usage { .. } | Error::InvalidArgument(_) | Error::Structural(_) | Error::Json(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[pyclass(name = "NeighborhoodSystem", module = "pylocdep", from_py_object)]
#[derive(Clone)]
struct PySystem {
    inner: locdep::NeighborhoodSystem,
}

#[pymethods]
impl PySystem {
    /// Parse a JSON system document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        locdep::NeighborhoodSystem::from_json(text)
            .map(|inner| PySystem { inner })
            .map_err(to_py_err)
    }

    /// Dependency-graph system: `A_i` is the closed neighborhood of `i`.
    #[staticmethod]
    fn from_adjacency(labels: Vec<String>, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        locdep::NeighborhoodSystem::from_adjacency(labels, &edges)
            .map(|inner| PySystem { inner })
            .map_err(to_py_err)
    }

    /// m-dependent lattice system on a box of the given shape.
    #[staticmethod]
    fn lattice(shape: Vec<usize>, m: usize) -> PyResult<Self> {
        locdep::NeighborhoodSystem::lattice_m_dependent(&shape, m)
            .map(|inner| PySystem { inner })
            .map_err(to_py_err)
    }

    fn closure_extend(&self) -> PyResult<Self> {
        self.inner.closure_extend().map(|inner| PySystem { inner }).map_err(to_py_err)
    }

    fn level(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.level())
    }

    fn kappa_stats(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.kappa_stats())
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "Model", module = "pylocdep")]
struct PyModel {
    inner: FieldModel,
}

#[pymethods]
impl PyModel {
    /// Build from a model spec, e.g. `{"kind": "iid", "n": 3, "base": "rademacher"}`.
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        let spec: ModelSpec = serde_json::from_str(spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
        spec.build().map(|inner| PyModel { inner }).map_err(to_py_err)
    }

    fn spec(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, self.inner.spec())
    }

    fn system(&self) -> PySystem {
        PySystem {
            inner: self.inner.system().clone(),
        }
    }

    /// Replace the neighborhood system (validated against the model).
    fn with_system(&self, system: PySystem) -> PyResult<Self> {
        self.inner
            .clone()
            .with_system(system.inner)
            .map(|inner| PyModel { inner })
            .map_err(to_py_err)
    }

    fn sample(&self, seed: u64) -> Vec<f64> {
        self.inner.sample(seed).values
    }

    fn is_enumerable(&self) -> bool {
        self.inner.is_enumerable()
    }

    /// Exact law of `W` as `(value, probability)` pairs.
    fn exact_enumerate(&self) -> PyResult<Vec<(f64, f64)>> {
        self.inner
            .exact_enumerate()
            .map(|atoms| atoms.into_iter().map(|a| (a.value, a.prob)).collect())
            .map_err(to_py_err)
    }

    #[pyo3(signature = (replicates = 100_000, seed = 0))]
    fn r_terms(&self, py: Python<'_>, replicates: u64, seed: u64) -> PyResult<Py<PyAny>> {
        let r = py
            .detach(|| estimate_r_terms(&self.inner, self.inner.system(), replicates, seed))
            .map_err(to_py_err)?;
        to_py(py, &r)
    }

    #[pyo3(signature = (p, replicates = 100_000, seed = 0))]
    fn moments(&self, py: Python<'_>, p: f64, replicates: u64, seed: u64) -> PyResult<Py<PyAny>> {
        let m = py
            .detach(|| estimate_moments(&self.inner, self.inner.system(), p, replicates, seed))
            .map_err(to_py_err)?;
        to_py(py, &m)
    }

    /// Theorem 2.1 bound from freshly estimated r-terms.
    #[pyo3(signature = (replicates = 100_000, seed = 0))]
    fn bound_2_1(&self, py: Python<'_>, replicates: u64, seed: u64) -> PyResult<Py<PyAny>> {
        let report = py
            .detach(|| {
                let r = estimate_r_terms(&self.inner, self.inner.system(), replicates, seed)?;
                theorem_bound(
                    TheoremId::T2_1,
                    3.0,
                    &BoundIngredients {
                        rterms: Some(&r),
                        ..Default::default()
                    },
                )
            })
            .map_err(to_py_err)?;
        to_py(py, &report)
    }

    #[pyo3(signature = (replicates = 100_000, seed = 0, delta = 1e-3, zgrid = None))]
    fn distance(
        &self,
        py: Python<'_>,
        replicates: u64,
        seed: u64,
        delta: f64,
        zgrid: Option<Vec<f64>>,
    ) -> PyResult<Py<PyAny>> {
        let d = py
            .detach(|| match &zgrid {
                Some(z) => nonuniform_profile(&self.inner, replicates, seed, delta, z),
                None => kolmogorov_distance(&self.inner, replicates, seed, delta),
            })
            .map_err(to_py_err)?;
        to_py(py, &d)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Run a JSON experiment config and return the report.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &str) -> PyResult<Py<PyAny>> {
    let config = ExperimentConfig::from_json(config).map_err(to_py_err)?;
    let report = py.detach(|| run(&config)).map_err(to_py_err)?;
    to_py(py, &report)
}

/// Run a JSON config with a size ladder and return the rate report.
#[pyfunction]
fn rate_study(py: Python<'_>, config: &str) -> PyResult<Py<PyAny>> {
    let config = ExperimentConfig::from_json(config).map_err(to_py_err)?;
    let report = py.detach(|| run_rate_study(&config)).map_err(to_py_err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (seed = 1))]
fn verify_all(py: Python<'_>, seed: u64) -> PyResult<Py<PyAny>> {
    let report = py.detach(|| verify::run_all(seed)).map_err(to_py_err)?;
    to_py(py, &report)
}

#[pyfunction]
fn stein_solution(z: f64, alpha: f64, w: f64) -> PyResult<f64> {
    stein::stein_solution(z, alpha, w).map(|v| v.value).map_err(to_py_err)
}

#[pyfunction]
fn smoothed_indicator(z: f64, alpha: f64, w: f64) -> PyResult<f64> {
    stein::smoothed_indicator(z, alpha, w).map_err(to_py_err)
}

#[pymodule]
fn pylocdep(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(rate_study, m)?)?;
    m.add_function(wrap_pyfunction!(verify_all, m)?)?;
    m.add_function(wrap_pyfunction!(stein_solution, m)?)?;
    m.add_function(wrap_pyfunction!(smoothed_indicator, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
