//! Python module `sim2real`: ground-truth functions, explanations, suite runs
//! and stimulus generation.
//!
//! Long computations release the interpreter lock while they run.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use sim2real::experiments::{run_suite, SimConfig};
use sim2real::stimuli::{generate_stimuli as generate, parse_stimuli as parse, write_stimuli, StimuliConfig};
use sim2real::{ExplainerKind, FunctionId};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn function_id(name: &str) -> PyResult<FunctionId> {
    name.parse().map_err(value_error)
}

/// One of the built-in ground-truth classifiers, `"box"` or `"piece"`.
#[pyclass(name = "GroundTruth", frozen)]
struct PyGroundTruth {
    inner: sim2real::GroundTruth,
}

#[pymethods]
impl PyGroundTruth {
    #[new]
    fn new(function: &str) -> PyResult<Self> {
        Ok(Self {
            inner: sim2real::GroundTruth::builtin(function_id(function)?),
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// The 0/1 label of `x`.
    fn predict(&self, x: Vec<f64>) -> PyResult<u8> {
        self.inner.predict(&x).map_err(value_error)
    }

    /// Whether the label of `x` depends on 0-based feature `d`.
    fn uses_feature(&self, x: Vec<f64>, d: usize) -> PyResult<bool> {
        self.inner.uses_feature(&x, d).map_err(value_error)
    }
}

/// The four explanation families fitted for one function.
#[pyclass(name = "Explainers", frozen)]
struct PyExplainers {
    inner: sim2real::Explainers,
}

#[pymethods]
impl PyExplainers {
    /// Builds explainers with the default settings, or with those of a
    /// simulation config given as TOML text.
    #[new]
    #[pyo3(signature = (function, seed=None, config=None))]
    fn new(py: Python<'_>, function: &str, seed: Option<u64>, config: Option<&str>) -> PyResult<Self> {
        let id = function_id(function)?;
        let mut cfg = match config {
            Some(text) => SimConfig::from_toml(text, "<config>").map_err(value_error)?,
            None => SimConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let inner = py.detach(|| cfg.explainers(id)).map_err(value_error)?;
        Ok(Self { inner })
    }

    /// Returns `(weights, intercept)` of the `kind` explanation at `x`.
    fn explain(&self, kind: &str, x: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
        let kind: ExplainerKind = kind.parse().map_err(value_error)?;
        let a = self.inner.explain(kind, &x).map_err(value_error)?;
        Ok((a.weights, a.intercept))
    }
}

/// Rounds `v` to `figures` significant figures.
#[pyfunction]
fn round_sig(v: f64, figures: u32) -> PyResult<f64> {
    sim2real::round_sig(v, figures).map_err(value_error)
}

/// Returns `(mean, ci95_halfwidth, n)`.
#[pyfunction]
fn mean_ci95(samples: Vec<f64>) -> PyResult<(f64, f64, usize)> {
    let s = sim2real::mean_ci95(&samples).map_err(value_error)?;
    Ok((s.mean, s.ci95_halfwidth, s.n))
}

/// Runs a simulation suite from TOML text and returns one dict per result
/// cell with keys `function`, `condition`, `kind`, `mean`, `ci95` and `n`.
#[pyfunction]
#[pyo3(signature = (config, seed=None))]
fn simulate<'py>(py: Python<'py>, config: &str, seed: Option<u64>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = SimConfig::from_toml(config, "<config>").map_err(value_error)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = py.detach(|| run_suite(&cfg)).map_err(value_error)?;
    out.table
        .rows()
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("function", r.function.as_str())?;
            d.set_item("condition", &r.condition)?;
            d.set_item("kind", r.kind.as_str())?;
            d.set_item("mean", r.stat.mean)?;
            d.set_item("ci95", r.stat.ci95_halfwidth)?;
            d.set_item("n", r.stat.n)?;
            Ok(d)
        })
        .collect()
}

/// Selects study stimuli from a stimuli config given as TOML text and
/// returns the stimulus file contents.
#[pyfunction]
fn generate_stimuli(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg = StimuliConfig::from_toml(config, "<config>").map_err(value_error)?;
    let set = py.detach(|| generate(&cfg)).map_err(value_error)?;
    Ok(write_stimuli(&set))
}

/// Parses a stimulus file into one dict per row.
#[pyfunction]
fn parse_stimuli<'py>(py: Python<'py>, text: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let set = parse(text, "<stimuli>").map_err(value_error)?;
    set.rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("item", &r.item)?;
            d.set_item("phase", r.phase.as_str())?;
            d.set_item("category", r.category.map(|c| c.as_str()))?;
            d.set_item("kind", r.kind.as_str())?;
            d.set_item("answer", r.answer)?;
            d.set_item("x", &r.x)?;
            d.set_item("weights", &r.attribution.weights)?;
            d.set_item("intercept", r.attribution.intercept)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "sim2real")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGroundTruth>()?;
    m.add_class::<PyExplainers>()?;
    m.add_function(wrap_pyfunction!(round_sig, m)?)?;
    m.add_function(wrap_pyfunction!(mean_ci95, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(generate_stimuli, m)?)?;
    m.add_function(wrap_pyfunction!(parse_stimuli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
