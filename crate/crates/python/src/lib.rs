//! Python bindings for `advrate`.
//!
//! Results cross the boundary as plain dicts and lists; configs are dicts
//! whose keys override the Rust defaults.

use advrate::counting::CounterConfig;
use advrate::gridworld::GridConfig;
use advrate::properties::PropertyFamily;
use advrate::trainer::TrainConfig;
use advrate::verifier::VerifierConfig;
use advrate::InputBox;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

fn with_overrides<T: Serialize + DeserializeOwned>(base: T, over: Option<&Bound<'_, PyDict>>) -> PyResult<T> {
    let Some(over) = over else { return Ok(base) };
    let mut value = serde_json::to_value(&base).map_err(err)?;
    let patch: Value = from_py(over.as_any())?;
    match (&mut value, patch) {
        (Value::Object(dst), Value::Object(src)) => {
            for (k, v) in src {
                if !dst.contains_key(&k) {
                    return Err(PyValueError::new_err(format!("unknown config key `{k}`")));
                }
                dst.insert(k, v);
            }
        }
        _ => return Err(PyValueError::new_err("config must be a dict")),
    }
    serde_json::from_value(value).map_err(err)
}

fn verifier_config(epsilon: Option<f64>, max_boxes: Option<usize>) -> PyResult<VerifierConfig> {
    let mut cfg = VerifierConfig::default();
    if let Some(e) = epsilon {
        cfg.epsilon = e;
    }
    if let Some(m) = max_boxes {
        cfg.max_boxes = m;
    }
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// A feed-forward network.
#[pyclass(name = "Network", module = "advrate_py", frozen)]
struct PyNetwork {
    inner: advrate::Network,
}

#[pymethods]
impl PyNetwork {
    /// Parses the network JSON format.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyNetwork { inner: advrate::io::parse_network(text).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyNetwork { inner: advrate::io::load_network(path).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        advrate::io::network_to_json(&self.inner).map_err(err)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    #[getter]
    fn hidden_sizes(&self) -> Vec<usize> {
        self.inner.hidden_sizes()
    }

    fn forward(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.forward(&x).map_err(err)
    }

    /// Output intervals over the box given as `[(lo, hi), ...]`.
    fn propagate(&self, bounds: Vec<(f64, f64)>) -> PyResult<Vec<(f64, f64)>> {
        let bx = InputBox::from_bounds(&bounds).map_err(err)?;
        let out = advrate::propagate(&self.inner, &bx).map_err(err)?;
        Ok(out.iter().map(|i| (i.lo, i.hi)).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(input_dim={}, hidden={:?}, output_dim={})",
            self.inner.input_dim(),
            self.inner.hidden_sizes(),
            self.inner.output_dim()
        )
    }
}

/// Parses a property file (`{"properties": [...]}`) given as a dict or JSON string.
fn family(obj: &Bound<'_, PyAny>) -> PyResult<PropertyFamily> {
    let text = match obj.extract::<String>() {
        Ok(s) => s,
        Err(_) => obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?,
    };
    advrate::properties::parse_properties(&text).map_err(err)
}

fn each_property<'py, T: Serialize + Send>(
    py: Python<'py>,
    net: &PyNetwork,
    props: &Bound<'py, PyAny>,
    f: impl Fn(&advrate::Property) -> advrate::Result<T> + Send + Sync,
) -> PyResult<Bound<'py, PyAny>> {
    let fam = family(props)?;
    fam.validate_for(&net.inner).map_err(err)?;
    let out = py
        .detach(|| fam.iter().map(&f).collect::<advrate::Result<Vec<T>>>())
        .map_err(err)?;
    to_py(py, &out)
}

/// SAT/UNSAT/UNKNOWN decision for every property.
#[pyfunction]
#[pyo3(signature = (net, props, epsilon=None, max_boxes=None))]
fn decide<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    props: &Bound<'py, PyAny>,
    epsilon: Option<f64>,
    max_boxes: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = verifier_config(epsilon, max_boxes)?;
    each_property(py, net, props, |p| advrate::decide(&net.inner, p, &cfg))
}

/// Safe, violating and unknown volume fractions for every property.
#[pyfunction]
#[pyo3(signature = (net, props, epsilon=None, max_boxes=None))]
fn adversarial_rate<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    props: &Bound<'py, PyAny>,
    epsilon: Option<f64>,
    max_boxes: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = verifier_config(epsilon, max_boxes)?;
    each_property(py, net, props, |p| advrate::adversarial_rate(&net.inner, p, &cfg))
}

/// Sampling-guided rate estimate for every property.
#[pyfunction]
#[pyo3(signature = (net, props, config=None))]
fn estimate_rate<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    props: &Bound<'py, PyAny>,
    config: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = with_overrides(CounterConfig::default(), config)?;
    each_property(py, net, props, |p| advrate::counting::estimate_rate(&net.inner, p, &cfg))
}

/// The collision property family of the grid world, as a property-file dict.
#[pyfunction]
#[pyo3(signature = (grid=None))]
fn jumping_world_properties<'py>(
    py: Python<'py>,
    grid: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyAny>> {
    let grid = with_overrides(GridConfig::default(), grid)?;
    let fam = advrate::properties::jumping_world_properties(&grid).map_err(err)?;
    to_py(py, &fam)
}

/// Trains a policy and returns `[(Network, meta), ...]`, one per checkpoint.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn train<'py>(py: Python<'py>, config: Option<&Bound<'py, PyDict>>) -> PyResult<Vec<(PyNetwork, Bound<'py, PyAny>)>> {
    let cfg = with_overrides(TrainConfig::default(), config)?;
    let ckpts = py.detach(|| advrate::trainer::train(&cfg)).map_err(err)?;
    ckpts
        .into_iter()
        .map(|c| Ok((PyNetwork { inner: c.net }, to_py(py, &c.meta)?)))
        .collect()
}

#[pymodule]
fn advrate_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(decide, m)?)?;
    m.add_function(wrap_pyfunction!(adversarial_rate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_rate, m)?)?;
    m.add_function(wrap_pyfunction!(jumping_world_properties, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
