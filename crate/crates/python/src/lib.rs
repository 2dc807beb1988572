//! Python bindings: networks, datasets, attribution and the perturbation protocol.
//!
//! Configs cross the boundary as plain dicts (round-tripped through JSON), so
//! the keys are the same ones the CLI accepts in its TOML files.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::de::DeserializeOwned;
use serde::Serialize;

use eegxai::attribution::{self, AttributionParams, Method};
use eegxai::components::{aggregate_values, ComponentScheme, SchemeKind};
use eegxai::data::{self, FeatureLayout, SynthConfig};
use eegxai::nn::{self, NetworkSpec, TrainConfig};
use eegxai::perturb::{run_protocol as run, EvalSplit, ProtocolConfig, SessionMode};

fn err(e: eegxai::Error) -> PyErr {
    match e {
        eegxai::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = eegxai::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn from_dict<T: DeserializeOwned + Default>(py: Python<'_>, d: Option<&Bound<'_, PyDict>>) -> PyResult<T> {
    let Some(d) = d else { return Ok(T::default()) };
    let text: String = py.import("json")?.call_method1("dumps", (d,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("invalid config: {e}")))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A trained dense classifier.
#[pyclass(name = "Network", module = "eegxai", frozen)]
struct PyNetwork(NetworkSpec);

#[pymethods]
impl PyNetwork {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        NetworkSpec::load(path).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        NetworkSpec::from_json(text).map(Self).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    #[getter]
    fn n_inputs(&self) -> usize {
        self.0.n_inputs()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.0.n_classes()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.0.depth()
    }

    fn logits(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.logits(&x).map_err(err)
    }

    /// Returns `(class, probabilities)`.
    fn predict(&self, x: Vec<f64>) -> PyResult<(usize, Vec<f64>)> {
        self.0.predict(&x).map_err(err)
    }

    fn input_gradient(&self, x: Vec<f64>, class_index: usize) -> PyResult<Vec<f64>> {
        self.0.input_gradient(&x, class_index).map_err(err)
    }

    fn accuracy(&self, dataset: &PyDataset) -> PyResult<f64> {
        data::accuracy(&self.0, &dataset.0).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Network(n_inputs={}, n_classes={}, depth={})", self.0.n_inputs(), self.0.n_classes(), self.0.depth())
    }
}

/// Labelled feature vectors with subject/session/trial metadata.
#[pyclass(name = "Dataset", module = "eegxai", frozen)]
struct PyDataset(data::Dataset);

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        data::load_dataset(path).map(Self).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        data::save_dataset(&self.0, path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.0.n_classes()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.0.n_features()
    }

    /// `(n_channels, n_bands)`.
    #[getter]
    fn layout(&self) -> (usize, usize) {
        let l = self.0.layout();
        (l.n_channels, l.n_bands)
    }

    fn features(&self) -> Vec<Vec<f64>> {
        self.0.samples().iter().map(|s| s.features.clone()).collect()
    }

    fn labels(&self) -> Vec<usize> {
        self.0.labels()
    }

    fn sessions(&self) -> Vec<u32> {
        self.0.sessions()
    }

    fn session(&self, session: u32) -> Self {
        Self(self.0.session(session))
    }

    fn subset(&self, indices: Vec<usize>) -> PyResult<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.0.len()) {
            return Err(PyValueError::new_err(format!("index {bad} out of range for {} samples", self.0.len())));
        }
        Ok(Self(self.0.subset(&indices)))
    }

    /// Returns `(kept, held_out)` with `fraction` of each class held out.
    fn stratified_split(&self, fraction: f64, seed: u64) -> PyResult<(Self, Self)> {
        let (a, b) = self.0.stratified_split(fraction, seed).map_err(err)?;
        Ok((Self(a), Self(b)))
    }

    fn __repr__(&self) -> String {
        format!("Dataset(len={}, n_classes={}, n_features={})", self.0.len(), self.0.n_classes(), self.0.n_features())
    }
}

/// Generates sessions with planted class signal. Returns `(dataset, ground_truth)`.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn generate_synthetic<'py>(py: Python<'py>, config: Option<&Bound<'py, PyDict>>) -> PyResult<(PyDataset, Bound<'py, PyAny>)> {
    let cfg: SynthConfig = from_dict(py, config)?;
    let (d, truth) = data::generate_synthetic(&cfg).map_err(err)?;
    Ok((PyDataset(d), to_py(py, &truth)?))
}

/// Trains a classifier. Returns `(network, report)`.
#[pyfunction]
#[pyo3(signature = (dataset, config=None))]
fn train<'py>(py: Python<'py>, dataset: &PyDataset, config: Option<&Bound<'py, PyDict>>) -> PyResult<(PyNetwork, Bound<'py, PyAny>)> {
    let cfg: TrainConfig = from_dict(py, config)?;
    let (net, report) = py.detach(|| nn::train(&dataset.0, &cfg)).map_err(err)?;
    Ok((PyNetwork(net), to_py(py, &report)?))
}

/// Feature relevance of `x` for `class_index` under `method`.
#[pyfunction]
#[pyo3(signature = (network, x, class_index, method, ig_steps=50, lrp_epsilon=1e-6))]
fn attribute(
    network: &PyNetwork,
    x: Vec<f64>,
    class_index: usize,
    method: &str,
    ig_steps: usize,
    lrp_epsilon: f64,
) -> PyResult<Vec<f64>> {
    let params = AttributionParams {
        ig_steps,
        lrp_epsilon,
        baseline: None,
    };
    let m: Method = parse(method)?;
    attribution::attribute(&network.0, &x, class_index, m, &params)
        .map(|r| r.values)
        .map_err(err)
}

/// Mean feature relevance per `feature`, `band` or `channel` component.
#[pyfunction]
#[pyo3(signature = (values, scheme, n_channels=62, n_bands=5))]
fn aggregate(values: Vec<f64>, scheme: &str, n_channels: usize, n_bands: usize) -> PyResult<Vec<f64>> {
    let layout = FeatureLayout::new(n_channels, n_bands).map_err(err)?;
    let scheme = ComponentScheme::new(parse::<SchemeKind>(scheme)?, layout);
    aggregate_values(&values, &scheme).map(|c| c.scores).map_err(err)
}

/// Runs the perturbation protocol. `inter` is optional.
///
/// Returns a dict with `curves`, `metrics` and `counts`; curve and metric
/// entries carry the same fields as the CLI's CSV outputs.
#[pyfunction]
#[pyo3(signature = (network, train, intra, inter=None, config=None))]
fn run_protocol<'py>(
    py: Python<'py>,
    network: &PyNetwork,
    train: &PyDataset,
    intra: &PyDataset,
    inter: Option<&PyDataset>,
    config: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg: ProtocolConfig = from_dict(py, config)?;
    let mut splits = vec![EvalSplit {
        session_mode: SessionMode::Intra,
        data: &intra.0,
    }];
    if let Some(inter) = inter {
        splits.push(EvalSplit {
            session_mode: SessionMode::Inter,
            data: &inter.0,
        });
    }
    let result = py.detach(|| run(&network.0, &train.0, &splits, &cfg)).map_err(err)?;

    let curves = PyList::empty(py);
    for c in &result.curves {
        let d = PyDict::new(py);
        d.set_item("method", c.explainer.name())?;
        d.set_item("scheme", c.scheme.name())?;
        d.set_item("direction", c.direction.name())?;
        d.set_item("relevance_mode", c.relevance_mode.name())?;
        d.set_item("session_mode", c.session_mode.name())?;
        d.set_item("accuracy", c.accuracy.clone())?;
        d.set_item("mean_score", c.mean_score.clone())?;
        curves.append(d)?;
    }
    let metrics = PyList::empty(py);
    for m in &result.metrics {
        let d = PyDict::new(py);
        d.set_item("method", m.explainer.name())?;
        d.set_item("scheme", m.scheme.name())?;
        d.set_item("session_mode", m.session_mode.name())?;
        d.set_item("relevance_mode", m.relevance_mode.name())?;
        d.set_item("aopc", m.aopc)?;
        d.set_item("abpc", m.abpc)?;
        metrics.append(d)?;
    }
    let counts = PyDict::new(py);
    for (mode, c) in &result.counts {
        counts.set_item(mode.name(), to_py(py, c)?)?;
    }
    let out = PyDict::new(py);
    out.set_item("curves", curves)?;
    out.set_item("metrics", metrics)?;
    out.set_item("counts", counts)?;
    out.set_item("reference_samples", result.reference_samples)?;
    Ok(out)
}

/// Module initializer, public so an embedding interpreter can register it.
#[pymodule]
#[pyo3(name = "eegxai")]
pub fn eegxai_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(attribute, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(run_protocol, m)?)?;
    Ok(())
}
