//! Python bindings. Specs and reports cross the boundary as plain dicts;
//! frames as flat `H*W*C` float lists in row-major HWC order.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use twostream_core::config::ExperimentConfig;
use twostream_core::error::Error;
use twostream_core::eval::{compare_runs, EvalReport};
use twostream_core::experiment;
use twostream_core::frame::Frame;
use twostream_core::motion::{self, Permutation};
use twostream_core::nn::checkpoint::{load_checkpoint, save_checkpoint};
use twostream_core::nn::{HeadKind, TwoStreamConfig, TwoStreamNet};
use twostream_core::pretext::{self, ClipStore, PretextTuple, TupleGenSpec};
use twostream_core::clip::ClipSampleSpec;
use twostream_core::synthetic::{self, SourceVideo, SyntheticCorpusSpec};
use twostream_core::train::InitMode;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Divergence { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, S: Serialize>(py: Python<'py>, value: &S) -> PyResult<Bound<'py, PyAny>> {
    let json = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    value_to_py(py, &json)
}

fn value_to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(value_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, value_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

/// Reads an optional dict of spec fields through Python's `json` module.
fn from_py<T: DeserializeOwned + Default>(obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    let Some(obj) = obj else {
        return Ok(T::default());
    };
    let json = obj.py().import("json")?.call_method1("dumps", (obj,))?;
    let text: String = json.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn frame_from(data: Vec<f32>, height: usize, width: usize, channels: usize) -> PyResult<Frame> {
    Frame::from_vec(height, width, channels, data).map_err(py_err)
}

/// A generated or loaded video.
#[pyclass(name = "Video", frozen)]
struct PyVideo(SourceVideo);

#[pymethods]
impl PyVideo {
    #[getter]
    fn video_id(&self) -> &str {
        &self.0.video_id
    }

    #[getter]
    fn action_label(&self) -> Option<usize> {
        self.0.action_label
    }

    fn __len__(&self) -> usize {
        self.0.frames.len()
    }

    /// `(height, width, channels)` of every frame.
    #[getter]
    fn frame_shape(&self) -> (usize, usize, usize) {
        self.0.frames.first().map_or((0, 0, 0), |f| (f.height(), f.width(), f.channels()))
    }

    fn frame(&self, index: usize) -> PyResult<Vec<f32>> {
        self.0
            .frames
            .get(index)
            .map(|f| f.data().to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("frame {index} out of range")))
    }
}

#[pyfunction]
#[pyo3(signature = (spec=None))]
fn generate_corpus(spec: Option<&Bound<'_, PyAny>>) -> PyResult<Vec<PyVideo>> {
    let spec: SyntheticCorpusSpec = from_py(spec)?;
    let corpus = synthetic::generate_corpus(&spec).map_err(py_err)?;
    Ok(corpus.into_iter().map(|v| PyVideo(v.into())).collect())
}

/// Five grayscale difference channels from six RGB frames, flat `H*W*5`.
#[pyfunction]
fn stack_of_differences(frames: Vec<Vec<f32>>, height: usize, width: usize) -> PyResult<Vec<f32>> {
    let frames: Vec<Frame> = frames
        .into_iter()
        .map(|d| frame_from(d, height, width, 3))
        .collect::<PyResult<_>>()?;
    let sod = motion::stack_of_differences(&frames).map_err(py_err)?;
    Ok(sod.data().to_vec())
}

/// All orderings except identity and reversal.
#[pyfunction]
fn invalid_permutations() -> Vec<Vec<u8>> {
    Permutation::all()
        .into_iter()
        .filter(|p| !p.is_identity() && !p.is_reversal())
        .map(|p| p.as_array().to_vec())
        .collect()
}

/// A four-class pretext example.
#[pyclass(name = "PretextTuple", frozen)]
struct PyTuple(PretextTuple);

#[pymethods]
impl PyTuple {
    /// `"CLASS_I"` .. `"CLASS_IV"`.
    #[getter]
    fn label<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.label)
    }

    #[getter]
    fn label_index(&self) -> usize {
        self.0.label.index()
    }

    #[getter]
    fn provenance<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.provenance)
    }

    #[getter]
    fn rgb(&self) -> Vec<f32> {
        self.0.rgb.data().to_vec()
    }

    #[getter]
    fn sod(&self) -> Vec<f32> {
        self.0.sod.data().to_vec()
    }
}

/// Generates `n` tuples from a fresh corpus.
#[pyfunction]
#[pyo3(signature = (n, corpus=None, clips=None, tuples=None, workers=1))]
fn generate_tuples(
    n: usize,
    corpus: Option<&Bound<'_, PyAny>>,
    clips: Option<&Bound<'_, PyAny>>,
    tuples: Option<&Bound<'_, PyAny>>,
    workers: usize,
) -> PyResult<Vec<PyTuple>> {
    let corpus: SyntheticCorpusSpec = from_py(corpus)?;
    let clips: ClipSampleSpec = from_py(clips)?;
    let spec: TupleGenSpec = from_py(tuples)?;
    let videos: Vec<SourceVideo> = synthetic::generate_corpus(&corpus).map_err(py_err)?.into_iter().map(Into::into).collect();
    let store = ClipStore::build(&videos, &clips).map_err(py_err)?;
    let out = pretext::generate_epoch(&store, n, &spec, workers).map_err(py_err)?;
    Ok(out.into_iter().map(PyTuple).collect())
}

/// Recomputes a tuple's label from its provenance alone.
#[pyfunction]
#[pyo3(signature = (tuple, tuples=None))]
fn label_oracle<'py>(py: Python<'py>, tuple: &PyTuple, tuples: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let spec: TupleGenSpec = from_py(tuples)?;
    to_py(py, &pretext::label_oracle(&tuple.0, &spec))
}

/// The two-tower network.
#[pyclass(name = "TwoStreamNet")]
struct PyNet(TwoStreamNet<f32>);

#[pymethods]
impl PyNet {
    #[new]
    #[pyo3(signature = (config=None, seed=0))]
    fn new(config: Option<&Bound<'_, PyAny>>, seed: u64) -> PyResult<Self> {
        let config: TwoStreamConfig = from_py(config)?;
        TwoStreamNet::new(config, seed).map(PyNet).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let bundle = load_checkpoint(&path).map_err(py_err)?;
        let mut net = TwoStreamNet::new(bundle.header.config.clone(), 0).map_err(py_err)?;
        net.load_bundle(&bundle).map_err(py_err)?;
        Ok(PyNet(net))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.0, &path).map(|_| ()).map_err(py_err)
    }

    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.0.config())
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.0.config().fingerprint()
    }

    #[getter]
    fn is_frozen(&self) -> bool {
        self.0.is_frozen()
    }

    /// `{name: shape}` for every parameter.
    fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.0.params().entries().iter().map(|e| (e.name.clone(), e.shape.clone())).collect()
    }

    fn parameter(&self, name: &str) -> PyResult<Vec<f32>> {
        let params = self.0.params();
        let id = params.find(name).ok_or_else(|| PyValueError::new_err(format!("no parameter `{name}`")))?;
        Ok(params.value(id).to_vec())
    }

    /// Pretext logits for one `H*W*3` frame and one `H*W*5` stack.
    fn forward_pretext(&self, rgb: Vec<f32>, sod: Vec<f32>) -> PyResult<Vec<f32>> {
        self.forward(HeadKind::Pretext, rgb, sod)
    }

    fn forward_downstream(&self, rgb: Vec<f32>, sod: Vec<f32>) -> PyResult<Vec<f32>> {
        self.forward(HeadKind::Downstream, rgb, sod)
    }
}

impl PyNet {
    fn forward(&self, head: HeadKind, rgb: Vec<f32>, sod: Vec<f32>) -> PyResult<Vec<f32>> {
        let (h, w) = self.0.config().tower.input_size;
        let rgb = frame_from(rgb, h, w, 3)?;
        let sod = motion::StackOfDifferences::from_frame(frame_from(sod, h, w, motion::SOD_CHANNELS)?).map_err(py_err)?;
        match head {
            HeadKind::Pretext => self.0.forward_pretext(&rgb, &sod),
            HeadKind::Downstream => self.0.forward_downstream(&rgb, &sod),
        }
        .map_err(py_err)
    }
}

/// Accuracy report from predicted and true class indices.
#[pyfunction]
fn evaluate_predictions<'py>(py: Python<'py>, predicted: Vec<usize>, labels: Vec<usize>, num_classes: usize) -> PyResult<Bound<'py, PyAny>> {
    let report = EvalReport::from_predictions(&predicted, &labels, num_classes).map_err(py_err)?;
    to_py(py, &report)
}

/// Table-1 style text for two reports given as dicts.
#[pyfunction]
fn comparison_table(baseline: &Bound<'_, PyAny>, candidate: &Bound<'_, PyAny>) -> PyResult<String> {
    let baseline: EvalReport = from_py_required(baseline)?;
    let candidate: EvalReport = from_py_required(candidate)?;
    Ok(compare_runs(&baseline, &candidate).map_err(py_err)?.to_text())
}

fn from_py_required<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let json = obj.py().import("json")?.call_method1("dumps", (obj,))?;
    let text: String = json.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Resolved experiment config from an optional file and `key=value` overrides.
#[pyfunction]
#[pyo3(signature = (path=None, overrides=Vec::new()))]
fn load_config<'py>(py: Python<'py>, path: Option<PathBuf>, overrides: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    let config = ExperimentConfig::load(path.as_deref(), &overrides).map_err(py_err)?;
    to_py(py, &config)
}

fn config_of(config: Option<&Bound<'_, PyAny>>) -> PyResult<ExperimentConfig> {
    let config: ExperimentConfig = from_py(config)?;
    config.validate().map_err(py_err)?;
    Ok(config)
}

#[pyfunction]
#[pyo3(signature = (config=None))]
fn gen_data<'py>(py: Python<'py>, config: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let config = config_of(config)?;
    let summary = py.detach(|| experiment::cmd_gen_data(&config)).map_err(py_err)?;
    to_py(py, &summary)
}

#[pyfunction]
#[pyo3(signature = (config=None))]
fn pretrain<'py>(py: Python<'py>, config: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let config = config_of(config)?;
    let summary = py.detach(|| experiment::cmd_pretrain(&config)).map_err(py_err)?;
    to_py(py, &summary)
}

/// `init` is `"random"` or `"self_supervised"`.
#[pyfunction]
#[pyo3(signature = (init, seed, config=None))]
fn finetune<'py>(py: Python<'py>, init: &str, seed: u64, config: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let config = config_of(config)?;
    let init = match init {
        "random" => InitMode::Random,
        "self_supervised" => InitMode::SelfSupervised,
        other => return Err(PyValueError::new_err(format!("unknown init `{other}`"))),
    };
    let summary = py.detach(|| experiment::cmd_finetune(&config, init, seed)).map_err(py_err)?;
    to_py(py, &summary)
}

#[pymodule]
fn twostream(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVideo>()?;
    m.add_class::<PyTuple>()?;
    m.add_class::<PyNet>()?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(stack_of_differences, m)?)?;
    m.add_function(wrap_pyfunction!(invalid_permutations, m)?)?;
    m.add_function(wrap_pyfunction!(generate_tuples, m)?)?;
    m.add_function(wrap_pyfunction!(label_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_predictions, m)?)?;
    m.add_function(wrap_pyfunction!(comparison_table, m)?)?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add_function(wrap_pyfunction!(gen_data, m)?)?;
    m.add_function(wrap_pyfunction!(pretrain, m)?)?;
    m.add_function(wrap_pyfunction!(finetune, m)?)?;
    Ok(())
}
