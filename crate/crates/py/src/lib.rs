//! Python bindings for the agrostress pipeline.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

use agrostress::analysis::{kmeans_cluster, rank_hybrids, Norm};
use agrostress::data::{self as core_data, DataPaths, SynthConfig};
use agrostress::dem::{dem_stress_table, DemParams, StressKind};
use agrostress::neural::{self, EpochMetrics, ModelBundle, ModelConfig, TrainConfig};
use agrostress::pipeline::{Command, Overrides, Run, RunConfig};
use agrostress::sensitivity::{self, EnvFilter, MatrixKind, SensitivityMatrix};
use agrostress::Error;

create_exception!(agrostress, AgrostressError, PyException);

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Config { .. } | Error::Parameter(_) | Error::Lookup(_) | Error::Domain(_) => {
            PyValueError::new_err(err.to_string())
        }
        other => AgrostressError::new_err(other.to_string()),
    }
}

/// Deserialize an optional keyword dict through JSON, keeping defaults for
/// missing keys.
fn from_dict<T: DeserializeOwned + Default>(py: Python<'_>, dict: Option<&Bound<'_, PyDict>>) -> PyResult<T> {
    let Some(dict) = dict else {
        return Ok(T::default());
    };
    let text: String = py.import("json")?.call_method1("dumps", (dict,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_object<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| AgrostressError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn stress_kind(name: &str) -> PyResult<StressKind> {
    StressKind::from_name(name).ok_or_else(|| PyValueError::new_err(format!("unknown stress kind `{name}`")))
}

fn env_filter(name: &str) -> PyResult<EnvFilter> {
    match name {
        "all" => Ok(EnvFilter::All),
        "warm" => Ok(EnvFilter::warm()),
        "cold" => Ok(EnvFilter::cold()),
        _ => Err(PyValueError::new_err(format!("unknown filter `{name}` (all, warm or cold)"))),
    }
}

/// Environments, daily weather and planting instances.
#[pyclass(frozen, module = "agrostress")]
struct Dataset {
    inner: core_data::Dataset,
}

#[pymethods]
impl Dataset {
    #[getter]
    fn n_instances(&self) -> usize {
        self.inner.n_instances()
    }

    #[getter]
    fn n_hybrids(&self) -> usize {
        self.inner.n_hybrids()
    }

    #[getter]
    fn n_environments(&self) -> usize {
        self.inner.n_environments()
    }

    #[getter]
    fn hybrid_ids(&self) -> Vec<String> {
        self.inner.hybrid_ids().cloned().collect()
    }

    #[getter]
    fn env_ids(&self) -> Vec<String> {
        self.inner.environments().map(|e| e.env_id.clone()).collect()
    }

    /// `(hybrid_id, env_id, irr, yield)` per instance.
    fn instances(&self) -> Vec<(String, String, u8, f64)> {
        self.inner
            .instances()
            .iter()
            .map(|p| (p.hybrid_id.clone(), p.env_id.clone(), p.irr, p.yield_obs))
            .collect()
    }

    /// Per-instance yield gap to the best instance of the same hybrid.
    fn delta_yield(&self) -> Vec<f64> {
        sensitivity::compute_delta_yield(&self.inner).values
    }

    /// Write the three CSV tables into `directory`.
    fn write(&self, directory: PathBuf) -> PyResult<(PathBuf, PathBuf, PathBuf)> {
        let p = core_data::write_dataset(&self.inner, &directory, None).map_err(to_py)?;
        Ok((p.weather, p.environments, p.performance))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(hybrids={}, environments={}, instances={})",
            self.inner.n_hybrids(),
            self.inner.n_environments(),
            self.inner.n_instances()
        )
    }
}

/// A trained (or freshly initialized) stress model.
#[pyclass(frozen, module = "agrostress")]
struct Model {
    bundle: ModelBundle,
    history: Vec<EpochMetrics>,
}

#[pymethods]
impl Model {
    #[getter]
    fn kind(&self) -> &'static str {
        self.bundle.kind.name()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.bundle.n_params()
    }

    #[getter]
    fn input_len(&self) -> usize {
        self.bundle.input_len()
    }

    #[getter]
    fn epochs_trained(&self) -> usize {
        self.bundle.epochs_trained
    }

    /// Per-epoch metrics of the training run; empty for loaded models.
    fn history<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_object(py, &self.history)
    }

    /// Predicted delta-yield for every instance of `dataset`.
    fn predict(&self, py: Python<'_>, dataset: &Dataset) -> PyResult<Vec<f64>> {
        py.detach(|| {
            let inputs = self.bundle.prepare(&dataset.inner)?;
            let all: Vec<usize> = (0..dataset.inner.n_instances()).collect();
            self.bundle.predict_many(&inputs, &all)
        })
        .map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        neural::save_bundle(&self.bundle, &path, None).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            bundle: neural::load_bundle(&path).map_err(to_py)?,
            history: Vec::new(),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(kind={}, params={}, epochs={})",
            self.bundle.kind.name(),
            self.bundle.n_params(),
            self.bundle.epochs_trained
        )
    }
}

/// Hybrids x columns sensitivity matrix.
#[pyclass(frozen, module = "agrostress")]
struct Matrix {
    inner: SensitivityMatrix,
}

#[pymethods]
impl Matrix {
    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.name()
    }

    #[getter]
    fn hybrid_ids(&self) -> Vec<String> {
        self.inner.hybrid_ids.clone()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.n_rows(), self.inner.n_cols)
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    /// `(hybrid_id, score)` pairs, most susceptible first.
    #[pyo3(signature = (norm = "l2"))]
    fn rank(&self, norm: &str) -> PyResult<Vec<(String, f64)>> {
        let norm = Norm::from_name(norm).ok_or_else(|| PyValueError::new_err(format!("unknown norm `{norm}`")))?;
        let r = rank_hybrids(&self.inner, norm);
        Ok(r.order.iter().map(|&h| (r.hybrid_ids[h].clone(), r.scores[h])).collect())
    }

    /// Two-means split into susceptible and resistant hybrids.
    #[pyo3(signature = (seed = 0))]
    fn cluster<'py>(&self, py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let result = kmeans_cluster(&self.inner, seed).map_err(to_py)?;
        to_object(py, &result)
    }

    fn __repr__(&self) -> String {
        format!("Matrix(kind={}, shape={:?})", self.inner.kind.name(), self.shape())
    }
}

/// Synthetic dataset with planted labels. Keyword arguments override the
/// generator settings; returns the dataset and the ground truth as a dict.
#[pyfunction]
#[pyo3(signature = (seed = 7, **overrides))]
fn generate_synthetic<'py>(
    py: Python<'py>,
    seed: u64,
    overrides: Option<&Bound<'py, PyDict>>,
) -> PyResult<(Dataset, Bound<'py, PyAny>)> {
    let cfg: SynthConfig = from_dict(py, overrides)?;
    let (inner, truth) = core_data::generate_synthetic(&cfg, seed).map_err(to_py)?;
    Ok((Dataset { inner }, to_object(py, &truth)?))
}

#[pyfunction]
fn load_dataset(weather: PathBuf, environments: PathBuf, performance: PathBuf) -> PyResult<Dataset> {
    let paths = DataPaths {
        weather,
        environments,
        performance,
    };
    Ok(Dataset {
        inner: core_data::load_dataset(&paths).map_err(to_py)?,
    })
}

/// Expert-model period stress vectors, one list per instance.
#[pyfunction]
#[pyo3(signature = (dataset, kind = "heat", params = None))]
fn dem_stress(
    py: Python<'_>,
    dataset: &Dataset,
    kind: &str,
    params: Option<&Bound<'_, PyDict>>,
) -> PyResult<Vec<Vec<f64>>> {
    let kind = stress_kind(kind)?;
    let params: DemParams = from_dict(py, params)?;
    let table = dem_stress_table(&dataset.inner, &params).map_err(to_py)?;
    Ok(table.vectors(kind).iter().map(|v| v.to_vec()).collect())
}

/// Train a model. `model` and `train` are dicts of configuration overrides.
#[pyfunction]
#[pyo3(signature = (dataset, model = None, train = None))]
fn train(
    py: Python<'_>,
    dataset: &Dataset,
    model: Option<&Bound<'_, PyDict>>,
    train: Option<&Bound<'_, PyDict>>,
) -> PyResult<Model> {
    let model: ModelConfig = from_dict(py, model)?;
    let train: TrainConfig = from_dict(py, train)?;
    let out = py.detach(|| neural::fit(&dataset.inner, &model, &train)).map_err(to_py)?;
    Ok(Model {
        bundle: out.bundle,
        history: out.history,
    })
}

/// Covariance of delta-yield with expert stress, per hybrid and period.
#[pyfunction]
#[pyo3(signature = (dataset, stress = "heat", filter = "all"))]
fn covariance(dataset: &Dataset, stress: &str, filter: &str) -> PyResult<Matrix> {
    let stress = stress_kind(stress)?;
    let kind = MatrixKind::covariance(stress).map_err(to_py)?;
    let table = dem_stress_table(&dataset.inner, &DemParams::default()).map_err(to_py)?;
    let inner =
        sensitivity::covariance_matrix(&dataset.inner, &table.vectors(stress), kind, env_filter(filter)?).map_err(to_py)?;
    Ok(Matrix { inner })
}

/// Summed stress-input gradients of a trained model, per hybrid.
#[pyfunction]
#[pyo3(signature = (model, dataset, stress = "heat"))]
fn susceptibility(py: Python<'_>, model: &Model, dataset: &Dataset, stress: &str) -> PyResult<Matrix> {
    let stress = stress_kind(stress)?;
    let inner = py
        .detach(|| {
            let inputs = model.bundle.prepare(&dataset.inner)?;
            sensitivity::susceptibility_matrix(&model.bundle, &dataset.inner, &inputs, stress, None)
        })
        .map_err(to_py)?;
    Ok(Matrix { inner })
}

/// Run one pipeline command, as the command-line tool does. Returns the run
/// directory.
#[pyfunction]
#[pyo3(signature = (command, config = None, seed = None, out = None))]
fn run(py: Python<'_>, command: &str, config: Option<PathBuf>, seed: Option<u64>, out: Option<PathBuf>) -> PyResult<PathBuf> {
    let command = match command {
        "synth" => Command::Synth,
        "dem" => Command::Dem { emit_calendar: false },
        "train" => Command::Train,
        "sensitivity" => Command::Sensitivity,
        "rank" => Command::Rank,
        "cluster" => Command::Cluster,
        "compare" => Command::Compare,
        "eval" => Command::Eval,
        other => return Err(PyValueError::new_err(format!("unknown command `{other}`"))),
    };
    let mut cfg = match config {
        Some(path) => RunConfig::load(&path).map_err(to_py)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed,
        output_dir: out,
        model: None,
    });
    let run = Run::new(cfg).map_err(to_py)?;
    py.detach(|| run.execute(command)).map_err(to_py)?;
    Ok(run.dir)
}

#[pymodule]
#[pyo3(name = "agrostress")]
fn agrostress_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", agrostress::VERSION)?;
    m.add("AgrostressError", m.py().get_type::<AgrostressError>())?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_class::<Matrix>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(dem_stress, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(covariance, m)?)?;
    m.add_function(wrap_pyfunction!(susceptibility, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
