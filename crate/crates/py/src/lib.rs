//! Python bindings. Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use ndarray::{Array1, Array2};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use aesr::bounds;
use aesr::datagen::{self, DataBatch, NoiseSpec};
use aesr::dictionary::{self, Generator};
use aesr::dictlearn::{self, TrainActivation, TrainConfig};
use aesr::experiments::{self, ExperimentKind, ExperimentSpec, Overrides};
use aesr::metrics::{self, ApreConfig};
use aesr::recovery::{self, Activation, RecoveryConfig};
use aesr::signals::{self, BinsParams, SignalBatch};

fn to_py(err: aesr::Error) -> PyErr {
    match err {
        aesr::Error::InvalidParam(_) | aesr::Error::Dimension(_) => PyValueError::new_err(err.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n_cols) {
        return Err(PyValueError::new_err("rows must have equal length"));
    }
    Array2::from_shape_vec((n_rows, n_cols), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn parse_generator(name: &str) -> PyResult<Generator> {
    match name {
        "orthogonalized" => Ok(Generator::OrthogonalizedGaussian),
        "plain_gaussian" => Ok(Generator::PlainGaussian),
        "coherent_uniform" => Ok(Generator::CoherentUniform),
        _ => Err(PyValueError::new_err(format!("unknown generator {name:?}"))),
    }
}

fn parse_activation(name: &str) -> PyResult<Activation> {
    match name {
        "relu" => Ok(Activation::Relu),
        "sigmoid" => Ok(Activation::Sigmoid),
        _ => Err(PyValueError::new_err(format!("unknown activation {name:?}"))),
    }
}

/// Signal distribution: activation probability `p`, `"uniform"` or
/// `"binary"` nonzero part, and upper level `l_max`.
#[pyclass(name = "BinsParams", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyBinsParams {
    inner: BinsParams,
}

#[pymethods]
impl PyBinsParams {
    #[new]
    #[pyo3(signature = (p, kind = "uniform", l_max = 1.0))]
    fn new(p: f64, kind: &str, l_max: f64) -> PyResult<Self> {
        let inner = match kind {
            "uniform" => BinsParams::uniform(p, l_max),
            "binary" => BinsParams::binary(p),
            _ => return Err(PyValueError::new_err(format!("unknown signal kind {kind:?}"))),
        }
        .map_err(to_py)?;
        Ok(PyBinsParams { inner })
    }

    #[getter]
    fn is_binary(&self) -> bool {
        self.inner.is_binary()
    }

    fn signal_mean(&self, m: usize) -> PyResult<Vec<f64>> {
        Ok(self.inner.signal_mean(m).map_err(to_py)?.to_vec())
    }

    fn signal_variance(&self, m: usize) -> PyResult<Vec<f64>> {
        Ok(self.inner.signal_variance(m).map_err(to_py)?.to_vec())
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// An `m x n` dictionary whose rows are hidden-unit weight vectors.
#[pyclass(name = "Dictionary", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDictionary {
    inner: dictionary::Dictionary,
}

#[pymethods]
impl PyDictionary {
    /// Generates a dictionary: `"orthogonalized"`, `"plain_gaussian"` or
    /// `"coherent_uniform"`.
    #[staticmethod]
    fn generate(generator: &str, m: usize, n: usize, seed: u64) -> PyResult<Self> {
        let inner = dictionary::Dictionary::generate(parse_generator(generator)?, m, n, seed).map_err(to_py)?;
        Ok(PyDictionary { inner })
    }

    /// Wraps explicit rows, used as given.
    #[staticmethod]
    fn from_rows(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyDictionary { inner: dictionary::Dictionary::from_weights(matrix(rows)?) })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn weights(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.weights)
    }

    fn coherence(&self) -> PyResult<f64> {
        dictionary::coherence(&self.inner).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        aesr::io::save_dictionary(&path, &self.inner).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyDictionary { inner: aesr::io::load_dictionary(&path).map_err(to_py)? })
    }
}

#[pyfunction]
fn welch_bound(m: usize, n: usize) -> PyResult<f64> {
    dictionary::welch_bound(m, n).map_err(to_py)
}

/// Draws `n_samples x m` signals.
#[pyfunction]
fn sample_signals(params: &PyBinsParams, m: usize, n_samples: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&signals::sample_signals(&params.inner, m, n_samples, seed).map_err(to_py)?.values))
}

fn signal_batch(h: Vec<Vec<f64>>, params: &PyBinsParams) -> PyResult<SignalBatch> {
    Ok(SignalBatch { values: matrix(h)?, params: params.inner.clone(), seed: 0 })
}

/// `scale_c * h W + e + b_d` for every signal row.
#[pyfunction]
#[pyo3(signature = (w, h, params, b_d = None, scale_c = 1.0, noise_mean = 0.0, noise_std = None, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn generate_data(
    w: &PyDictionary,
    h: Vec<Vec<f64>>,
    params: &PyBinsParams,
    b_d: Option<Vec<f64>>,
    scale_c: f64,
    noise_mean: f64,
    noise_std: Option<f64>,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let batch = signal_batch(h, params)?;
    let b_d = b_d.map_or_else(|| Array1::zeros(w.inner.n()), Array1::from);
    let noise = noise_std.map(|s| NoiseSpec::new(noise_mean, s)).transpose().map_err(to_py)?;
    Ok(rows(&datagen::generate_data(&w.inner, &batch, &b_d, scale_c, noise, seed).map_err(to_py)?.x))
}

#[pyfunction]
fn sphericity_gap(x: Vec<Vec<f64>>) -> PyResult<f64> {
    datagen::sphericity_gap(&DataBatch::from_matrix(matrix(x)?)).map_err(to_py)
}

#[pyfunction]
fn sphericity_bound(zeta: Vec<f64>, n: usize) -> PyResult<f64> {
    datagen::sphericity_bound(&Array1::from(zeta), n).map_err(to_py)
}

/// Closed-form recovery from data `x`. Subtracts the empirical data mean
/// unless `data_mean` is given; sigmoid outputs are binarized.
#[pyfunction]
#[pyo3(signature = (w, x, params, activation, c = 1.0, delta_b = 0.0, threshold = 0.55, data_mean = None))]
#[allow(clippy::too_many_arguments)]
fn recover(
    w: &PyDictionary,
    x: Vec<Vec<f64>>,
    params: &PyBinsParams,
    activation: &str,
    c: f64,
    delta_b: f64,
    threshold: f64,
    data_mean: Option<Vec<f64>>,
) -> PyResult<Vec<Vec<f64>>> {
    let cfg = RecoveryConfig::new(parse_activation(activation)?, c, delta_b, threshold).map_err(to_py)?;
    let data = DataBatch::from_matrix(matrix(x)?);
    let mean = match data_mean {
        Some(v) => Array1::from(v),
        None => datagen::data_mean(&data).map_err(to_py)?,
    };
    Ok(rows(&recovery::recover_final(&w.inner, &data, &mean, &params.inner, &cfg).map_err(to_py)?))
}

#[pyfunction]
fn theoretical_bias(w: &PyDictionary, params: &PyBinsParams) -> PyResult<Vec<f64>> {
    let bias = if params.inner.is_binary() {
        recovery::theoretical_bias_binary(&w.inner, &params.inner)
    } else {
        recovery::theoretical_bias_continuous(&w.inner, &params.inner)
    };
    Ok(bias.map_err(to_py)?.to_vec())
}

/// Average percentage recovery error.
#[pyfunction]
fn apre(h: Vec<Vec<f64>>, h_hat: Vec<Vec<f64>>, epsilon: f64, p: f64) -> PyResult<f64> {
    let cfg = ApreConfig::new(epsilon, p).map_err(to_py)?;
    metrics::apre(&matrix(h)?, &matrix(h_hat)?, &cfg).map_err(to_py)
}

#[pyfunction]
fn mean_l1_error(h: Vec<Vec<f64>>, h_hat: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    Ok(metrics::mean_l1_error(&matrix(h)?, &matrix(h_hat)?).map_err(to_py)?.to_vec())
}

/// One of the four recovery lower bounds. `noise_dev` selects the noisy form.
#[pyfunction]
#[pyo3(signature = (w, params, delta, noise_dev = None))]
fn recovery_bound(w: &PyDictionary, params: &PyBinsParams, delta: f64, noise_dev: Option<Vec<f64>>) -> PyResult<f64> {
    let binary = params.inner.is_binary();
    let value = match (binary, noise_dev) {
        (true, None) => bounds::bound_binary_noiseless(&w.inner, &params.inner, delta),
        (true, Some(d)) => bounds::bound_binary_noisy(&w.inner, &params.inner, delta, &Array1::from(d)),
        (false, None) => bounds::bound_continuous_noiseless(&w.inner, &params.inner, delta),
        (false, Some(d)) => bounds::bound_continuous_noisy(&w.inner, &params.inner, delta, &Array1::from(d)),
    };
    value.map_err(to_py)
}

/// Returns `(permutation, cosines)`; `permutation[j]` is the learned row
/// matched to true row `j`.
#[pyfunction]
fn greedy_match(w_true: &PyDictionary, w_learned: &PyDictionary) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let r = dictlearn::greedy_match(&w_true.inner, &w_learned.inner).map_err(to_py)?;
    Ok((r.permutation, r.cosines))
}

/// Learns an `m`-row dictionary from data; returns it with the per-epoch
/// loss trace.
#[pyfunction]
#[pyo3(signature = (x, m, activation, epochs = None, learning_rate = None, batch_size = None, seed = 0))]
fn train_autoencoder(
    x: Vec<Vec<f64>>,
    m: usize,
    activation: &str,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    seed: u64,
) -> PyResult<(PyDictionary, Vec<f64>)> {
    let act = match activation {
        "relu" => TrainActivation::Relu,
        "sigmoid" => TrainActivation::SaturatedSigmoid,
        _ => return Err(PyValueError::new_err(format!("unknown activation {activation:?}"))),
    };
    let mut cfg = TrainConfig::defaults_for(act);
    cfg.seed = seed;
    if let Some(v) = epochs {
        cfg.epochs = v;
    }
    if let Some(v) = learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = batch_size {
        cfg.batch_size = v;
    }
    let out = dictlearn::train_autoencoder(&DataBatch::from_matrix(matrix(x)?), m, &cfg).map_err(to_py)?;
    Ok((PyDictionary { inner: out.dictionary }, out.epoch_loss))
}

/// Runs an experiment (`"heatmap"`, `"noise-sweep"`, ...) with JSON
/// parameters and returns the paths of the files written.
#[pyfunction]
#[pyo3(signature = (kind, output_dir, parameters = "{}", seed = 0))]
fn run_experiment(kind: &str, output_dir: PathBuf, parameters: &str, seed: u64) -> PyResult<Vec<PathBuf>> {
    let kind: ExperimentKind =
        serde_json::from_value(serde_json::Value::String(kind.into())).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let parameters = serde_json::from_str(parameters).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let spec = ExperimentSpec { kind, parameters, seed, output_dir };
    let summary = experiments::run_experiment(&spec, &Overrides::default()).map_err(to_py)?;
    Ok(summary.outputs.iter().map(|f| summary.output_dir.join(f)).collect())
}

#[pymodule]
fn aesr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBinsParams>()?;
    m.add_class::<PyDictionary>()?;
    m.add_function(wrap_pyfunction!(welch_bound, m)?)?;
    m.add_function(wrap_pyfunction!(sample_signals, m)?)?;
    m.add_function(wrap_pyfunction!(generate_data, m)?)?;
    m.add_function(wrap_pyfunction!(sphericity_gap, m)?)?;
    m.add_function(wrap_pyfunction!(sphericity_bound, m)?)?;
    m.add_function(wrap_pyfunction!(recover, m)?)?;
    m.add_function(wrap_pyfunction!(theoretical_bias, m)?)?;
    m.add_function(wrap_pyfunction!(apre, m)?)?;
    m.add_function(wrap_pyfunction!(mean_l1_error, m)?)?;
    m.add_function(wrap_pyfunction!(recovery_bound, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_match, m)?)?;
    m.add_function(wrap_pyfunction!(train_autoencoder, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
