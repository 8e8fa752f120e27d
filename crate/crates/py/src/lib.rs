//! Python bindings: intent arithmetic, single conditions and whole configs.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use v2v_consensus::campaign::{self, Condition, ConditionSpec, ConditionSummary, RunPlan};
use v2v_consensus::config::{CampaignConfig, Overrides, DEFAULT_MASTER_SEED};
use v2v_consensus::error::Error;
use v2v_consensus::export::SummaryRow;
use v2v_consensus::intent::{self, MetaAction, DEFAULT_DISTANCE_EPSILON};
use v2v_consensus::run;

fn py_err(e: Error) -> PyErr {
    if e.is_user_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyOSError::new_err(e.to_string())
    }
}

/// A probability distribution over meta-actions.
#[pyclass(name = "IntentDistribution", frozen, from_py_object, module = "v2v_consensus")]
#[derive(Clone)]
struct PyIntent(intent::IntentDistribution);

#[pymethods]
impl PyIntent {
    #[new]
    fn new(probs: Vec<f64>) -> PyResult<Self> {
        intent::IntentDistribution::new(probs).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn uniform(k: usize) -> PyResult<Self> {
        intent::IntentDistribution::uniform(k).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn one_hot(k: usize, index: usize) -> PyResult<Self> {
        intent::IntentDistribution::one_hot(k, index).map(Self).map_err(py_err)
    }

    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.0.probs().to_vec()
    }

    /// Shannon entropy; normalized by `ln k` unless `normalized=False` (nats).
    #[pyo3(signature = (normalized = true))]
    fn entropy(&self, normalized: bool) -> f64 {
        if normalized {
            intent::shannon_entropy_normalized(&self.0)
        } else {
            intent::shannon_entropy(&self.0)
        }
    }

    fn argmax(&self) -> usize {
        intent::select_action(&self.0)
    }

    /// Label of the argmax when the distribution is over the default action set.
    fn action(&self) -> Option<&'static str> {
        MetaAction::from_index(intent::select_action(&self.0))
            .filter(|_| self.0.len() == MetaAction::ALL.len())
            .map(MetaAction::label)
    }

    fn should_trigger(&self, tau: f64) -> bool {
        intent::should_trigger(&self.0, tau)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("IntentDistribution({:?})", self.0.probs())
    }
}

/// Inverse-distance weights for the given distances to the conflict zone.
#[pyfunction]
#[pyo3(signature = (distances, epsilon = DEFAULT_DISTANCE_EPSILON))]
fn inverse_distance_weights(distances: Vec<f64>, epsilon: f64) -> PyResult<Vec<f64>> {
    intent::inverse_distance_weights(&distances, epsilon)
        .map(|w| w.weights().to_vec())
        .map_err(py_err)
}

/// Fuses intents weighted by inverse distance to the conflict zone.
#[pyfunction]
#[pyo3(signature = (intents, distances, epsilon = DEFAULT_DISTANCE_EPSILON))]
fn fuse(intents: Vec<PyIntent>, distances: Vec<f64>, epsilon: f64) -> PyResult<PyIntent> {
    let weights = intent::inverse_distance_weights(&distances, epsilon).map_err(py_err)?;
    let refs: Vec<&intent::IntentDistribution> = intents.iter().map(|p| &p.0).collect();
    intent::fuse(&refs, &weights).map(PyIntent).map_err(py_err)
}

fn summary_dict<'py>(py: Python<'py>, s: &ConditionSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("condition", &s.condition)?;
    d.set_item("grid_value", s.grid_value)?;
    d.set_item("success_mean", s.success.mean)?;
    d.set_item("success_ci95", s.success.ci95)?;
    d.set_item("latency_ms_mean", s.latency_ms.mean)?;
    d.set_item("latency_ci95", s.latency_ms.ci95)?;
    d.set_item("trigger_rate_mean", s.trigger_rate.mean)?;
    d.set_item("trigger_ci95", s.trigger_rate.ci95)?;
    d.set_item("messages_per_episode", s.messages_per_episode)?;
    d.set_item("messages_total", s.messages_total)?;
    d.set_item("effective_loss", s.effective_loss)?;
    d.set_item("mean_participants", s.mean_participants)?;
    d.set_item("mean_ego_entropy", s.mean_ego_entropy)?;
    Ok(d)
}

fn row_dict<'py>(py: Python<'py>, r: &SummaryRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("condition", &r.condition)?;
    d.set_item("grid_value", r.grid_value)?;
    d.set_item("success_mean", r.success_mean)?;
    d.set_item("success_ci95", r.success_ci95)?;
    d.set_item("latency_ms_mean", r.latency_ms_mean)?;
    d.set_item("latency_ci95", r.latency_ci95)?;
    d.set_item("trigger_rate_mean", r.trigger_rate_mean)?;
    d.set_item("trigger_ci95", r.trigger_ci95)?;
    d.set_item("messages_per_episode", r.messages_per_episode)?;
    d.set_item("messages_total", r.messages_total)?;
    d.set_item("effective_loss", r.effective_loss)?;
    Ok(d)
}

/// Runs one preset condition and returns its summary as a dict.
///
/// `tau` and `loss_rate` override the preset's trigger threshold and channel loss.
#[pyfunction]
#[pyo3(signature = (condition, seeds, episodes_per_seed, master_seed = DEFAULT_MASTER_SEED, tau = None, loss_rate = None, parallelism = 0))]
#[allow(clippy::too_many_arguments)]
fn run_condition<'py>(
    py: Python<'py>,
    condition: &str,
    seeds: Vec<u64>,
    episodes_per_seed: u64,
    master_seed: u64,
    tau: Option<f64>,
    loss_rate: Option<f64>,
    parallelism: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let cond = Condition::parse(condition).ok_or_else(|| {
        PyValueError::new_err(format!(
            "unknown condition `{condition}` (expected single_local, swarm_baseline_v2x or swarm_6g)"
        ))
    })?;
    let mut spec = ConditionSpec::preset(cond);
    if let Some(t) = tau {
        spec.consensus.tau = t;
    }
    if let Some(q) = loss_rate {
        spec.channel.loss_rate = q;
    }
    let plan = RunPlan { master_seed, seeds, episodes_per_seed, parallelism };
    let run = py
        .detach(|| campaign::run_condition(&spec, &plan))
        .map_err(py_err)?;
    summary_dict(py, &run.summary)
}

/// Loads a TOML campaign config, runs it, and returns the run id and summary rows.
///
/// With `out`, artifacts are written under `out/<run_id>/` and re-verified.
#[pyfunction]
#[pyo3(signature = (path, seeds = None, episodes_per_seed = None, out = None))]
fn run_config<'py>(
    py: Python<'py>,
    path: PathBuf,
    seeds: Option<Vec<u64>>,
    episodes_per_seed: Option<u64>,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let overrides = Overrides { seeds, episodes_per_seed, parallelism: None };
    let config = CampaignConfig::load_with(&path, &overrides).map_err(py_err)?;
    let (output, dir) = py
        .detach(|| -> v2v_consensus::Result<_> {
            let output = run::execute(&config)?;
            let dir = match &out {
                Some(root) => Some(run::write_and_verify(root, &output)?.dir),
                None => None,
            };
            Ok((output, dir))
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("run_id", &output.manifest.run_id)?;
    d.set_item("config_hash", &output.manifest.config_hash)?;
    d.set_item("episodes", output.records.len())?;
    let rows = output
        .rows
        .iter()
        .map(|r| row_dict(py, r))
        .collect::<PyResult<Vec<_>>>()?;
    d.set_item("rows", rows)?;
    d.set_item("dir", dir)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "v2v_consensus")]
fn v2v_consensus_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyIntent>()?;
    m.add_function(wrap_pyfunction!(inverse_distance_weights, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(run_condition, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add(
        "META_ACTIONS",
        MetaAction::ALL.iter().map(|a| a.label()).collect::<Vec<_>>(),
    )?;
    m.add("__version__", run::TOOL_VERSION)?;
    Ok(())
}
