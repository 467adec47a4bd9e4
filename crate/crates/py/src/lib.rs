//! Python bindings. Structured results cross the boundary as dicts built from
//! the same JSON the CLI emits.

use dmind3_core::harness::{
    corpus_from_jsonl, corpus_to_jsonl, generate_corpus, percentiles as core_percentiles, replay as core_replay,
    CorpusSpec, ReplayConfig,
};
use dmind3_core::intent::{extract_intent as core_extract, SelectorRegistry, TransactionPayload};
use dmind3_core::objectives::{c3_loss as core_c3, hps_loss as core_hps, kl_divergence as core_kl, C3Input, HpsInput};
use dmind3_core::orchestrator::{FinalOutcome, Orchestrator, OrchestratorConfig};
use dmind3_core::policy::{evaluate_gate as core_gate, load_policy, Policy, Profile};
use dmind3_core::primitives::Selector;
use dmind3_core::router::{predict_latency, NetworkState, PlanPath};
use dmind3_core::sanitizer::{audit_violations, project_public as core_project};
use dmind3_core::tiers::{PrivateContext, PublicContext};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyAny;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_tx(tx_json: &str) -> PyResult<TransactionPayload> {
    TransactionPayload::from_json(tx_json).map_err(err)
}

/// Shipped profile or a policy JSON document.
#[pyclass(name = "Policy", module = "dmind3", from_py_object)]
#[derive(Clone)]
struct PyPolicy {
    inner: Policy,
}

#[pymethods]
impl PyPolicy {
    #[new]
    #[pyo3(signature = (profile = "default"))]
    fn new(profile: &str) -> PyResult<Self> {
        let p: Profile = profile.parse().map_err(err)?;
        Ok(PyPolicy {
            inner: Policy::profile(p),
        })
    }

    #[staticmethod]
    fn from_json(doc: &str) -> PyResult<Self> {
        Ok(PyPolicy {
            inner: load_policy(doc).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn tau_conf(&self) -> f64 {
        self.inner.tau_conf
    }

    #[getter]
    fn tau_risk(&self) -> f64 {
        self.inner.tau_risk
    }

    #[getter]
    fn latency_budget_ms(&self) -> u64 {
        self.inner.latency_budget_ms
    }

    #[getter]
    fn cloud_enabled(&self) -> bool {
        self.inner.cloud_enabled
    }

    #[setter]
    fn set_cloud_enabled(&mut self, on: bool) {
        self.inner.cloud_enabled = on;
    }

    fn __repr__(&self) -> String {
        format!(
            "Policy(tau_conf={}, tau_risk={}, budget={}ms)",
            self.inner.tau_conf, self.inner.tau_risk, self.inner.latency_budget_ms
        )
    }
}

#[pyclass(name = "Network", module = "dmind3", from_py_object)]
#[derive(Clone)]
struct PyNetwork {
    inner: NetworkState,
}

#[pymethods]
impl PyNetwork {
    /// `baseline`, `baseline-jitter`, or a network JSON document.
    #[new]
    #[pyo3(signature = (spec = "baseline"))]
    fn new(spec: &str) -> PyResult<Self> {
        let inner = match spec {
            "baseline" => NetworkState::baseline(),
            "baseline-jitter" => NetworkState::baseline_jitter(),
            doc => NetworkState::from_json(doc).map_err(err)?,
        };
        Ok(PyNetwork { inner })
    }

    /// Analytic latency of a plan path such as `"EdgeLocal"`.
    fn predict(&self, path: &str) -> PyResult<f64> {
        let p: PlanPath = serde_json::from_value(serde_json::Value::String(path.into())).map_err(err)?;
        predict_latency(p, &self.inner).map_err(err)
    }
}

#[pyclass(name = "Outcome", module = "dmind3", frozen)]
struct PyOutcome {
    inner: FinalOutcome,
}

#[pymethods]
impl PyOutcome {
    #[getter]
    fn verdict(&self) -> String {
        self.inner.verdict.to_string()
    }

    #[getter]
    fn exit_code(&self) -> i32 {
        self.inner.verdict.exit_code()
    }

    #[getter]
    fn path(&self) -> String {
        self.inner.plan_used.path.to_string()
    }

    #[getter]
    fn latency_ms(&self) -> f64 {
        self.inner.total_latency_ms
    }

    #[getter]
    fn operations(&self) -> Vec<String> {
        self.inner.provenance.operations().into_iter().map(String::from).collect()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn to_json(&self) -> String {
        self.inner.to_canonical_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "Outcome(verdict={}, path={}, latency_ms={})",
            self.inner.verdict, self.inner.plan_used.path, self.inner.total_latency_ms
        )
    }
}

/// Runs one transaction through the full pipeline.
#[pyfunction]
#[pyo3(signature = (tx_json, policy = None, network = None, config_json = None, seed = 0))]
fn decide(
    tx_json: &str,
    policy: Option<PyPolicy>,
    network: Option<PyNetwork>,
    config_json: Option<&str>,
    seed: u64,
) -> PyResult<PyOutcome> {
    let payload = parse_tx(tx_json)?;
    let policy = policy.map_or_else(|| Policy::profile(Profile::Default), |p| p.inner);
    let network = network.map_or_else(NetworkState::baseline, |n| n.inner);
    let config: OrchestratorConfig = match config_json {
        Some(doc) => serde_json::from_str(doc).map_err(err)?,
        None => OrchestratorConfig::default(),
    };
    let ctx = PrivateContext::with_allowlist(policy.allowlist.clone());
    let inner = Orchestrator::new(&policy, &network, &config).process(&payload, &ctx, &PublicContext::default(), seed);
    Ok(PyOutcome { inner })
}

#[pyfunction]
fn extract_intent<'py>(py: Python<'py>, tx_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let (_, intent) = core_extract(&parse_tx(tx_json)?, &SelectorRegistry::builtin());
    to_py(py, &intent)
}

#[pyfunction]
#[pyo3(signature = (tx_json, policy = None))]
fn evaluate_gate<'py>(py: Python<'py>, tx_json: &str, policy: Option<PyPolicy>) -> PyResult<Bound<'py, PyAny>> {
    let policy = policy.map_or_else(|| Policy::profile(Profile::Default), |p| p.inner);
    let (_, intent) = core_extract(&parse_tx(tx_json)?, &SelectorRegistry::builtin());
    to_py(py, &core_gate(&intent, &policy))
}

#[pyfunction]
#[pyo3(signature = (tx_json, policy = None))]
fn project_public<'py>(py: Python<'py>, tx_json: &str, policy: Option<PyPolicy>) -> PyResult<Bound<'py, PyAny>> {
    let policy = policy.map_or_else(|| Policy::profile(Profile::Default), |p| p.inner);
    let out = core_project(&parse_tx(tx_json)?, &policy).map_err(err)?;
    to_py(py, &out)
}

#[pyfunction]
fn selector(signature: &str) -> String {
    Selector::of_signature(signature).to_string()
}

/// Labeled corpus as JSON lines.
#[pyfunction]
#[pyo3(signature = (size, adversarial_fraction = 0.3, seed = 0))]
fn gen_corpus(size: usize, adversarial_fraction: f64, seed: u64) -> PyResult<String> {
    let spec = CorpusSpec::new(size, adversarial_fraction, seed);
    spec.validate().map_err(err)?;
    Ok(corpus_to_jsonl(&generate_corpus(&spec)))
}

#[pyfunction]
#[pyo3(signature = (corpus_jsonl, policy = None))]
fn audit_privacy<'py>(py: Python<'py>, corpus_jsonl: &str, policy: Option<PyPolicy>) -> PyResult<Bound<'py, PyAny>> {
    let policy = policy.map_or_else(|| Policy::profile(Profile::Strict), |p| p.inner);
    let payloads: Vec<_> = corpus_from_jsonl(corpus_jsonl)
        .map_err(err)?
        .into_iter()
        .map(|c| c.payload)
        .collect();
    to_py(py, &audit_violations(&payloads, &policy))
}

#[pyfunction]
#[pyo3(signature = (corpus_jsonl, policy = None, network = None, seed = 0, workers = 1))]
fn replay<'py>(
    py: Python<'py>,
    corpus_jsonl: &str,
    policy: Option<PyPolicy>,
    network: Option<PyNetwork>,
    seed: u64,
    workers: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let corpus = corpus_from_jsonl(corpus_jsonl).map_err(err)?;
    let policy = policy.map_or_else(|| Policy::profile(Profile::Default), |p| p.inner);
    let network = network.map_or_else(NetworkState::baseline, |n| n.inner);
    let config = ReplayConfig {
        seed,
        workers,
        ..Default::default()
    };
    let report = py.detach(|| core_replay(&corpus, &policy, &network, &config));
    to_py(py, &report)
}

#[pyfunction]
fn hps_loss(instance_json: &str) -> PyResult<f64> {
    let input: HpsInput = serde_json::from_str(instance_json).map_err(err)?;
    core_hps(&input).map_err(err)
}

#[pyfunction]
fn c3_loss(instance_json: &str) -> PyResult<f64> {
    let input: C3Input = serde_json::from_str(instance_json).map_err(err)?;
    core_c3(&input).map_err(err)
}

#[pyfunction]
fn kl_divergence(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    core_kl(&p, &q).map_err(err)
}

/// Nearest-rank percentiles.
#[pyfunction]
fn percentiles(samples: Vec<f64>, qs: Vec<f64>) -> PyResult<Vec<f64>> {
    core_percentiles(&samples, &qs).map_err(err)
}

#[pymodule]
fn dmind3(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyOutcome>()?;
    m.add_function(wrap_pyfunction!(decide, m)?)?;
    m.add_function(wrap_pyfunction!(extract_intent, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_gate, m)?)?;
    m.add_function(wrap_pyfunction!(project_public, m)?)?;
    m.add_function(wrap_pyfunction!(selector, m)?)?;
    m.add_function(wrap_pyfunction!(gen_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(audit_privacy, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_function(wrap_pyfunction!(hps_loss, m)?)?;
    m.add_function(wrap_pyfunction!(c3_loss, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(percentiles, m)?)?;
    Ok(())
}
