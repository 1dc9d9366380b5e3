//! Python bindings. Structured values cross the boundary as JSON, so
//! results are plain dicts and lists on the Python side.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyConnectionError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use clusterscribe_core::config::RunConfig;
use clusterscribe_core::dataset::{save_dataset, MAX_CAPTIONS};
use clusterscribe_core::describe::tfidf_keywords;
use clusterscribe_core::eval::report::report_json;
use clusterscribe_core::gateway::mock_embed_rule;
use clusterscribe_core::synth::{synth_dataset, SynthConfig};
use clusterscribe_core::{cli, load_dataset, preprocess_caption, Dataset, Error, ImageRecord};

fn to_py(err: Error) -> PyErr {
    let msg = err.to_string();
    match err {
        Error::Io { .. } => PyOSError::new_err(msg),
        e if e.is_transport() => PyConnectionError::new_err(msg),
        Error::Validation(_) | Error::Parse { .. } | Error::Config(_) => PyValueError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn py_to_json(value: &Bound<'_, PyAny>) -> PyResult<String> {
    value
        .py()
        .import("json")?
        .call_method1("dumps", (value,))?
        .extract()
}

/// Loads and checks a dataset file; returns record count, feature
/// dimension and a caption-count histogram.
#[pyfunction]
fn validate<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let ds = load_dataset(&path).map_err(to_py)?;
    let summary = serde_json::json!({
        "records": ds.len(),
        "feature_dim": ds.feature_dim(),
        "caption_histogram": ds.caption_histogram(),
    });
    json_to_py(py, &summary.to_string())
}

/// Records of a dataset file as a list of `{id, features, captions}` dicts.
#[pyfunction]
fn load_records<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let ds = load_dataset(&path).map_err(to_py)?;
    let text =
        serde_json::to_string(ds.records()).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &text)
}

/// Validates `records` and writes them as a dataset file.
#[pyfunction]
#[pyo3(signature = (records, path, metadata = None))]
fn write_records(
    records: &Bound<'_, PyAny>,
    path: PathBuf,
    metadata: Option<BTreeMap<String, String>>,
) -> PyResult<usize> {
    let parsed: Vec<ImageRecord> = serde_json::from_str(&py_to_json(records)?)
        .map_err(|e| PyValueError::new_err(format!("invalid records: {e}")))?;
    let ds = Dataset::new(parsed, metadata.unwrap_or_default()).map_err(to_py)?;
    save_dataset(&ds, &path).map_err(to_py)?;
    Ok(ds.len())
}

/// Writes a synthetic dataset with `topics` labelled topics.
#[pyfunction]
#[pyo3(signature = (path, topics = 3, per_topic = 20, seed = 0))]
fn synth(path: PathBuf, topics: usize, per_topic: usize, seed: u64) -> PyResult<usize> {
    let ds = synth_dataset(&SynthConfig {
        topics,
        per_topic,
        seed,
        ..SynthConfig::default()
    })
    .map_err(to_py)?;
    save_dataset(&ds, &path).map_err(to_py)?;
    Ok(ds.len())
}

/// Runs the experiment matrix and returns the report. `config` is TOML
/// text; keyword arguments override it.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (dataset, out, config = None, k = None, n = None, seed = None, cluster_first = true))]
fn run<'py>(
    py: Python<'py>,
    dataset: PathBuf,
    out: PathBuf,
    config: Option<&str>,
    k: Option<usize>,
    n: Option<usize>,
    seed: Option<u64>,
    cluster_first: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = match config {
        Some(text) => RunConfig::from_toml_str(text).map_err(to_py)?,
        None => RunConfig::default(),
    };
    cfg.dataset = Some(dataset);
    cfg.out = out;
    if let Some(k) = k {
        cfg.k = k;
    }
    if let Some(n) = n {
        cfg.sampling.n = n;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let report = py
        .detach(|| cli::cmd_run(&cfg, cluster_first, &mut Vec::new()))
        .map_err(to_py)?;
    let bytes = report_json(&report).map_err(to_py)?;
    json_to_py(py, &String::from_utf8_lossy(&bytes))
}

/// Lowercased, stopword-free lemmas of one caption.
#[pyfunction]
fn preprocess(text: &str) -> Vec<String> {
    preprocess_caption(text).lemmas
}

/// Top `k` noun keywords of `docs[target]` as `(term, score)` pairs.
#[pyfunction]
#[pyo3(signature = (docs, target, k = 7))]
fn keywords(docs: Vec<String>, target: usize, k: usize) -> PyResult<Vec<(String, f64)>> {
    let scored = tfidf_keywords(&docs, target, k).map_err(to_py)?;
    Ok(scored.into_iter().map(|s| (s.term, s.score)).collect())
}

/// Unit-length embedding from the offline mock backend.
#[pyfunction]
fn mock_embed(text: &str) -> Vec<f64> {
    mock_embed_rule(text).values().to_vec()
}

#[pymodule]
fn clusterscribe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MAX_CAPTIONS", MAX_CAPTIONS)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(load_records, m)?)?;
    m.add_function(wrap_pyfunction!(write_records, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(keywords, m)?)?;
    m.add_function(wrap_pyfunction!(mock_embed, m)?)?;
    Ok(())
}
