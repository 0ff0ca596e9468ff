//! Python bindings for the subtrend pipeline.
//!
//! Structured results (metrics, manifests, reports) cross the boundary as
//! plain dicts and lists, decoded from their JSON form.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use subtrend::classifier::TextClassifier;
use subtrend::config::RunConfig;
use subtrend::corpus::{self, SubtitleCue, SubtitleDocument};
use subtrend::eval::{self, SplitFractions};
use subtrend::lexicon::{self, AbuseLexicon};
use subtrend::ngram::{self, NgramTable};
use subtrend::pipeline::{self, AnalysisOutput, Scope, Task};
use subtrend::sentiment::{self, LabelValues, SentimentLabel, SentimentWeights, NUM_LABELS};
use subtrend::textprep::{self, TokenSequence};
use subtrend::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Stream(_) => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for subtrend::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

// ---------------------------------------------------------------- text

/// Lowercased, punctuation-free form of a subtitle line.
#[pyfunction]
fn clean_text(raw: &str) -> String {
    textprep::clean_text(raw)
}

/// Cleaned tokens of a subtitle line.
#[pyfunction]
fn prepare(raw: &str) -> Vec<String> {
    textprep::prepare(raw).tokens
}

// ----------------------------------------------------------------- srt

#[pyclass(name = "Cue", frozen, get_all, from_py_object)]
#[derive(Clone)]
struct PyCue {
    index: u32,
    start_ms: u64,
    end_ms: u64,
    lines: Vec<String>,
}

#[pymethods]
impl PyCue {
    #[new]
    fn new(index: u32, start_ms: u64, end_ms: u64, lines: Vec<String>) -> Self {
        Self {
            index,
            start_ms,
            end_ms,
            lines,
        }
    }

    #[getter]
    fn text(&self) -> String {
        self.lines.join(" ")
    }

    #[getter]
    fn duration_ms(&self) -> u64 {
        self.end_ms.saturating_sub(self.start_ms)
    }

    fn __repr__(&self) -> String {
        format!(
            "Cue({}, {} --> {}, {:?})",
            self.index,
            corpus::format_timestamp(self.start_ms),
            corpus::format_timestamp(self.end_ms),
            self.text()
        )
    }
}

impl From<SubtitleCue> for PyCue {
    fn from(c: SubtitleCue) -> Self {
        Self {
            index: c.index,
            start_ms: c.start_ms,
            end_ms: c.end_ms,
            lines: c.lines,
        }
    }
}

/// Parses SRT text. Returns the cues and the warnings for skipped blocks.
#[pyfunction]
#[pyo3(signature = (text, film_id = "film"))]
fn parse_srt(text: &str, film_id: &str) -> PyResult<(Vec<PyCue>, Vec<String>)> {
    let (doc, report) = corpus::parse_srt_str(text, film_id).py()?;
    Ok((
        doc.cues.into_iter().map(PyCue::from).collect(),
        report.warnings(),
    ))
}

#[pyfunction]
fn serialize_srt(cues: Vec<PyCue>) -> String {
    let cues = cues
        .into_iter()
        .map(|c| SubtitleCue {
            index: c.index,
            start_ms: c.start_ms,
            end_ms: c.end_ms,
            lines: c.lines,
        })
        .collect();
    corpus::serialize_srt(&SubtitleDocument::new("film", cues))
}

#[pyfunction]
fn parse_timestamp(s: &str) -> Option<u64> {
    corpus::parse_timestamp(s)
}

#[pyfunction]
fn format_timestamp(ms: u64) -> String {
    corpus::format_timestamp(ms)
}

// -------------------------------------------------------------- ngrams

/// Counts of every n-gram over utterances; windows never span utterances.
#[pyfunction]
fn ngram_counts(utterances: Vec<Vec<String>>, n: usize) -> PyResult<BTreeMap<String, u64>> {
    let mut table = NgramTable::new(n).py()?;
    for u in &utterances {
        table.add_sequence(u);
    }
    Ok(table
        .counts()
        .iter()
        .map(|(g, c)| (g.join(" "), *c))
        .collect())
}

/// The `k` most frequent n-grams, ties broken alphabetically.
#[pyfunction]
fn top_ngrams(utterances: Vec<Vec<String>>, n: usize, k: usize) -> PyResult<Vec<(String, u64)>> {
    let seqs: Vec<TokenSequence> = utterances.into_iter().map(TokenSequence::from).collect();
    let table = ngram::document_ngrams(&seqs, n).py()?;
    Ok(ngram::top_k(&table, k)
        .py()?
        .into_iter()
        .map(|r| (r.ngram, r.count))
        .collect())
}

// ------------------------------------------------------------- lexicon

#[pyclass(name = "Lexicon", frozen)]
struct PyLexicon(AbuseLexicon);

#[pymethods]
impl PyLexicon {
    #[new]
    #[pyo3(signature = (terms, name = "custom", version = "0"))]
    fn new(terms: Vec<String>, name: &str, version: &str) -> PyResult<Self> {
        AbuseLexicon::from_terms(name, version, terms)
            .py()
            .map(Self)
    }

    #[staticmethod]
    fn bundled() -> Self {
        Self(AbuseLexicon::bundled())
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        AbuseLexicon::load(path).py().map(Self)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    #[getter]
    fn version(&self) -> String {
        self.0.version.clone()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// `(abusive, total)` word counts of a line.
    fn count(&self, text: &str) -> PyResult<(u64, u64)> {
        let c = lexicon::count_abusive(&textprep::prepare(text), &self.0).py()?;
        Ok((c.abusive, c.total))
    }
}

// ----------------------------------------------------------- sentiment

#[pyfunction]
fn sentiment_labels() -> Vec<String> {
    SentimentLabel::names()
}

/// Weighted polarity of ten label values. Uses the bundled weights when
/// none are given. Returns `(score, polarity)`.
#[pyfunction]
#[pyo3(signature = (values, weights = None))]
fn weighted_score(values: Vec<f64>, weights: Option<Vec<f64>>) -> PyResult<(f64, String)> {
    let values = LabelValues::from_slice(&values).py()?;
    let weights = match weights {
        None => SentimentWeights::bundled(),
        Some(w) => {
            let arr: [f64; NUM_LABELS] = w.as_slice().try_into().map_err(|_| {
                PyValueError::new_err(format!("expected {NUM_LABELS} weights, got {}", w.len()))
            })?;
            SentimentWeights::new("custom", arr).py()?
        }
    };
    let r = sentiment::weighted_score(&values, &weights);
    Ok((r.score, r.sign.as_str().to_owned()))
}

// ---------------------------------------------------------------- eval

#[pyfunction]
fn multilabel_metrics(
    py: Python<'_>,
    y_true: Vec<Vec<bool>>,
    y_pred: Vec<Vec<bool>>,
) -> PyResult<Py<PyAny>> {
    to_py(
        py,
        &eval::compute_multilabel_metrics(&y_true, &y_pred).py()?,
    )
}

#[pyfunction]
fn binary_metrics(py: Python<'_>, y_true: Vec<bool>, y_pred: Vec<bool>) -> PyResult<Py<PyAny>> {
    to_py(py, &eval::compute_binary_metrics(&y_true, &y_pred).py()?)
}

/// 70/10/20 iterative stratified split. Returns `(train, validation, test)`.
#[pyfunction]
#[pyo3(signature = (labels, seed = eval::DEFAULT_SEED))]
fn stratified_split(
    labels: Vec<Vec<bool>>,
    seed: u64,
) -> PyResult<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let s = eval::iterative_stratified_split(&labels, SplitFractions::default(), seed).py()?;
    Ok((s.train, s.validation, s.test))
}

// ---------------------------------------------------------- classifier

#[pyclass(name = "Classifier", frozen)]
struct PyClassifier(TextClassifier);

#[pymethods]
impl PyClassifier {
    /// Loads a model directory written by `train`.
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        TextClassifier::load(dir).py().map(Self)
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.0.labels.clone()
    }

    fn predict_proba(&self, texts: Vec<String>) -> PyResult<Vec<Vec<f64>>> {
        self.0.predict_proba(&texts).py()
    }
}

// ------------------------------------------------------------ pipeline

#[pyclass(name = "Config", frozen)]
struct PyConfig(RunConfig);

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        RunConfig::load(path).py().map(Self)
    }

    #[getter]
    fn output_dir(&self) -> PathBuf {
        self.0.output_dir.clone()
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.0.hash.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }
}

#[pyfunction]
fn ingest(py: Python<'_>, config: &PyConfig) -> PyResult<Py<PyAny>> {
    let manifest = py.detach(|| pipeline::cmd_ingest(&config.0)).py()?;
    to_py(py, &manifest)
}

/// Trains the `sentiment` or `abuse` model and returns its metric report.
#[pyfunction]
#[pyo3(signature = (config, task, data = None))]
fn train(
    py: Python<'_>,
    config: &PyConfig,
    task: &str,
    data: Option<PathBuf>,
) -> PyResult<Py<PyAny>> {
    let task: Task = task.parse().py()?;
    let report = py
        .detach(|| pipeline::cmd_train(&config.0, task, data.as_deref()))
        .py()?;
    to_py(py, &report)
}

/// Analyses the whole corpus, or one film when `film_id` is given.
#[pyfunction]
#[pyo3(signature = (config, film_id = None))]
fn analyze(py: Python<'_>, config: &PyConfig, film_id: Option<String>) -> PyResult<Py<PyAny>> {
    let scope = film_id.map_or(Scope::Corpus, Scope::Film);
    match py
        .detach(|| pipeline::cmd_analyze(&config.0, &scope))
        .py()?
    {
        AnalysisOutput::Corpus(r) => to_py(py, &r),
        AnalysisOutput::Film(r) => to_py(py, &r),
    }
}

/// Rewrites the CSV exports from the stored reports. Returns the report count.
#[pyfunction]
fn export(py: Python<'_>, config: &PyConfig) -> PyResult<usize> {
    py.detach(|| pipeline::cmd_export(&config.0)).py()
}

#[pymodule]
fn subtrend_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCue>()?;
    m.add_class::<PyLexicon>()?;
    m.add_class::<PyClassifier>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(clean_text, m)?)?;
    m.add_function(wrap_pyfunction!(prepare, m)?)?;
    m.add_function(wrap_pyfunction!(parse_srt, m)?)?;
    m.add_function(wrap_pyfunction!(serialize_srt, m)?)?;
    m.add_function(wrap_pyfunction!(parse_timestamp, m)?)?;
    m.add_function(wrap_pyfunction!(format_timestamp, m)?)?;
    m.add_function(wrap_pyfunction!(ngram_counts, m)?)?;
    m.add_function(wrap_pyfunction!(top_ngrams, m)?)?;
    m.add_function(wrap_pyfunction!(sentiment_labels, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_score, m)?)?;
    m.add_function(wrap_pyfunction!(multilabel_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(binary_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_split, m)?)?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(export, m)?)?;
    Ok(())
}
