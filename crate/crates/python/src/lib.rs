//! Python bindings for the `foodcorpus` crate.
//!
//! Lists, strings and numbers map to their Python equivalents; reports,
//! prompt bundles and other structured results are returned as dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::Value;

use foodcorpus::document::{self, PatternExtractor, RawDocument, SourceKind, SplitConfig};
use foodcorpus::fixture::{write_fixture as write_fixture_files, FixtureSpec};
use foodcorpus::kg::{self, QuerySettings};
use foodcorpus::pipeline::{load_config, Pipeline};
use foodcorpus::quality::{self, SegmentConfig};
use foodcorpus::seed::stream;
use foodcorpus::structured;

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    match value {
        Value::Null => Ok(py.None().into_bound(py)),
        Value::Bool(b) => b.into_bound_py_any(py),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.into_bound_py_any(py),
            (None, Some(i)) => i.into_bound_py_any(py),
            _ => n.as_f64().unwrap_or(f64::NAN).into_bound_py_any(py),
        },
        Value::String(s) => s.into_bound_py_any(py),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            Ok(list.into_any())
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, to_py(py, v)?)?;
            }
            Ok(dict.into_any())
        }
    }
}

fn serialize<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(value).map_err(value_error)?)
}

/// Split a standard document into `(heading, body)` chapters.
#[pyfunction]
#[pyo3(signature = (text, heading_patterns=None))]
fn split_chapters(text: &str, heading_patterns: Option<Vec<String>>) -> PyResult<Vec<(String, String)>> {
    let rules = match heading_patterns {
        Some(p) => SplitConfig::new(&p).map_err(value_error)?,
        None => SplitConfig::default(),
    };
    let doc = RawDocument {
        doc_id: "doc".into(),
        text: text.into(),
        source_path: String::new(),
        source_kind: SourceKind::StandardDocument,
    };
    Ok(document::split_chapters(&doc, &rules)
        .into_iter()
        .map(|c| (c.heading, c.text))
        .collect())
}

/// Best document name in `text` as a dict, or `None`.
#[pyfunction]
#[pyo3(signature = (text, pattern=None))]
fn extract_document_name<'py>(py: Python<'py>, text: &str, pattern: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let extractor = match pattern {
        Some(p) => PatternExtractor::new(p).map_err(value_error)?,
        None => PatternExtractor::default(),
    };
    match document::extract_document_name(text, &extractor).map_err(value_error)? {
        Some(name) => serialize(py, &name),
        None => Ok(py.None().into_bound(py)),
    }
}

#[pyfunction]
fn segment_sentences(text: &str) -> Vec<String> {
    quality::segment_sentences(text, &SegmentConfig::default())
        .into_iter()
        .map(|s| s.text)
        .collect()
}

#[pyfunction]
fn render_markdown_table(header: Vec<String>, rows: Vec<Vec<String>>) -> PyResult<String> {
    structured::render_markdown_table(&header, &rows).map_err(value_error)
}

#[pyfunction]
fn parse_markdown_table(text: &str) -> PyResult<(Vec<String>, Vec<Vec<String>>)> {
    structured::parse_markdown_table(text).map_err(value_error)
}

/// Field lists for `k` texts over `fields`, drawn from a seeded stream.
#[pyfunction]
#[pyo3(signature = (fields, k, seed, extend_probability=0.5))]
fn sample_field_assignment(fields: Vec<String>, k: usize, seed: u64, extend_probability: f64) -> PyResult<Vec<Vec<String>>> {
    let mut rng = stream(seed, &["python", "assignment"]);
    structured::sample_field_assignment(&fields, k, extend_probability, &mut rng)
        .map(|a| a.texts)
        .map_err(value_error)
}

/// Write a synthetic input corpus under `root`; returns the config path.
#[pyfunction]
#[pyo3(signature = (root, seed=7, documents=100, records=1000, forum_questions=50, seeds=10))]
fn write_fixture(
    root: PathBuf,
    seed: u64,
    documents: usize,
    records: usize,
    forum_questions: usize,
    seeds: usize,
) -> PyResult<PathBuf> {
    let spec = FixtureSpec {
        documents,
        records,
        forum_questions,
        seeds,
    };
    write_fixture_files(&root, &spec, seed)
        .map(|layout| layout.config)
        .map_err(|e| PyIOError::new_err(e.to_string()))
}

/// Run every stage for the config at `config_path`; returns the report.
#[pyfunction]
#[pyo3(signature = (config_path, out=None, seed=None, workers=None))]
fn run_pipeline<'py>(
    py: Python<'py>,
    config_path: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let config = load_config(&config_path, |c| {
        if let Some(out) = &out {
            c.output_dir = out.clone();
        }
        if seed.is_some() {
            c.seed = seed;
        }
        if let Some(w) = workers {
            c.workers = w;
        }
        Ok(())
    })
    .map_err(value_error)?;
    let report = py
        .detach(|| Pipeline::new(config).and_then(|p| p.run_all()))
        .map_err(value_error)?;
    serialize(py, &report)
}

/// Additive-k smoothed n-gram model.
#[pyclass(frozen)]
struct NgramModel {
    inner: quality::NgramModel,
}

#[pymethods]
impl NgramModel {
    #[new]
    #[pyo3(signature = (corpus, n=3, k=0.5))]
    fn new(corpus: Vec<Vec<String>>, n: usize, k: f64) -> PyResult<Self> {
        Ok(NgramModel {
            inner: quality::train_ngram(&corpus, n, k).map_err(value_error)?,
        })
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn prob(&self, context: Vec<String>, token: &str) -> PyResult<f64> {
        if context.len() + 1 != self.inner.order() {
            return Err(value_error(format!("context must hold {} tokens", self.inner.order() - 1)));
        }
        let context: Vec<&str> = context.iter().map(String::as_str).collect();
        Ok(self.inner.prob(&context, token))
    }

    fn perplexity(&self, tokens: Vec<String>) -> PyResult<f64> {
        let tokens: Vec<&str> = tokens.iter().map(String::as_str).collect();
        self.inner
            .perplexity(&tokens)
            .ok_or_else(|| value_error("cannot score an empty token list"))
    }
}

/// Triple store with entity-linked retrieval.
#[pyclass(frozen)]
struct KnowledgeGraph {
    inner: kg::KnowledgeGraph,
}

#[pymethods]
impl KnowledgeGraph {
    /// From `(subject, predicate, object)` or `(subject, predicate, object,
    /// provenance)` tuples.
    #[new]
    fn new(triples: Vec<Vec<String>>) -> PyResult<Self> {
        let triples = triples
            .into_iter()
            .enumerate()
            .map(|(i, t)| match t.as_slice() {
                [s, p, o] => Ok(kg::Triple::new(s, p, o, format!("python-{i}"))),
                [s, p, o, prov] => Ok(kg::Triple::new(s, p, o, prov)),
                _ => Err(value_error(format!("triple {i} needs 3 or 4 items"))),
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(KnowledgeGraph {
            inner: kg::KnowledgeGraph::from_triples(triples),
        })
    }

    /// Load a triples JSONL file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = std::fs::File::open(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let (triples, _) = kg::load_triples(std::io::BufReader::new(file)).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(KnowledgeGraph {
            inner: kg::KnowledgeGraph::from_triples(triples),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Entities linked in `query`, as `(entity, start, end)` char spans.
    fn link(&self, query: &str) -> Vec<(String, usize, usize)> {
        kg::parse_query(query, &self.inner)
            .entities
            .into_iter()
            .map(|e| (e.entity, e.start, e.end))
            .collect()
    }

    /// Retrieve facts and assemble the prompt.
    #[pyo3(signature = (query, limit=kg::DEFAULT_LIMIT))]
    fn query<'py>(&self, py: Python<'py>, query: &str, limit: usize) -> PyResult<Bound<'py, PyAny>> {
        let settings = QuerySettings {
            limit,
            ..QuerySettings::default()
        };
        serialize(py, &kg::answer_query(&self.inner, query, &settings))
    }
}

#[pymodule]
fn pyfoodcorpus(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(split_chapters, m)?)?;
    m.add_function(wrap_pyfunction!(extract_document_name, m)?)?;
    m.add_function(wrap_pyfunction!(segment_sentences, m)?)?;
    m.add_function(wrap_pyfunction!(render_markdown_table, m)?)?;
    m.add_function(wrap_pyfunction!(parse_markdown_table, m)?)?;
    m.add_function(wrap_pyfunction!(sample_field_assignment, m)?)?;
    m.add_function(wrap_pyfunction!(write_fixture, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_class::<NgramModel>()?;
    m.add_class::<KnowledgeGraph>()?;
    Ok(())
}
