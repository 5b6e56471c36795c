//! Python bindings for the `semrel` engine, imported as `pysemrel`.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use semrel::corpus::{parse_ohsumed_str, parse_topics_str};
use semrel::eval::{evaluate_run, EvalParams, Qrels};
use semrel::pipeline;
use semrel::ranker::rank_documents;
use semrel::relext::extract_rule_based;
use semrel::textproc;
use semrel::{Error, Grade, Granularity, InvertedIndex, QueryAnalysis, RankingParams, Representation, TermSpace, TextOptions, UnitTerms};

create_exception!(pysemrel, SemrelError, PyException);
create_exception!(pysemrel, MalformedInputError, SemrelError);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => io.into(),
        Error::Parameter(msg) => PyValueError::new_err(msg),
        e @ (Error::Malformed { .. } | Error::KnowledgeBase(_) | Error::DuplicateUnit(_) | Error::UnsortedRun(_)) => {
            MalformedInputError::new_err(e.to_string())
        }
        e => SemrelError::new_err(e.to_string()),
    }
}

trait OrPyErr<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPyErr<T> for semrel::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// `(surface, normalized, start, end)` per token; offsets count characters.
#[pyfunction]
fn tokenize(text: &str) -> Vec<(String, String, usize, usize)> {
    textproc::tokenize(text)
        .into_iter()
        .map(|t| (t.surface, t.normalized, t.start, t.end))
        .collect()
}

/// `(index, start, end, text)` per sentence.
#[pyfunction]
fn split_sentences(text: &str) -> Vec<(usize, usize, usize, String)> {
    textproc::split_sentences(text)
        .into_iter()
        .map(|s| {
            let body = s.text(text).to_string();
            (s.index, s.start, s.end, body)
        })
        .collect()
}

#[pyclass(frozen)]
struct KnowledgeBase {
    inner: semrel::KnowledgeBase,
}

#[pymethods]
impl KnowledgeBase {
    #[staticmethod]
    fn from_files(concepts: PathBuf, relations: PathBuf) -> PyResult<Self> {
        Ok(KnowledgeBase {
            inner: pipeline::load_kb(&concepts, &relations).py()?,
        })
    }

    #[staticmethod]
    fn from_strings(concepts: &str, relations: &str) -> PyResult<Self> {
        Ok(KnowledgeBase {
            inner: semrel::KnowledgeBase::from_strs(concepts, relations).py()?,
        })
    }

    #[getter]
    fn concept_count(&self) -> usize {
        self.inner.concept_count()
    }

    #[getter]
    fn relation_count(&self) -> usize {
        self.inner.relation_count()
    }

    fn predicates(&self) -> Vec<String> {
        self.inner.predicates().into_iter().map(str::to_string).collect()
    }

    /// Stored `(subject, predicate, object)` triples linking the two concepts.
    fn relations_between(&self, a: &str, b: &str) -> Vec<(String, String, String)> {
        self.inner
            .relations_between(a, b)
            .into_iter()
            .map(|r| (r.subject_cui.clone(), r.predicate.clone(), r.object_cui.clone()))
            .collect()
    }
}

#[pyclass(frozen)]
struct Lexicon {
    inner: semrel::Lexicon,
}

#[pymethods]
impl Lexicon {
    #[new]
    #[pyo3(signature = (kb, stemming = false, stopwords = false))]
    fn new(kb: &KnowledgeBase, stemming: bool, stopwords: bool) -> Self {
        let normalizer = semrel::Normalizer::new(TextOptions { stemming, stopwords });
        Lexicon {
            inner: semrel::Lexicon::build(&kb.inner, normalizer),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn max_phrase_len(&self) -> usize {
        self.inner.max_phrase_len()
    }

    /// Links one sentence: `(cui, token_start, token_end, matched_string)`.
    fn link(&self, sentence: &str) -> Vec<(String, usize, usize, String)> {
        let s = semrel::Sentence::whole(0, sentence);
        self.inner
            .link("", &s)
            .into_iter()
            .map(|m| (m.cui, m.token_start, m.token_end, m.matched_string))
            .collect()
    }

    /// Links one sentence and applies the rule-based extractor to it.
    fn extract(&self, kb: &KnowledgeBase, sentence: &str) -> Vec<(String, String, String)> {
        let s = semrel::Sentence::whole(0, sentence);
        extract_rule_based(&self.inner.link("", &s), &kb.inner)
            .into_iter()
            .map(|r| (r.subject_cui, r.predicate, r.object_cui))
            .collect()
    }
}

/// Validates an annotation file; returns
/// `(text_id, sentence_index, subject, predicate, object, source, confidence)` rows.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn read_annotations(path: PathBuf) -> PyResult<Vec<(String, usize, String, String, String, String, f64)>> {
    Ok(pipeline::load_annotations(&path)
        .py()?
        .into_iter()
        .map(|r| {
            (
                r.text_id,
                r.sentence_index,
                r.subject_cui,
                r.predicate,
                r.object_cui,
                r.source.to_string(),
                r.confidence,
            )
        })
        .collect())
}

/// Reads a mention file: `(text_id, sentence_index, cui, token_start, token_end, matched_string)`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn read_mentions(path: PathBuf) -> PyResult<Vec<(String, usize, String, usize, usize, String)>> {
    Ok(pipeline::load_mentions(&path)
        .py()?
        .into_iter()
        .map(|m| (m.text_id, m.sentence_index, m.cui, m.token_start, m.token_end, m.matched_string))
        .collect())
}

/// BM25 ranking of `(unit_id, terms)` units against `query`, best first.
#[pyfunction]
#[pyo3(signature = (units, query, k1 = 1.2, b = 0.75))]
fn bm25(units: Vec<(String, Vec<String>)>, query: Vec<String>, k1: f64, b: f64) -> PyResult<Vec<(String, f64)>> {
    let units = units
        .into_iter()
        .map(|(id, terms)| UnitTerms {
            unit_id: id.clone(),
            parent_doc_id: id,
            terms,
        })
        .collect();
    let index = InvertedIndex::build(units, TermSpace::Word, Granularity::Doc).py()?;
    let params = RankingParams {
        k1,
        b,
        top_k: index.n_units().max(1),
        ..RankingParams::default()
    };
    let q = QueryAnalysis::new("q", query, Vec::new(), Vec::new());
    Ok(rank_documents(&q, &index, &params, "py")
        .py()?
        .into_iter()
        .map(|e| (e.doc_id, e.score))
        .collect())
}

/// nDCG of a ranked list of document ids; `None` when nothing is relevant.
#[pyfunction]
#[pyo3(signature = (ranked, judgments, cutoff = 1000))]
fn ndcg(ranked: Vec<String>, judgments: HashMap<String, u8>, cutoff: usize) -> PyResult<Option<f64>> {
    let grades = judgments
        .into_iter()
        .map(|(d, g)| {
            Grade::new(g)
                .map(|g| (d, g))
                .ok_or_else(|| PyValueError::new_err(format!("grade {g} is outside 0..=2")))
        })
        .collect::<PyResult<HashMap<_, _>>>()?;
    let run: Vec<semrel::RunEntry> = ranked
        .into_iter()
        .enumerate()
        .map(|(i, doc_id)| semrel::RunEntry {
            topic_id: "q".into(),
            doc_id,
            rank: i as u32 + 1,
            score: 0.0,
            run_tag: "py".into(),
        })
        .collect();
    let params = EvalParams {
        cutoff,
        ..EvalParams::default()
    };
    semrel::eval::ndcg(&run, Some(&grades), &params).py()
}

/// Two-tailed paired t-test; `None` entries drop their pair.
/// Returns `(t, df, p, n)`.
#[pyfunction]
fn paired_t_test(a: Vec<Option<f64>>, b: Vec<Option<f64>>) -> PyResult<(f64, usize, f64, usize)> {
    let t = semrel::eval::paired_t_test(&a, &b).py()?;
    Ok((t.t, t.df, t.p, t.n))
}

fn layout(repr: &str, granularity: &str) -> PyResult<(Representation, Granularity)> {
    let r: Representation = repr.parse().py()?;
    let g: Granularity = granularity.parse().py()?;
    if g == Granularity::Passage && r != Representation::Bor {
        return Err(PyValueError::new_err("passage granularity requires repr='bor'"));
    }
    Ok((r, g))
}

/// A linked and annotated collection that ranks topics on demand.
#[pyclass]
struct Engine {
    inner: semrel::Engine,
}

#[pymethods]
impl Engine {
    /// Builds from file paths. `annotations` replaces rule-based extraction
    /// with an external annotation file.
    #[new]
    #[pyo3(signature = (corpus, topics, kb, annotations = None, k1 = 1.2, b = 0.75, top_k = 1000, passage_len = 2, stemming = false, stopwords = false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        corpus: PathBuf,
        topics: PathBuf,
        kb: &KnowledgeBase,
        annotations: Option<PathBuf>,
        k1: f64,
        b: f64,
        top_k: usize,
        passage_len: usize,
        stemming: bool,
        stopwords: bool,
    ) -> PyResult<Self> {
        let docs = pipeline::load_documents(&corpus).py()?;
        let topics = pipeline::load_topics(&topics).py()?;
        let relations = annotations.map(|p| pipeline::load_annotations(&p)).transpose().py()?;
        Self::build(&docs, &topics, kb, relations, k1, b, top_k, passage_len, stemming, stopwords)
    }

    /// Builds from in-memory corpus and topic text.
    #[staticmethod]
    #[pyo3(signature = (corpus, topics, kb, k1 = 1.2, b = 0.75, top_k = 1000, passage_len = 2))]
    fn from_strings(
        corpus: &str,
        topics: &str,
        kb: &KnowledgeBase,
        k1: f64,
        b: f64,
        top_k: usize,
        passage_len: usize,
    ) -> PyResult<Self> {
        let docs = parse_ohsumed_str(corpus).py()?;
        let topics = parse_topics_str(topics).py()?;
        Self::build(&docs, &topics, kb, None, k1, b, top_k, passage_len, false, false)
    }

    fn topic_ids(&self) -> Vec<String> {
        self.inner.topic_ids().map(str::to_string).collect()
    }

    /// Query relation tokens of a topic.
    fn query_relations(&self, topic_id: &str) -> PyResult<Vec<String>> {
        let q = self
            .inner
            .query(topic_id)
            .ok_or_else(|| PyValueError::new_err(format!("unknown topic `{topic_id}`")))?;
        Ok(q.relation_set.iter().cloned().collect())
    }

    /// `(doc_id, score)` best first, or `None` when the topic is NA.
    #[pyo3(signature = (topic_id, repr = "bor", granularity = "passage"))]
    fn rank(&mut self, topic_id: &str, repr: &str, granularity: &str) -> PyResult<Option<Vec<(String, f64)>>> {
        let (r, g) = layout(repr, granularity)?;
        let run = self.inner.rank(topic_id, r, g).py()?;
        Ok((!run.is_na()).then(|| run.entries().iter().map(|e| (e.doc_id.clone(), e.score)).collect()))
    }

    /// Per-topic nDCG for every topic, `None` for NA.
    #[pyo3(signature = (qrels, repr = "bor", granularity = "passage", cutoff = 1000))]
    fn evaluate(&mut self, qrels: PathBuf, repr: &str, granularity: &str, cutoff: usize) -> PyResult<Vec<(String, Option<f64>)>> {
        let (r, g) = layout(repr, granularity)?;
        let qrels = Qrels::new(&pipeline::load_qrels(&qrels).py()?);
        let tag = format!("{r}-{g}");
        let run = self.inner.run_all(r, g, &tag).py()?;
        let topics: Vec<String> = self.inner.topic_ids().map(str::to_string).collect();
        let params = EvalParams {
            cutoff,
            ..EvalParams::default()
        };
        let na: BTreeSet<String> = run.na_topics;
        let report = evaluate_run(&run.entries, &tag, &topics, &na, &qrels, &params).py()?;
        Ok(report.per_topic.into_iter().collect())
    }
}

impl Engine {
    #[allow(clippy::too_many_arguments)]
    fn build(
        docs: &[semrel::Document],
        topics: &[semrel::Topic],
        kb: &KnowledgeBase,
        relations: Option<Vec<semrel::RelationInstance>>,
        k1: f64,
        b: f64,
        top_k: usize,
        passage_len: usize,
        stemming: bool,
        stopwords: bool,
    ) -> PyResult<Self> {
        let params = RankingParams {
            k1,
            b,
            top_k,
            passage_len,
        };
        let options = TextOptions { stemming, stopwords };
        Ok(Engine {
            inner: semrel::Engine::new(docs, topics, &kb.inner, options, params, relations).py()?,
        })
    }
}

#[pymodule]
fn pysemrel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SemrelError", m.py().get_type::<SemrelError>())?;
    m.add("MalformedInputError", m.py().get_type::<MalformedInputError>())?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(split_sentences, m)?)?;
    m.add_function(wrap_pyfunction!(read_annotations, m)?)?;
    m.add_function(wrap_pyfunction!(read_mentions, m)?)?;
    m.add_function(wrap_pyfunction!(bm25, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg, m)?)?;
    m.add_function(wrap_pyfunction!(paired_t_test, m)?)?;
    m.add_class::<KnowledgeBase>()?;
    m.add_class::<Lexicon>()?;
    m.add_class::<Engine>()?;
    Ok(())
}
