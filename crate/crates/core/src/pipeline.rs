//! End-to-end orchestration shared by the `semrel` binary and the Python
//! bindings: loading inputs, annotating a collection, building indexes,
//! running topic sets and reading or writing the on-disk artifacts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::analysis::{analyze_documents, analyze_topic, index_units, query_analysis, AnalyzedText, Annotations};
use crate::config::Representation;
use crate::corpus::{parse_ohsumed_corpus, parse_qrels, parse_run, parse_topics, Document, QrelEntry, RunEntry, Topic};
use crate::error::{Error, Result};
use crate::eval::{evaluate_run, EvalParams, EvalReport, Qrels};
use crate::index::{Granularity, InvertedIndex, TermSpace};
use crate::kb::KnowledgeBase;
use crate::linker::{read_mentions, ConceptMention, Lexicon};
use crate::ranker::{run_topic, QueryAnalysis, RankingParams, TopicRun};
use crate::relext::{read_annotations, RelationInstance};
use crate::textproc::{Normalizer, TextOptions};

/// Opens a file for reading; a failure names the path.
pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Creates a file, and its parent directories, for writing.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn load_documents(path: &Path) -> Result<Vec<Document>> {
    parse_ohsumed_corpus(open(path)?)
}

pub fn load_topics(path: &Path) -> Result<Vec<Topic>> {
    parse_topics(open(path)?)
}

pub fn load_qrels(path: &Path) -> Result<Vec<QrelEntry>> {
    parse_qrels(open(path)?)
}

pub fn load_kb(concepts: &Path, relations: &Path) -> Result<KnowledgeBase> {
    KnowledgeBase::load(open(concepts)?, open(relations)?)
}

pub fn load_mentions(path: &Path) -> Result<Vec<ConceptMention>> {
    read_mentions(open(path)?)
}

pub fn load_annotations(path: &Path) -> Result<Vec<RelationInstance>> {
    read_annotations(open(path)?)
}

pub fn load_run(path: &Path) -> Result<Vec<RunEntry>> {
    parse_run(open(path)?)
}

/// First line of every artifact.
pub fn header(config_hash: &str) -> String {
    format!("# config={config_hash}")
}

/// Documents and topics split into sentences, plus the term normalizer.
pub struct Collection {
    pub documents: Vec<AnalyzedText>,
    pub topics: Vec<AnalyzedText>,
    pub normalizer: Normalizer,
}

impl Collection {
    pub fn new(documents: &[Document], topics: &[Topic], options: TextOptions) -> Result<Collection> {
        let mut seen = BTreeSet::new();
        for id in documents.iter().map(|d| &d.doc_id) {
            if !seen.insert(id) {
                return Err(Error::DuplicateUnit(id.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for id in topics.iter().map(|t| &t.topic_id) {
            if !seen.insert(id) {
                return Err(Error::DuplicateUnit(id.clone()));
            }
        }
        Ok(Collection {
            documents: analyze_documents(documents),
            topics: topics.iter().map(analyze_topic).collect(),
            normalizer: Normalizer::new(options),
        })
    }

    pub fn sentence_count(&self) -> usize {
        self.documents.iter().chain(&self.topics).map(|t| t.sentences.len()).sum()
    }

    /// Links every document and topic.
    pub fn link(&self, lexicon: &Lexicon) -> BTreeMap<String, Vec<ConceptMention>> {
        let mut mentions = Annotations::link_all(&self.documents, lexicon);
        mentions.extend(Annotations::link_all(&self.topics, lexicon));
        mentions
    }

    pub fn index(
        &self,
        annotations: &Annotations,
        space: TermSpace,
        granularity: Granularity,
        passage_len: usize,
    ) -> Result<InvertedIndex> {
        let units = index_units(
            &self.documents,
            space,
            granularity,
            passage_len,
            &self.normalizer,
            annotations,
        )?;
        InvertedIndex::build(units, space, granularity)
    }

    pub fn queries(&self, annotations: &Annotations) -> Result<Vec<QueryAnalysis>> {
        self.topics
            .iter()
            .map(|t| query_analysis(t, &self.normalizer, annotations))
            .collect()
    }

    /// Writes `text_id TAB sentence_index TAB start TAB end TAB text` for
    /// every sentence, documents first. Tabs and newlines in the text become
    /// spaces.
    pub fn write_sentences<W: Write>(&self, mut w: W) -> Result<()> {
        for text in self.documents.iter().chain(&self.topics) {
            for s in &text.sentences {
                let body: String = s
                    .text(&text.text)
                    .chars()
                    .map(|c| if c == '\t' || c == '\n' || c == '\r' { ' ' } else { c })
                    .collect();
                writeln!(w, "{}\t{}\t{}\t{}\t{}", text.text_id, s.index, s.start, s.end, body)?;
            }
        }
        Ok(())
    }
}

/// Ranked entries of a topic set plus the topics scored NA.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchRun {
    pub entries: Vec<RunEntry>,
    pub na_topics: BTreeSet<String>,
}

/// Scores every query against `index`. Topics run in parallel; the result
/// is in query order.
pub fn run_queries(
    queries: &[QueryAnalysis],
    index: &InvertedIndex,
    params: &RankingParams,
    run_tag: &str,
) -> Result<BatchRun> {
    let results: Vec<TopicRun> = queries
        .par_iter()
        .map(|q| run_topic(q, index, params, run_tag))
        .collect::<Result<_>>()?;
    let mut out = BatchRun::default();
    for (q, r) in queries.iter().zip(results) {
        match r {
            TopicRun::Na => {
                out.na_topics.insert(q.topic_id.clone());
            }
            TopicRun::Ranked(entries) => out.entries.extend(entries),
        }
    }
    Ok(out)
}

/// The NA sidecar of a run file: the run path with `.na` appended.
pub fn na_path(run_path: &Path) -> PathBuf {
    let mut s = run_path.as_os_str().to_owned();
    s.push(".na");
    PathBuf::from(s)
}

pub fn write_na<W: Write>(na_topics: &BTreeSet<String>, mut w: W) -> Result<()> {
    for t in na_topics {
        writeln!(w, "NA {t}")?;
    }
    Ok(())
}

pub fn read_na<R: Read>(mut reader: R) -> Result<BTreeSet<String>> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut out = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_whitespace().collect::<Vec<_>>()[..] {
            ["NA", topic] => {
                out.insert(topic.to_string());
            }
            _ => return Err(Error::malformed("NA list", idx + 1, format!("expected `NA <topic_id>`, found `{line}`"))),
        }
    }
    Ok(out)
}

/// Reads a run's NA sidecar; a missing sidecar means no NA topics.
pub fn load_na(run_path: &Path) -> Result<BTreeSet<String>> {
    let path = na_path(run_path);
    if !path.exists() {
        return Ok(BTreeSet::new());
    }
    read_na(open(&path)?)
}

/// Evaluates a run file. The topic universe is `topics` when given,
/// otherwise every topic seen in the run, its NA list or the judgments.
pub fn evaluate_run_file(
    run_path: &Path,
    topics: Option<&[String]>,
    qrels: &Qrels,
    params: &EvalParams,
) -> Result<EvalReport> {
    let run = load_run(run_path)?;
    let na = load_na(run_path)?;
    let tag = run
        .first()
        .map(|e| e.run_tag.clone())
        .unwrap_or_else(|| run_label(run_path));
    let universe: Vec<String> = match topics {
        Some(t) => t.to_vec(),
        None => run
            .iter()
            .map(|e| e.topic_id.as_str())
            .chain(na.iter().map(String::as_str))
            .chain(qrels.topics())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_string)
            .collect(),
    };
    evaluate_run(&run, &tag, &universe, &na, qrels, params)
}

fn run_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

/// Formats the one-line summary of a finished run.
pub fn run_summary(run: &BatchRun, n_topics: usize) -> String {
    let ranked: BTreeSet<&str> = run.entries.iter().map(|e| e.topic_id.as_str()).collect();
    let mut s = String::new();
    let _ = write!(
        s,
        "{} topics: {} ranked, {} NA, {} without results; {} entries",
        n_topics,
        ranked.len(),
        run.na_topics.len(),
        n_topics - ranked.len() - run.na_topics.len(),
        run.entries.len()
    );
    s
}

/// A fully annotated in-memory collection that ranks topics on demand.
/// Indexes are built the first time a representation is requested.
pub struct Engine {
    collection: Collection,
    annotations: Annotations,
    queries: BTreeMap<String, QueryAnalysis>,
    params: RankingParams,
    indexes: HashMap<(TermSpace, Granularity), InvertedIndex>,
}

impl Engine {
    /// Links the collection with `kb` and extracts relations with the rule
    /// set, unless `relations` supplies externally produced instances.
    pub fn new(
        documents: &[Document],
        topics: &[Topic],
        kb: &KnowledgeBase,
        options: TextOptions,
        params: RankingParams,
        relations: Option<Vec<RelationInstance>>,
    ) -> Result<Engine> {
        params.validate()?;
        let collection = Collection::new(documents, topics, options)?;
        let lexicon = Lexicon::build(kb, Normalizer::new(options));
        let mentions = collection.link(&lexicon);
        let annotations = match relations {
            None => {
                let relations = Annotations::extract_all(&mentions, kb);
                Annotations { mentions, relations }
            }
            Some(list) => {
                let mut a = Annotations::from_lists(Vec::new(), list);
                a.mentions = mentions;
                a
            }
        };
        let queries = collection
            .queries(&annotations)?
            .into_iter()
            .map(|q| (q.topic_id.clone(), q))
            .collect();
        Ok(Engine {
            collection,
            annotations,
            queries,
            params,
            indexes: HashMap::new(),
        })
    }

    pub fn collection(&self) -> &Collection {
        &self.collection
    }

    pub fn annotations(&self) -> &Annotations {
        &self.annotations
    }

    pub fn params(&self) -> &RankingParams {
        &self.params
    }

    pub fn topic_ids(&self) -> impl Iterator<Item = &str> {
        self.queries.keys().map(String::as_str)
    }

    pub fn query(&self, topic_id: &str) -> Option<&QueryAnalysis> {
        self.queries.get(topic_id)
    }

    pub fn index(&mut self, space: TermSpace, granularity: Granularity) -> Result<&InvertedIndex> {
        let key = (space, granularity);
        if !self.indexes.contains_key(&key) {
            let idx = self
                .collection
                .index(&self.annotations, space, granularity, self.params.passage_len)?;
            self.indexes.insert(key, idx);
        }
        Ok(&self.indexes[&key])
    }

    pub fn rank(&mut self, topic_id: &str, repr: Representation, granularity: Granularity) -> Result<TopicRun> {
        let query = self
            .queries
            .get(topic_id)
            .ok_or_else(|| Error::Parameter(format!("unknown topic `{topic_id}`")))?
            .clone();
        let tag = format!("{repr}-{granularity}");
        let params = self.params;
        let index = self.index(repr.space(), granularity)?;
        run_topic(&query, index, &params, &tag)
    }

    /// Runs every topic in topic-id order.
    pub fn run_all(&mut self, repr: Representation, granularity: Granularity, run_tag: &str) -> Result<BatchRun> {
        let queries: Vec<QueryAnalysis> = self.queries.values().cloned().collect();
        let params = self.params;
        let index = self.index(repr.space(), granularity)?;
        run_queries(&queries, index, &params, run_tag)
    }
}
