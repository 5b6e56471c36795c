//! Okapi BM25 over any index, document ranking, and relation-weighted
//! passage aggregation.
//!
//! Term weight: `idf(t) · tf·(k1+1) / (tf + k1·(1 − b + b·len/avgdl))` with
//! `idf(t) = ln(1 + (N − df + 0.5)/(df + 0.5))`, summed over the distinct
//! query terms. The passage-weighted document score is
//!
//! ```text
//! score(q, d) = Σ_{p ∈ d} |R_p ∩ R_q| / |R_q| · BM25(p, q)
//! ```
//!
//! where `R_q` and `R_p` are the relation-token sets of the query and the
//! passage, and `BM25(p, q)` scores the passage against `R_q`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::corpus::RunEntry;
use crate::error::{Error, Result};
use crate::index::{Granularity, IndexUnit, InvertedIndex, TermSpace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingParams {
    pub k1: f64,
    pub b: f64,
    pub top_k: usize,
    pub passage_len: usize,
}

impl Default for RankingParams {
    fn default() -> Self {
        RankingParams {
            k1: 1.2,
            b: 0.75,
            top_k: 1000,
            passage_len: 2,
        }
    }
}

impl RankingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(Error::Parameter(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Parameter(format!("b must lie in [0, 1], got {}", self.b)));
        }
        if self.top_k == 0 {
            return Err(Error::Parameter("top_k must be at least 1".into()));
        }
        if self.passage_len == 0 {
            return Err(Error::Parameter("passage_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// A topic's terms in every space, plus its relation set `R_q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryAnalysis {
    pub topic_id: String,
    pub words: Vec<String>,
    pub concepts: Vec<String>,
    pub relations: Vec<String>,
    pub relation_set: BTreeSet<String>,
}

impl QueryAnalysis {
    pub fn new(
        topic_id: &str,
        words: Vec<String>,
        concepts: Vec<String>,
        relations: Vec<String>,
    ) -> QueryAnalysis {
        let relation_set = relations.iter().cloned().collect();
        QueryAnalysis {
            topic_id: topic_id.to_string(),
            words,
            concepts,
            relations,
            relation_set,
        }
    }

    pub fn terms(&self, space: TermSpace) -> &[String] {
        match space {
            TermSpace::Word => &self.words,
            TermSpace::Concept => &self.concepts,
            TermSpace::Relation => &self.relations,
        }
    }
}

/// Outcome of scoring one topic.
#[derive(Debug, Clone, PartialEq)]
pub enum TopicRun {
    Ranked(Vec<RunEntry>),
    /// The topic has no query relations, so it has no relation score.
    Na,
}

impl TopicRun {
    pub fn entries(&self) -> &[RunEntry] {
        match self {
            TopicRun::Ranked(e) => e,
            TopicRun::Na => &[],
        }
    }

    pub fn is_na(&self) -> bool {
        matches!(self, TopicRun::Na)
    }
}

pub fn idf(n_units: usize, df: usize) -> f64 {
    let (n, df) = (n_units as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

fn term_weight(idf: f64, tf: u32, len: u64, avgdl: f64, params: &RankingParams) -> f64 {
    let tf = tf as f64;
    let rel_len = if avgdl > 0.0 { len as f64 / avgdl } else { 1.0 };
    idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * rel_len))
}

fn distinct(terms: &[String]) -> BTreeSet<&str> {
    terms.iter().map(String::as_str).collect()
}

/// BM25 of a single unit. Repeated query terms count once.
pub fn bm25(
    query_terms: &[String],
    unit: &IndexUnit,
    index: &InvertedIndex,
    params: &RankingParams,
) -> Result<f64> {
    if index.n_units() == 0 {
        return Err(Error::EmptyIndex);
    }
    let mut score = 0.0;
    for term in distinct(query_terms) {
        let tf = index.tf(term, &unit.unit_id);
        if tf == 0 {
            continue;
        }
        let idf = idf(index.n_units(), index.df(term));
        score += term_weight(idf, tf, unit.length, index.avgdl(), params);
    }
    Ok(score)
}

/// Term-at-a-time accumulation of BM25 over every unit touched by a query
/// term. Keys are unit positions in the index.
fn accumulate(
    terms: &BTreeSet<&str>,
    index: &InvertedIndex,
    params: &RankingParams,
) -> HashMap<u32, (u32, f64)> {
    let mut acc: HashMap<u32, (u32, f64)> = HashMap::new();
    for &term in terms {
        let postings = index.raw_postings(term);
        if postings.is_empty() {
            continue;
        }
        let idf = idf(index.n_units(), postings.len());
        for p in postings {
            let unit = index.unit(p.unit);
            let slot = acc.entry(p.unit).or_insert((0, 0.0));
            slot.0 += 1;
            slot.1 += term_weight(idf, p.tf, unit.length, index.avgdl(), params);
        }
    }
    acc
}

fn into_run(scored: Vec<(String, f64)>, topic_id: &str, top_k: usize, run_tag: &str) -> Vec<RunEntry> {
    let mut scored: Vec<(String, f64)> = scored.into_iter().filter(|(_, s)| *s > 0.0).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(top_k);
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (doc_id, score))| RunEntry {
            topic_id: topic_id.to_string(),
            doc_id,
            rank: i as u32 + 1,
            score,
            run_tag: run_tag.to_string(),
        })
        .collect()
}

/// Ranks documents of a document-granularity index by BM25 in the index's
/// term space. Zero-score documents are omitted; ties go to the smaller id.
pub fn rank_documents(
    query: &QueryAnalysis,
    index: &InvertedIndex,
    params: &RankingParams,
    run_tag: &str,
) -> Result<Vec<RunEntry>> {
    params.validate()?;
    if index.granularity() != Granularity::Doc {
        return Err(Error::Parameter(
            "rank_documents needs a document-granularity index".into(),
        ));
    }
    if index.n_units() == 0 {
        return Err(Error::EmptyIndex);
    }
    let terms = distinct(query.terms(index.space()));
    let scored = accumulate(&terms, index, params)
        .into_iter()
        .map(|(pos, (_, score))| (index.unit(pos).unit_id.clone(), score))
        .collect();
    Ok(into_run(scored, &query.topic_id, params.top_k, run_tag))
}

/// Sums passage scores weighted by the share of query relations each
/// passage holds. `parts` are `(|R_p ∩ R_q|, BM25(p, q))` pairs.
pub fn weighted_passage_sum(parts: &[(usize, f64)], query_relations: usize) -> f64 {
    if query_relations == 0 {
        return 0.0;
    }
    parts
        .iter()
        .map(|&(shared, score)| shared as f64 / query_relations as f64 * score)
        .sum()
}

/// Relation-weighted passage aggregation over a RELATION passage index.
/// Returns [`TopicRun::Na`] when the query has no relations.
pub fn score_passage_weighted(
    query: &QueryAnalysis,
    passage_index: &InvertedIndex,
    params: &RankingParams,
    run_tag: &str,
) -> Result<TopicRun> {
    params.validate()?;
    if passage_index.space() != TermSpace::Relation || passage_index.granularity() != Granularity::Passage {
        return Err(Error::Parameter(
            "passage weighting needs a RELATION passage index".into(),
        ));
    }
    if query.relation_set.is_empty() {
        return Ok(TopicRun::Na);
    }
    if passage_index.n_units() == 0 {
        return Err(Error::EmptyIndex);
    }
    let r_q: BTreeSet<&str> = query.relation_set.iter().map(String::as_str).collect();
    // Every term of R_q present in a passage contributes one posting, so the
    // hit count is |R_p ∩ R_q|.
    let per_passage: BTreeMap<u32, (u32, f64)> = accumulate(&r_q, passage_index, params).into_iter().collect();
    let mut per_doc: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for (pos, (shared, bm25)) in per_passage {
        per_doc
            .entry(&passage_index.unit(pos).parent_doc_id)
            .or_default()
            .push((shared as usize, bm25));
    }
    let scored = per_doc
        .into_iter()
        .map(|(d, parts)| (d.to_string(), weighted_passage_sum(&parts, r_q.len())))
        .collect();
    Ok(TopicRun::Ranked(into_run(scored, &query.topic_id, params.top_k, run_tag)))
}

/// Scores a topic with whichever method the index calls for. RELATION
/// rankings of a topic without relations are NA at either granularity.
pub fn run_topic(
    query: &QueryAnalysis,
    index: &InvertedIndex,
    params: &RankingParams,
    run_tag: &str,
) -> Result<TopicRun> {
    match (index.space(), index.granularity()) {
        (TermSpace::Relation, Granularity::Passage) => {
            score_passage_weighted(query, index, params, run_tag)
        }
        (TermSpace::Relation, Granularity::Doc) if query.relation_set.is_empty() => Ok(TopicRun::Na),
        (_, Granularity::Doc) => Ok(TopicRun::Ranked(rank_documents(query, index, params, run_tag)?)),
        (space, Granularity::Passage) => Err(Error::Parameter(format!(
            "passage ranking is defined for RELATION indexes only, not {space}"
        ))),
    }
}
