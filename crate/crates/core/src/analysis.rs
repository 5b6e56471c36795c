//! Per-text analysis shared by documents and queries: sentence layout,
//! linked concepts, extracted relations, and the term multisets fed to the
//! indexes.
//!
//! A document's sentence sequence is its title's sentences followed by its
//! abstract's. A topic is always exactly two sentences: title, then
//! description.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::corpus::{Document, Topic};
use crate::error::{Error, Result};
use crate::index::{Granularity, TermSpace, UnitTerms};
use crate::kb::KnowledgeBase;
use crate::linker::{ConceptMention, Lexicon};
use crate::ranker::QueryAnalysis;
use crate::relext::{extract_rule_based, RelationInstance};
use crate::textproc::{segment_passages, split_sentences, Normalizer, Sentence};

/// A text and its sentences. Offsets index into `text`, which is the title
/// and body joined by a newline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalyzedText {
    pub text_id: String,
    pub text: String,
    pub sentences: Vec<Sentence>,
}

fn shift(mut sentences: Vec<Sentence>, index_offset: usize, char_offset: usize) -> Vec<Sentence> {
    for s in &mut sentences {
        s.index += index_offset;
        s.start += char_offset;
        s.end += char_offset;
        for t in &mut s.tokens {
            t.start += char_offset;
            t.end += char_offset;
        }
    }
    sentences
}

pub fn analyze_document(doc: &Document) -> AnalyzedText {
    let title = split_sentences(&doc.title);
    let body_offset = doc.title.chars().count() + 1;
    let body = shift(split_sentences(&doc.abstract_text), title.len(), body_offset);
    let mut sentences = title;
    sentences.extend(body);
    AnalyzedText {
        text_id: doc.doc_id.clone(),
        text: format!("{}\n{}", doc.title, doc.abstract_text),
        sentences,
    }
}

pub fn analyze_topic(topic: &Topic) -> AnalyzedText {
    let title = Sentence::whole(0, &topic.title);
    let desc = shift(
        vec![Sentence::whole(1, &topic.description)],
        0,
        topic.title.chars().count() + 1,
    );
    AnalyzedText {
        text_id: topic.topic_id.clone(),
        text: format!("{}\n{}", topic.title, topic.description),
        sentences: std::iter::once(title).chain(desc).collect(),
    }
}

pub fn analyze_documents(docs: &[Document]) -> Vec<AnalyzedText> {
    docs.par_iter().map(analyze_document).collect()
}

pub fn link_text(text: &AnalyzedText, lexicon: &Lexicon) -> Vec<ConceptMention> {
    text.sentences
        .iter()
        .flat_map(|s| lexicon.link(&text.text_id, s))
        .collect()
}

/// Rule-based extraction for every sentence of a text, given that text's
/// mentions in sentence order.
pub fn extract_text(mentions: &[ConceptMention], kb: &KnowledgeBase) -> Vec<RelationInstance> {
    mentions
        .chunk_by(|a, b| a.sentence_index == b.sentence_index)
        .flat_map(|group| extract_rule_based(group, kb))
        .collect()
}

/// Mentions and relation instances grouped by text id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Annotations {
    pub mentions: BTreeMap<String, Vec<ConceptMention>>,
    pub relations: BTreeMap<String, Vec<RelationInstance>>,
}

impl Annotations {
    pub fn link_all(texts: &[AnalyzedText], lexicon: &Lexicon) -> BTreeMap<String, Vec<ConceptMention>> {
        texts
            .par_iter()
            .map(|t| (t.text_id.clone(), link_text(t, lexicon)))
            .collect()
    }

    pub fn extract_all(
        mentions: &BTreeMap<String, Vec<ConceptMention>>,
        kb: &KnowledgeBase,
    ) -> BTreeMap<String, Vec<RelationInstance>> {
        mentions
            .par_iter()
            .map(|(id, m)| (id.clone(), extract_text(m, kb)))
            .collect()
    }

    pub fn from_lists(mentions: Vec<ConceptMention>, relations: Vec<RelationInstance>) -> Annotations {
        let mut out = Annotations::default();
        for m in mentions {
            out.mentions.entry(m.text_id.clone()).or_default().push(m);
        }
        for r in relations {
            out.relations.entry(r.text_id.clone()).or_default().push(r);
        }
        for list in out.mentions.values_mut() {
            list.sort_by_key(|m| (m.sentence_index, m.token_start));
        }
        for list in out.relations.values_mut() {
            list.sort_by_key(|r| r.sentence_index);
        }
        out
    }

    pub fn all_mentions(&self) -> impl Iterator<Item = &ConceptMention> {
        self.mentions.values().flatten()
    }

    pub fn all_relations(&self) -> impl Iterator<Item = &RelationInstance> {
        self.relations.values().flatten()
    }
}

/// Terms contributed by each sentence of `text` in the given space.
///
/// WORD: index terms of the tokens. CONCEPT: one CUI per mention.
/// RELATION: distinct relation tokens of the sentence, so a token's
/// frequency in any unit counts the sentences that yield it.
pub fn sentence_terms(
    text: &AnalyzedText,
    space: TermSpace,
    normalizer: &Normalizer,
    annotations: &Annotations,
) -> Result<Vec<Vec<String>>> {
    let n = text.sentences.len();
    let mut per_sentence = vec![Vec::new(); n];
    let out_of_range = |idx: usize| {
        Error::Parameter(format!(
            "annotation for `{}` references sentence {idx}, but the text has {n} sentences",
            text.text_id
        ))
    };
    match space {
        TermSpace::Word => {
            for (slot, s) in per_sentence.iter_mut().zip(&text.sentences) {
                *slot = s
                    .tokens
                    .iter()
                    .filter_map(|t| normalizer.word_term(&t.normalized))
                    .map(|t| t.into_owned())
                    .collect();
            }
        }
        TermSpace::Concept => {
            for m in annotations.mentions.get(&text.text_id).into_iter().flatten() {
                per_sentence
                    .get_mut(m.sentence_index)
                    .ok_or_else(|| out_of_range(m.sentence_index))?
                    .push(m.cui.clone());
            }
        }
        TermSpace::Relation => {
            let mut distinct: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n];
            for r in annotations.relations.get(&text.text_id).into_iter().flatten() {
                distinct
                    .get_mut(r.sentence_index)
                    .ok_or_else(|| out_of_range(r.sentence_index))?
                    .insert(r.token().into_string());
            }
            for (slot, set) in per_sentence.iter_mut().zip(distinct) {
                *slot = set.into_iter().collect();
            }
        }
    }
    Ok(per_sentence)
}

/// Index units for a collection in one term space and granularity.
/// Passage units use disjoint blocks of `passage_len` sentences.
pub fn index_units(
    texts: &[AnalyzedText],
    space: TermSpace,
    granularity: Granularity,
    passage_len: usize,
    normalizer: &Normalizer,
    annotations: &Annotations,
) -> Result<Vec<UnitTerms>> {
    if passage_len == 0 {
        return Err(Error::Parameter("passage length must be at least 1".into()));
    }
    let per_text: Vec<Vec<UnitTerms>> = texts
        .par_iter()
        .map(|text| -> Result<Vec<UnitTerms>> {
            let terms = sentence_terms(text, space, normalizer, annotations)?;
            Ok(match granularity {
                Granularity::Doc => vec![UnitTerms {
                    unit_id: text.text_id.clone(),
                    parent_doc_id: text.text_id.clone(),
                    terms: terms.into_iter().flatten().collect(),
                }],
                Granularity::Passage => segment_passages(&text.text_id, &text.sentences, passage_len)?
                    .into_iter()
                    .map(|p| UnitTerms {
                        unit_id: p.passage_id,
                        parent_doc_id: text.text_id.clone(),
                        terms: terms[p.sentence_start..=p.sentence_end]
                            .iter()
                            .flatten()
                            .cloned()
                            .collect(),
                    })
                    .collect(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(per_text.into_iter().flatten().collect())
}

/// Query-side term multisets in all three spaces.
pub fn query_analysis(
    topic: &AnalyzedText,
    normalizer: &Normalizer,
    annotations: &Annotations,
) -> Result<QueryAnalysis> {
    let flat = |space| -> Result<Vec<String>> {
        Ok(sentence_terms(topic, space, normalizer, annotations)?
            .into_iter()
            .flatten()
            .collect())
    };
    Ok(QueryAnalysis::new(
        &topic.text_id,
        flat(TermSpace::Word)?,
        flat(TermSpace::Concept)?,
        flat(TermSpace::Relation)?,
    ))
}
