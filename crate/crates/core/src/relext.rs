//! Sentence-level relation extraction and the annotation file format.
//!
//! The rule-based extractor asserts every knowledge-base relation between
//! any two distinct concepts linked in the same sentence, whether or not
//! the sentence states it. Learned extractors run out of process and hand
//! their output over through the annotation file:
//!
//! ```text
//! text_id <TAB> sentence_index <TAB> subject_cui <TAB> predicate <TAB> object_cui <TAB> source <TAB> confidence
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::linker::ConceptMention;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    Rule,
    Learned,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Rule => "rule",
            Source::Learned => "learned",
        })
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "rule" => Ok(Source::Rule),
            "learned" => Ok(Source::Learned),
            other => Err(format!("unknown source `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationInstance {
    pub subject_cui: String,
    pub predicate: String,
    pub object_cui: String,
    pub text_id: String,
    pub sentence_index: usize,
    pub source: Source,
    pub confidence: f64,
}

impl RelationInstance {
    pub fn token(&self) -> RelationToken {
        relation_token(self)
    }
}

/// Canonical BoR term `subject_cui|predicate|object_cui`, direction kept.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationToken(String);

impl RelationToken {
    pub fn new(subject: &str, predicate: &str, object: &str) -> Result<RelationToken> {
        let parts = [subject, predicate, object];
        if parts.iter().any(|p| p.is_empty() || p.contains('|')) {
            return Err(Error::Parameter(format!(
                "relation token parts must be non-empty and pipe-free: {parts:?}"
            )));
        }
        Ok(RelationToken(parts.join("|")))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for RelationToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for RelationToken {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('|').collect();
        match parts[..] {
            [subject, predicate, object] => RelationToken::new(subject, predicate, object),
            _ => Err(Error::Parameter(format!("`{s}` is not subject|predicate|object"))),
        }
    }
}

pub fn relation_token(instance: &RelationInstance) -> RelationToken {
    RelationToken(format!(
        "{}|{}|{}",
        instance.subject_cui, instance.predicate, instance.object_cui
    ))
}

/// Rule-based extraction over the mentions of a single sentence.
///
/// Every unordered pair of distinct CUIs is looked up once; repeated
/// mentions of a CUI do not repeat its relations. Output order follows the
/// sorted CUI pairs, then the knowledge base's (predicate, subject) order.
pub fn extract_rule_based(mentions: &[ConceptMention], kb: &KnowledgeBase) -> Vec<RelationInstance> {
    let Some(first) = mentions.first() else {
        return Vec::new();
    };
    debug_assert!(mentions
        .iter()
        .all(|m| m.text_id == first.text_id && m.sentence_index == first.sentence_index));
    let cuis: Vec<&str> = mentions
        .iter()
        .map(|m| m.cui.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut out = Vec::new();
    for (i, a) in cuis.iter().enumerate() {
        for b in &cuis[i + 1..] {
            for rel in kb.relations_between(a, b) {
                out.push(RelationInstance {
                    subject_cui: rel.subject_cui.clone(),
                    predicate: rel.predicate.clone(),
                    object_cui: rel.object_cui.clone(),
                    text_id: first.text_id.clone(),
                    sentence_index: first.sentence_index,
                    source: Source::Rule,
                    confidence: 1.0,
                });
            }
        }
    }
    out
}

pub fn write_annotations<W: Write>(instances: &[RelationInstance], mut writer: W) -> Result<()> {
    for r in instances {
        writeln!(
            writer,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.text_id, r.sentence_index, r.subject_cui, r.predicate, r.object_cui, r.source, r.confidence
        )?;
    }
    Ok(())
}

/// Reads and validates an annotation file. Every failure names the line
/// and the offending field.
pub fn read_annotations<R: Read>(mut reader: R) -> Result<Vec<RelationInstance>> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let text = String::from_utf8_lossy(&bytes);
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |field: &str, why: String| {
            Error::malformed("annotations", line_no, format!("field `{field}`: {why}"))
        };
        let cols: Vec<&str> = line.split('\t').collect();
        const FIELDS: [&str; 7] = [
            "text_id",
            "sentence_index",
            "subject_cui",
            "predicate",
            "object_cui",
            "source",
            "confidence",
        ];
        if cols.len() != FIELDS.len() {
            let missing = FIELDS.get(cols.len()).copied().unwrap_or("<extra>");
            return Err(bad(
                missing,
                format!("expected 7 tab-separated fields, found {}", cols.len()),
            ));
        }
        for (name, value) in FIELDS.iter().zip(&cols) {
            if value.trim().is_empty() {
                return Err(bad(name, "empty".into()));
            }
        }
        for (name, value) in [("subject_cui", cols[2]), ("predicate", cols[3]), ("object_cui", cols[4])] {
            if value.contains('|') || value.contains(char::is_whitespace) {
                return Err(bad(name, format!("`{value}` contains a pipe or whitespace")));
            }
        }
        let sentence_index = cols[1]
            .parse::<usize>()
            .map_err(|_| bad("sentence_index", format!("`{}` is not a non-negative integer", cols[1])))?;
        if cols[2] == cols[4] {
            return Err(bad("object_cui", "subject and object are the same concept".into()));
        }
        let source: Source = cols[5].parse().map_err(|e| bad("source", e))?;
        let confidence = cols[6]
            .parse::<f64>()
            .map_err(|_| bad("confidence", format!("`{}` is not a number", cols[6])))?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(bad("confidence", format!("{confidence} outside [0, 1]")));
        }
        if source == Source::Rule && confidence != 1.0 {
            return Err(bad("confidence", "rule-based instances must have confidence 1".into()));
        }
        out.push(RelationInstance {
            subject_cui: cols[2].to_string(),
            predicate: cols[3].to_string(),
            object_cui: cols[4].to_string(),
            text_id: cols[0].to_string(),
            sentence_index,
            source,
            confidence,
        });
    }
    Ok(out)
}
