//! In-memory knowledge-base snapshot: a concept lexicon plus directed
//! relation triples.
//!
//! Snapshot files are pipe-delimited UTF-8 with `#` comment lines:
//!
//! * concepts: `CUI|STRING|P` (preferred name) or `CUI|STRING|S` (synonym),
//!   one line per string;
//! * relations: `SUBJECT_CUI|PREDICATE|OBJECT_CUI`, one line per triple.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Read;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Concept {
    pub cui: String,
    pub preferred_name: String,
    /// Every string for the concept, preferred name included, in file order.
    pub synonyms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KbRelation {
    pub subject_cui: String,
    pub predicate: String,
    pub object_cui: String,
}

#[derive(Debug, Default)]
pub struct KnowledgeBase {
    concepts: BTreeMap<String, Concept>,
    relations: Vec<KbRelation>,
    /// Unordered CUI pair (lexicographically smaller first) → relation ids,
    /// sorted by (predicate, subject).
    by_pair: HashMap<(String, String), Vec<usize>>,
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn read_text<R: Read>(mut reader: R) -> Result<String> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

impl KnowledgeBase {
    pub fn load<C: Read, R: Read>(concepts: C, relations: R) -> Result<KnowledgeBase> {
        let concepts = read_text(concepts)?;
        let relations = read_text(relations)?;
        KnowledgeBase::from_strs(&concepts, &relations)
    }

    pub fn from_strs(concepts: &str, relations: &str) -> Result<KnowledgeBase> {
        struct Partial {
            preferred: Option<String>,
            synonyms: Vec<String>,
        }
        let mut partial: BTreeMap<String, Partial> = BTreeMap::new();
        for (line, text) in data_lines(concepts) {
            let fields: Vec<&str> = text.split('|').map(str::trim).collect();
            let [cui, string, flag] = fields[..] else {
                return Err(Error::malformed(
                    "concepts",
                    line,
                    format!("expected CUI|STRING|FLAG, found `{text}`"),
                ));
            };
            if cui.is_empty() || string.is_empty() {
                return Err(Error::malformed("concepts", line, "empty CUI or string"));
            }
            let entry = partial.entry(cui.to_string()).or_insert(Partial {
                preferred: None,
                synonyms: Vec::new(),
            });
            match flag {
                "P" => {
                    if entry.preferred.is_some() {
                        return Err(Error::KnowledgeBase(format!(
                            "duplicate concept {cui}: second preferred name at line {line}"
                        )));
                    }
                    entry.preferred = Some(string.to_string());
                }
                "S" => {}
                other => {
                    return Err(Error::malformed(
                        "concepts",
                        line,
                        format!("flag must be P or S, found `{other}`"),
                    ))
                }
            }
            if !entry.synonyms.iter().any(|s| s == string) {
                entry.synonyms.push(string.to_string());
            }
        }
        let concepts: BTreeMap<String, Concept> = partial
            .into_iter()
            .map(|(cui, p)| {
                let preferred_name = p.preferred.unwrap_or_else(|| p.synonyms[0].clone());
                (
                    cui.clone(),
                    Concept {
                        cui,
                        preferred_name,
                        synonyms: p.synonyms,
                    },
                )
            })
            .collect();

        let mut kb = KnowledgeBase {
            concepts,
            ..Default::default()
        };
        let mut seen = HashSet::new();
        for (line, text) in data_lines(relations) {
            let fields: Vec<&str> = text.split('|').map(str::trim).collect();
            let [subject, predicate, object] = fields[..] else {
                return Err(Error::malformed(
                    "relations",
                    line,
                    format!("expected SUBJECT|PREDICATE|OBJECT, found `{text}`"),
                ));
            };
            if predicate.is_empty() || predicate.contains(char::is_whitespace) {
                return Err(Error::malformed(
                    "relations",
                    line,
                    format!("predicate `{predicate}` must be non-empty without whitespace"),
                ));
            }
            for cui in [subject, object] {
                if !kb.concepts.contains_key(cui) {
                    return Err(Error::KnowledgeBase(format!(
                        "relation {subject}|{predicate}|{object} (line {line}) references unknown concept `{cui}`"
                    )));
                }
            }
            if subject == object {
                return Err(Error::KnowledgeBase(format!(
                    "relation {subject}|{predicate}|{object} (line {line}) relates a concept to itself"
                )));
            }
            let rel = KbRelation {
                subject_cui: subject.to_string(),
                predicate: predicate.to_string(),
                object_cui: object.to_string(),
            };
            if seen.insert(rel.clone()) {
                kb.relations.push(rel);
            }
        }
        for (id, rel) in kb.relations.iter().enumerate() {
            kb.by_pair
                .entry(pair_key(&rel.subject_cui, &rel.object_cui))
                .or_default()
                .push(id);
        }
        let relations = &kb.relations;
        for ids in kb.by_pair.values_mut() {
            ids.sort_by(|&a, &b| {
                let (ra, rb) = (&relations[a], &relations[b]);
                ra.predicate
                    .cmp(&rb.predicate)
                    .then_with(|| ra.subject_cui.cmp(&rb.subject_cui))
            });
        }
        Ok(kb)
    }

    pub fn concept(&self, cui: &str) -> Option<&Concept> {
        self.concepts.get(cui)
    }

    /// Concepts in CUI order.
    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn relations(&self) -> &[KbRelation] {
        &self.relations
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    /// All stored triples linking `a` and `b` in either direction, each in
    /// its stored orientation, ordered by predicate then subject.
    pub fn relations_between(&self, a: &str, b: &str) -> Vec<&KbRelation> {
        if a == b {
            return Vec::new();
        }
        self.by_pair
            .get(&pair_key(a, b))
            .map(|ids| ids.iter().map(|&i| &self.relations[i]).collect())
            .unwrap_or_default()
    }

    /// Distinct predicates in sorted order.
    pub fn predicates(&self) -> Vec<&str> {
        let mut p: Vec<&str> = self.relations.iter().map(|r| r.predicate.as_str()).collect();
        p.sort_unstable();
        p.dedup();
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CONCEPTS: &str = include_str!("../fixtures/kb_concepts.txt");
    const RELATIONS: &str = include_str!("../fixtures/kb_relations.txt");

    fn fixture() -> KnowledgeBase {
        KnowledgeBase::from_strs(CONCEPTS, RELATIONS).unwrap()
    }

    #[test]
    fn fixture_sizes() {
        let kb = fixture();
        assert_eq!(kb.concept_count(), 10);
        assert_eq!(kb.relation_count(), 8);
        let mi = kb.concept("C0027051").unwrap();
        assert_eq!(mi.preferred_name, "myocardial infarction");
        assert_eq!(mi.synonyms.len(), 4);
    }

    #[test]
    fn empty_relations() {
        let kb = KnowledgeBase::from_strs(CONCEPTS, "").unwrap();
        assert_eq!(kb.relation_count(), 0);
        assert!(kb.relations_between("C0004057", "C0027051").is_empty());
    }

    #[test]
    fn unknown_cui_is_rejected() {
        let err = KnowledgeBase::from_strs("C1|a|P\n", "C1|treats|C999\n").unwrap_err();
        assert!(err.to_string().contains("C1|treats|C999"));
    }

    #[test]
    fn duplicate_concept_is_rejected() {
        let err = KnowledgeBase::from_strs("C1|a|P\nC1|b|P\n", "").unwrap_err();
        assert!(matches!(err, Error::KnowledgeBase(_)));
    }

    #[test]
    fn orientation_insensitive_lookup() {
        let kb = KnowledgeBase::from_strs("C1|a|P\nC2|b|P\n", "C1|treats|C2\n").unwrap();
        let found = kb.relations_between("C2", "C1");
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].subject_cui, "C1");
        assert!(kb.relations_between("C1", "C1").is_empty());
    }

    #[test]
    fn both_directions_returned() {
        let kb = fixture();
        let found = kb.relations_between("C0027051", "C0018802");
        // Brute-force scan of the relations fixture.
        let mut expected: Vec<&KbRelation> = kb
            .relations()
            .iter()
            .filter(|r| {
                (r.subject_cui == "C0027051" && r.object_cui == "C0018802")
                    || (r.subject_cui == "C0018802" && r.object_cui == "C0027051")
            })
            .collect();
        expected.sort_by(|a, b| (&a.predicate, &a.subject_cui).cmp(&(&b.predicate, &b.subject_cui)));
        assert_eq!(found, expected);
        assert_eq!(found.len(), 2);
        assert_eq!(found[0].predicate, "causes");
        assert_eq!(found[1].predicate, "complication_of");
    }

    proptest! {
        #[test]
        fn lookup_is_symmetric_and_verbatim(
            triples in prop::collection::vec((0u8..6, 0u8..3, 0u8..6), 0..20),
            a in 0u8..6,
            b in 0u8..6,
        ) {
            let concepts: String = (0..6).map(|i| format!("C{i}|n{i}|P\n")).collect();
            let relations: String = triples
                .iter()
                .filter(|(s, _, o)| s != o)
                .map(|(s, p, o)| format!("C{s}|p{p}|C{o}\n"))
                .collect();
            let kb = KnowledgeBase::from_strs(&concepts, &relations).unwrap();
            let (a, b) = (format!("C{a}"), format!("C{b}"));
            let mut ab: Vec<_> = kb.relations_between(&a, &b);
            let mut ba: Vec<_> = kb.relations_between(&b, &a);
            ab.sort();
            ba.sort();
            prop_assert_eq!(&ab, &ba);
            for rel in ab {
                let line = format!("{}|{}|{}", rel.subject_cui, rel.predicate, rel.object_cui);
                prop_assert!(relations.lines().any(|l| l == line));
            }
        }
    }
}
