//! Dictionary entity linking: greedy longest-match of token n-grams against
//! the synonym strings of a knowledge base.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::textproc::{tokenize, Normalizer, Sentence};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConceptMention {
    pub text_id: String,
    pub sentence_index: usize,
    /// Inclusive token range within the sentence.
    pub token_start: usize,
    pub token_end: usize,
    pub cui: String,
    /// Surface tokens of the span joined by single spaces.
    pub matched_string: String,
}

#[derive(Debug)]
pub struct Lexicon {
    entries: HashMap<String, BTreeSet<String>>,
    max_phrase_len: usize,
    normalizer: Normalizer,
}

impl Lexicon {
    /// Indexes every synonym of every concept under its normalized token
    /// sequence. The normalizer must be the one used on the text being
    /// linked.
    pub fn build(kb: &KnowledgeBase, normalizer: Normalizer) -> Lexicon {
        let mut entries: HashMap<String, BTreeSet<String>> = HashMap::new();
        let mut max_phrase_len = 0;
        for concept in kb.concepts() {
            for synonym in &concept.synonyms {
                let tokens = tokenize(synonym);
                if tokens.is_empty() {
                    continue;
                }
                max_phrase_len = max_phrase_len.max(tokens.len());
                let key = tokens
                    .iter()
                    .map(|t| normalizer.match_form(&t.normalized))
                    .collect::<Vec<_>>()
                    .join(" ");
                entries.entry(key).or_default().insert(concept.cui.clone());
            }
        }
        Lexicon {
            entries,
            max_phrase_len,
            normalizer,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_phrase_len(&self) -> usize {
        self.max_phrase_len
    }

    pub fn get(&self, key: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    /// Lexicon key for a phrase, normalized the same way as linked text.
    pub fn key_for(&self, phrase: &str) -> String {
        tokenize(phrase)
            .iter()
            .map(|t| self.normalizer.match_form(&t.normalized))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Links one sentence. At each position the longest matching n-gram
    /// wins and scanning resumes after it; an ambiguous key yields one
    /// mention per CUI over the same span.
    pub fn link(&self, text_id: &str, sentence: &Sentence) -> Vec<ConceptMention> {
        let forms: Vec<String> = sentence
            .tokens
            .iter()
            .map(|t| self.normalizer.match_form(&t.normalized).into_owned())
            .collect();
        let mut mentions = Vec::new();
        let mut i = 0;
        while i < forms.len() {
            let longest = self.max_phrase_len.min(forms.len() - i);
            let hit = (1..=longest).rev().find_map(|n| {
                let key = forms[i..i + n].join(" ");
                self.entries.get(&key).map(|cuis| (n, cuis))
            });
            let Some((n, cuis)) = hit else {
                i += 1;
                continue;
            };
            let matched_string = sentence.tokens[i..i + n]
                .iter()
                .map(|t| t.surface.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            for cui in cuis {
                mentions.push(ConceptMention {
                    text_id: text_id.to_string(),
                    sentence_index: sentence.index,
                    token_start: i,
                    token_end: i + n - 1,
                    cui: cui.clone(),
                    matched_string: matched_string.clone(),
                });
            }
            i += n;
        }
        mentions
    }
}

/// Writes mentions as tab-separated lines:
/// `text_id  sentence_index  cui  token_start  token_end  matched_string`.
///
/// The first two columns are shared with the relation annotation format.
pub fn write_mentions<W: Write>(mentions: &[ConceptMention], mut writer: W) -> Result<()> {
    for m in mentions {
        writeln!(
            writer,
            "{}\t{}\t{}\t{}\t{}\t{}",
            m.text_id, m.sentence_index, m.cui, m.token_start, m.token_end, m.matched_string
        )?;
    }
    Ok(())
}

pub fn read_mentions<R: Read>(mut reader: R) -> Result<Vec<ConceptMention>> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let text = String::from_utf8_lossy(&bytes);
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(Error::malformed(
                "mentions",
                line_no,
                format!("expected 6 tab-separated fields, found {}", cols.len()),
            ));
        }
        let number = |i: usize, name: &str| -> Result<usize> {
            cols[i].parse().map_err(|_| {
                Error::malformed("mentions", line_no, format!("{name} `{}` is not an integer", cols[i]))
            })
        };
        let sentence_index = number(1, "sentence_index")?;
        let token_start = number(3, "token_start")?;
        let token_end = number(4, "token_end")?;
        if cols[0].is_empty() || cols[2].is_empty() {
            return Err(Error::malformed("mentions", line_no, "empty text_id or cui"));
        }
        if token_start > token_end {
            return Err(Error::malformed("mentions", line_no, "token_start > token_end"));
        }
        out.push(ConceptMention {
            text_id: cols[0].to_string(),
            sentence_index,
            token_start,
            token_end,
            cui: cols[2].to_string(),
            matched_string: cols[5].to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::{split_sentences, TextOptions};
    use proptest::prelude::*;

    fn fixture_kb() -> KnowledgeBase {
        KnowledgeBase::from_strs(
            include_str!("../fixtures/kb_concepts.txt"),
            include_str!("../fixtures/kb_relations.txt"),
        )
        .unwrap()
    }

    fn plain() -> Normalizer {
        Normalizer::new(TextOptions::default())
    }

    #[test]
    fn synonyms_become_keys() {
        let kb = KnowledgeBase::from_strs(
            "C1|heart attack|P\nC1|myocardial infarction|S\nCa|cold|P\nCb|cold|P\n",
            "",
        )
        .unwrap();
        let lex = Lexicon::build(&kb, plain());
        assert_eq!(lex.len(), 3);
        assert_eq!(lex.get("heart attack").unwrap().len(), 1);
        assert_eq!(lex.get("myocardial infarction").unwrap().len(), 1);
        let cold: Vec<_> = lex.get("cold").unwrap().iter().cloned().collect();
        assert_eq!(cold, ["Ca", "Cb"]);
        assert_eq!(lex.max_phrase_len(), 2);
    }

    #[test]
    fn fixture_lexicon_has_23_keys() {
        let lex = Lexicon::build(&fixture_kb(), plain());
        assert_eq!(lex.len(), 23);
        assert_eq!(lex.max_phrase_len(), 3);
    }

    #[test]
    fn longest_match_wins() {
        let kb = KnowledgeBase::from_strs("C1|heart|P\nC2|heart attack|P\nC3|aspirin|P\n", "")
            .unwrap();
        let lex = Lexicon::build(&kb, plain());
        let s = Sentence::whole(0, "heart attack treated with aspirin");
        let m = lex.link("T", &s);
        let found: Vec<_> = m.iter().map(|m| m.matched_string.as_str()).collect();
        assert_eq!(found, ["heart attack", "aspirin"]);
        assert_eq!((m[0].token_start, m[0].token_end), (0, 1));
        assert!(lex.link("T", &Sentence::whole(0, "nothing relevant")).is_empty());
    }

    // Brute force: enumerate every n-gram, keep those in the lexicon, then
    // resolve overlaps by leftmost start and, among equal starts, length.
    fn brute_force_spans(lex: &Lexicon, s: &Sentence) -> Vec<(usize, usize)> {
        let words: Vec<&str> = s.tokens.iter().map(|t| t.normalized.as_str()).collect();
        let mut candidates = Vec::new();
        for start in 0..words.len() {
            for end in start..words.len() {
                if lex.get(&words[start..=end].join(" ")).is_some() {
                    candidates.push((start, end));
                }
            }
        }
        candidates.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut chosen: Vec<(usize, usize)> = Vec::new();
        for (s0, e0) in candidates {
            if chosen.last().is_none_or(|&(_, e)| s0 > e) {
                chosen.push((s0, e0));
            }
        }
        chosen
    }

    #[test]
    fn fixture_doc3_sentence0_has_three_mentions() {
        let kb = fixture_kb();
        let lex = Lexicon::build(&kb, plain());
        let docs = crate::corpus::parse_ohsumed_str(include_str!("../fixtures/corpus.ohsumed"))
            .unwrap();
        let title = split_sentences(&docs[2].title);
        let mentions = lex.link(&docs[2].doc_id, &title[0]);
        let spans: Vec<_> = mentions.iter().map(|m| (m.token_start, m.token_end)).collect();
        assert_eq!(spans, brute_force_spans(&lex, &title[0]));
        assert_eq!(mentions.len(), 3);
        let cuis: Vec<_> = mentions.iter().map(|m| m.cui.as_str()).collect();
        assert_eq!(cuis, ["C0018802", "C0027051", "C0001645"]);
    }

    #[test]
    fn ambiguous_key_yields_all_cuis() {
        let lex = Lexicon::build(&fixture_kb(), plain());
        let m = lex.link("q", &Sentence::whole(0, "angina at rest"));
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].token_start, m[1].token_start);
        assert_eq!(m[0].token_end, m[1].token_end);
        assert_ne!(m[0].cui, m[1].cui);
    }

    #[test]
    fn stemming_applies_to_both_sides() {
        let kb = fixture_kb();
        let plain = Lexicon::build(&kb, plain());
        let stemmed = Lexicon::build(
            &kb,
            Normalizer::new(TextOptions {
                stemming: true,
                stopwords: false,
            }),
        );
        let s = Sentence::whole(0, "beta-blockers for hypertension");
        assert_eq!(plain.link("x", &s).len(), 1);
        assert_eq!(stemmed.link("x", &s).len(), 2);
    }

    #[test]
    fn mention_file_round_trip() {
        let lex = Lexicon::build(&fixture_kb(), plain());
        let m = lex.link("d", &Sentence::whole(3, "Aspirin after a heart attack and angina"));
        let mut buf = Vec::new();
        write_mentions(&m, &mut buf).unwrap();
        assert_eq!(read_mentions(&buf[..]).unwrap(), m);
        assert!(read_mentions(&b"d\tx\tC1\t0\t0\ta\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn mentions_do_not_overlap_and_match_keys(
            words in prop::collection::vec(
                prop::sample::select(vec![
                    "heart", "attack", "failure", "congestive", "aspirin", "angina",
                    "pectoris", "the", "with", "high", "blood", "pressure", "stroke",
                ]),
                0..16,
            )
        ) {
            let lex = Lexicon::build(&fixture_kb(), plain());
            let s = Sentence::whole(0, &words.join(" "));
            let m = lex.link("t", &s);
            for pair in m.windows(2) {
                let same_span = pair[0].token_start == pair[1].token_start
                    && pair[0].token_end == pair[1].token_end;
                prop_assert!(same_span || pair[0].token_end < pair[1].token_start);
            }
            for mention in &m {
                let key = lex.key_for(&mention.matched_string);
                prop_assert!(lex.get(&key).is_some_and(|c| c.contains(&mention.cui)));
            }
            let spans: Vec<_> = m.iter().map(|m| (m.token_start, m.token_end)).collect::<BTreeSet<_>>().into_iter().collect();
            prop_assert_eq!(spans, brute_force_spans(&lex, &s));
            prop_assert_eq!(lex.link("t", &s), m);
        }
    }
}
