//! Tokenization, sentence splitting and passage segmentation.
//!
//! Offsets are character (not byte) positions into the source text; `end` is
//! exclusive.

use std::borrow::Cow;
use std::collections::HashSet;
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};

use crate::error::{Error, Result};

const BUNDLED_ABBREVIATIONS: &str = include_str!("../resources/abbreviations.txt");
const BUNDLED_STOPWORDS: &str = include_str!("../resources/stopwords.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub tokens: Vec<Token>,
}

impl Sentence {
    /// Builds a sentence spanning all of `text`, bypassing the splitter.
    pub fn whole(index: usize, text: &str) -> Sentence {
        let tokens = tokenize(text);
        Sentence {
            index,
            start: 0,
            end: text.chars().count(),
            tokens,
        }
    }

    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        char_slice(source, self.start, self.end)
    }
}

/// A block of consecutive sentences of one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub doc_id: String,
    pub passage_id: String,
    /// Inclusive sentence-index range.
    pub sentence_start: usize,
    pub sentence_end: usize,
}

impl Passage {
    pub fn contains(&self, sentence_index: usize) -> bool {
        (self.sentence_start..=self.sentence_end).contains(&sentence_index)
    }
}

fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let from = indices.nth(start).unwrap_or(text.len());
    let to = if end > start {
        indices.nth(end - start - 1).unwrap_or(text.len())
    } else {
        from
    };
    &text[from..to]
}

fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}')
}

/// Splits `text` into maximal alphanumeric runs. A hyphen or apostrophe is
/// kept when it sits between two alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() {
            let c = chars[i];
            let joins = is_joiner(c) && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            if !(c.is_alphanumeric() || joins) {
                break;
            }
            i += 1;
        }
        let surface: String = chars[start..i].iter().collect();
        let normalized = surface.to_lowercase();
        tokens.push(Token {
            surface,
            normalized,
            start,
            end: i,
        });
    }
    tokens
}

/// Rule-based sentence splitter.
///
/// A boundary falls after `.`, `!` or `?` when it is followed by whitespace
/// and then an uppercase letter (or the end of the text). A period does not
/// end a sentence when the word it terminates is a single uppercase letter
/// or a listed abbreviation.
#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    abbreviations: HashSet<String>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        SentenceSplitter::from_list(BUNDLED_ABBREVIATIONS)
    }
}

impl SentenceSplitter {
    /// One abbreviation per line, without its final period. `#` lines are
    /// comments.
    pub fn from_list(list: &str) -> SentenceSplitter {
        let abbreviations = list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.trim_end_matches('.').to_lowercase())
            .collect();
        SentenceSplitter { abbreviations }
    }

    fn guarded(&self, chars: &[char], period: usize) -> bool {
        let mut from = period;
        while from > 0 && !chars[from - 1].is_whitespace() {
            from -= 1;
        }
        let word: String = chars[from..period]
            .iter()
            .skip_while(|c| !c.is_alphanumeric())
            .collect();
        let mut letters = word.chars();
        if let (Some(first), None) = (letters.next(), letters.next()) {
            if first.is_uppercase() {
                return true;
            }
        }
        self.abbreviations.contains(&word.to_lowercase())
    }

    pub fn split(&self, text: &str) -> Vec<Sentence> {
        let chars: Vec<char> = text.chars().collect();
        let mut bounds = Vec::new();
        let mut seg_start = 0;
        for i in 0..chars.len() {
            let c = chars[i];
            if !matches!(c, '.' | '!' | '?') {
                continue;
            }
            let Some(next) = chars.get(i + 1) else {
                continue;
            };
            if !next.is_whitespace() {
                continue;
            }
            let after = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            let opens_sentence = match after {
                None => true,
                Some(c) => c.is_uppercase(),
            };
            if !opens_sentence || (c == '.' && self.guarded(&chars, i)) {
                continue;
            }
            bounds.push((seg_start, i + 1));
            seg_start = i + 1;
        }
        bounds.push((seg_start, chars.len()));

        let tokens = tokenize(text);
        let mut tokens = tokens.into_iter().peekable();
        let mut sentences = Vec::new();
        for (from, to) in bounds {
            let mut start = from;
            while start < to && chars[start].is_whitespace() {
                start += 1;
            }
            let mut end = to;
            while end > start && chars[end - 1].is_whitespace() {
                end -= 1;
            }
            let mut own = Vec::new();
            while let Some(tok) = tokens.next_if(|t| t.start < to) {
                own.push(tok);
            }
            if own.is_empty() {
                continue;
            }
            sentences.push(Sentence {
                index: sentences.len(),
                start,
                end,
                tokens: own,
            });
        }
        sentences
    }
}

/// Splits with the bundled abbreviation list.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    static DEFAULT: OnceLock<SentenceSplitter> = OnceLock::new();
    DEFAULT.get_or_init(SentenceSplitter::default).split(text)
}

/// Groups sentences into consecutive disjoint blocks of `passage_len`.
/// The last block may be shorter.
pub fn segment_passages(
    doc_id: &str,
    sentences: &[Sentence],
    passage_len: usize,
) -> Result<Vec<Passage>> {
    if passage_len == 0 {
        return Err(Error::Parameter("passage length must be at least 1".into()));
    }
    Ok(sentences
        .chunks(passage_len)
        .enumerate()
        .map(|(block, chunk)| Passage {
            doc_id: doc_id.to_string(),
            passage_id: format!("{doc_id}#{block}"),
            sentence_start: chunk[0].index,
            sentence_end: chunk[chunk.len() - 1].index,
        })
        .collect())
}

/// Optional term conditioning applied on top of lowercasing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TextOptions {
    pub stemming: bool,
    pub stopwords: bool,
}

/// Maps normalized tokens to index terms according to [`TextOptions`].
pub struct Normalizer {
    options: TextOptions,
    stemmer: Option<Stemmer>,
    stopwords: HashSet<String>,
}

impl std::fmt::Debug for Normalizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Normalizer").field("options", &self.options).finish()
    }
}

impl Normalizer {
    pub fn new(options: TextOptions) -> Normalizer {
        let stopwords = if options.stopwords {
            BUNDLED_STOPWORDS
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect()
        } else {
            HashSet::new()
        };
        Normalizer {
            options,
            stemmer: options.stemming.then(|| Stemmer::create(Algorithm::English)),
            stopwords,
        }
    }

    pub fn options(&self) -> TextOptions {
        self.options
    }

    /// Stemmed form used wherever two strings must match (lexicon keys and
    /// text n-grams). Stopwords are not removed here.
    pub fn match_form<'a>(&self, normalized: &'a str) -> Cow<'a, str> {
        match &self.stemmer {
            Some(stemmer) => Cow::Owned(stemmer.stem(normalized).into_owned()),
            None => Cow::Borrowed(normalized),
        }
    }

    /// Bag-of-words term for a token, or `None` for a removed stopword.
    pub fn word_term<'a>(&self, normalized: &'a str) -> Option<Cow<'a, str>> {
        if self.stopwords.contains(normalized) {
            return None;
        }
        Some(self.match_form(normalized))
    }
}
