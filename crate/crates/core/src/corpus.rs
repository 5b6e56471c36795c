//! Readers and writers for the OHSUMED collection files and TREC run files.
//!
//! All readers decode their input as UTF-8, replacing invalid byte sequences
//! with U+FFFD, so legacy MEDLINE dumps with stray bytes still parse.

use std::collections::HashSet;
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// One MEDLINE reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    /// MEDLINE unique identifier (`.U`).
    pub doc_id: String,
    /// Sequential record number (`.I`).
    pub seq_id: u64,
    pub title: String,
    /// Empty for title-only references.
    pub abstract_text: String,
    pub mesh_terms: Vec<String>,
    pub authors: String,
    pub source: String,
    pub pub_type: String,
}

/// A case-based query: a one-sentence case summary plus a one-sentence
/// information need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topic {
    pub topic_id: String,
    pub title: String,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Grade(u8);

impl Grade {
    pub const NOT_RELEVANT: Grade = Grade(0);
    pub const POSSIBLY: Grade = Grade(1);
    pub const DEFINITELY: Grade = Grade(2);

    pub fn new(value: u8) -> Option<Grade> {
        (value <= 2).then_some(Grade(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Maps the original OHSUMED judgment labels onto integer grades:
    /// definitely relevant → 2, possibly relevant → 1, anything else → 0.
    pub fn from_ohsumed_label(label: &str) -> Grade {
        match label.trim().to_ascii_lowercase().as_str() {
            "d" | "definitely" | "definitely relevant" => Grade::DEFINITELY,
            "p" | "possibly" | "possibly relevant" => Grade::POSSIBLY,
            _ => Grade::NOT_RELEVANT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QrelEntry {
    pub topic_id: String,
    pub doc_id: String,
    pub grade: Grade,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub topic_id: String,
    pub doc_id: String,
    pub rank: u32,
    pub score: f64,
    pub run_tag: String,
}

fn read_lossy<R: Read>(mut reader: R) -> Result<String> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    Ok(match String::from_utf8(bytes) {
        Ok(text) => text,
        Err(err) => String::from_utf8_lossy(err.as_bytes()).into_owned(),
    })
}

/// Returns the tag letter if `line` is an OHSUMED tag line (`.U`, `.T`, ...).
/// The `.I` line carries its record number on the same line.
fn tag_of(line: &str) -> Option<(char, &str)> {
    let mut chars = line.chars();
    if chars.next() != Some('.') {
        return None;
    }
    let tag = chars.next()?;
    if !tag.is_ascii_uppercase() {
        return None;
    }
    let rest = chars.as_str();
    if rest.is_empty() || (tag == 'I' && rest.starts_with(' ')) {
        Some((tag, rest.trim()))
    } else {
        None
    }
}

#[derive(Default)]
struct RecordBuilder {
    start_line: usize,
    seq_id: u64,
    fields: Vec<(char, String)>,
}

impl RecordBuilder {
    fn field(&self, tag: char) -> Option<&str> {
        self.fields
            .iter()
            .find(|(t, _)| *t == tag)
            .map(|(_, value)| value.as_str())
    }

    fn finish(self) -> Result<Document> {
        let required = |tag: char, name: &str| -> Result<String> {
            match self.field(tag) {
                Some(value) if !value.is_empty() => Ok(value.to_string()),
                _ => Err(Error::malformed(
                    "corpus",
                    self.start_line,
                    format!("record {} has no {name} (.{tag})", self.seq_id),
                )),
            }
        };
        let doc_id = required('U', "MEDLINE UI")?;
        let title = required('T', "title")?;
        let optional = |tag: char| self.field(tag).unwrap_or_default().to_string();
        let mesh_terms = self
            .field('M')
            .unwrap_or_default()
            .split(';')
            .map(str::trim)
            .filter(|term| !term.is_empty())
            .map(str::to_string)
            .collect();
        Ok(Document {
            doc_id,
            seq_id: self.seq_id,
            title,
            abstract_text: optional('W'),
            mesh_terms,
            authors: optional('A'),
            source: optional('S'),
            pub_type: optional('P'),
        })
    }
}

/// Parses the line-tagged OHSUMED reference format.
///
/// A record starts at `.I <seq>`; every other tag sits alone on its line and
/// its value occupies the following line(s) up to the next tag. Records must
/// carry `.U` and `.T`; all other fields default to empty.
pub fn parse_ohsumed_corpus<R: Read>(reader: R) -> Result<Vec<Document>> {
    let text = read_lossy(reader)?;
    parse_ohsumed_str(&text)
}

pub fn parse_ohsumed_str(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    let mut current: Option<RecordBuilder> = None;
    let mut open_tag: Option<char> = None;

    let mut flush = |record: RecordBuilder, docs: &mut Vec<Document>| -> Result<()> {
        let line = record.start_line;
        let doc = record.finish()?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::malformed(
                "corpus",
                line,
                format!("duplicate MEDLINE UI {}", doc.doc_id),
            ));
        }
        docs.push(doc);
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        match tag_of(line) {
            Some(('I', seq)) => {
                if let Some(record) = current.take() {
                    flush(record, &mut docs)?;
                }
                let seq_id = seq.parse().map_err(|_| {
                    Error::malformed("corpus", line_no, format!("bad record number `{seq}`"))
                })?;
                current = Some(RecordBuilder {
                    start_line: line_no,
                    seq_id,
                    fields: Vec::new(),
                });
                open_tag = None;
            }
            Some((tag, _)) => {
                let record = current.as_mut().ok_or_else(|| {
                    Error::malformed("corpus", line_no, format!("tag .{tag} outside a record"))
                })?;
                record.fields.push((tag, String::new()));
                open_tag = Some(tag);
            }
            None => {
                if line.trim().is_empty() {
                    continue;
                }
                let (Some(record), Some(_)) = (current.as_mut(), open_tag) else {
                    return Err(Error::malformed(
                        "corpus",
                        line_no,
                        "value line without a preceding tag",
                    ));
                };
                let (_, value) = record.fields.last_mut().expect("open tag has a field");
                if !value.is_empty() {
                    value.push(' ');
                }
                value.push_str(line.trim());
            }
        }
    }
    if let Some(record) = current.take() {
        flush(record, &mut docs)?;
    }
    Ok(docs)
}

/// Parses the OHSUMED topic format:
///
/// ```text
/// <top>
/// <num> Number: OHSU1
/// <title> 60 year old menopausal woman without hormone replacement therapy
/// <desc> Description:
/// Are there adverse effects on lipids when progesterone is given with estrogen
/// </top>
/// ```
pub fn parse_topics<R: Read>(reader: R) -> Result<Vec<Topic>> {
    let text = read_lossy(reader)?;
    parse_topics_str(&text)
}

pub fn parse_topics_str(text: &str) -> Result<Vec<Topic>> {
    #[derive(PartialEq)]
    enum Field {
        None,
        Title,
        Desc,
    }
    struct Partial {
        line: usize,
        id: Option<String>,
        title: String,
        desc: Option<String>,
    }

    let mut topics = Vec::new();
    let mut seen = HashSet::new();
    let mut current: Option<Partial> = None;
    let mut field = Field::None;

    let append = |buf: &mut String, value: &str| {
        let value = value.trim();
        if value.is_empty() {
            return;
        }
        if !buf.is_empty() {
            buf.push(' ');
        }
        buf.push_str(value);
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.starts_with("<top>") {
            if current.is_some() {
                return Err(Error::malformed("topics", line_no, "nested <top>"));
            }
            current = Some(Partial {
                line: line_no,
                id: None,
                title: String::new(),
                desc: None,
            });
            field = Field::None;
            continue;
        }
        if line.starts_with("</top>") {
            let Some(partial) = current.take() else {
                return Err(Error::malformed("topics", line_no, "</top> without <top>"));
            };
            let id = partial
                .id
                .filter(|id| !id.is_empty())
                .ok_or_else(|| Error::malformed("topics", partial.line, "topic has no <num>"))?;
            let description = partial
                .desc
                .filter(|d| !d.is_empty())
                .ok_or_else(|| {
                    Error::malformed("topics", partial.line, format!("topic {id} has no description"))
                })?;
            if partial.title.is_empty() {
                return Err(Error::malformed(
                    "topics",
                    partial.line,
                    format!("topic {id} has no title"),
                ));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::malformed(
                    "topics",
                    partial.line,
                    format!("duplicate topic {id}"),
                ));
            }
            topics.push(Topic {
                topic_id: id,
                title: partial.title,
                description,
            });
            continue;
        }
        let Some(partial) = current.as_mut() else {
            if line.is_empty() {
                continue;
            }
            return Err(Error::malformed("topics", line_no, "text outside <top>"));
        };
        if let Some(rest) = line.strip_prefix("<num>") {
            let rest = rest.trim();
            let rest = rest.strip_prefix("Number:").unwrap_or(rest);
            partial.id = Some(rest.trim().to_string());
            field = Field::None;
        } else if let Some(rest) = line.strip_prefix("<title>") {
            append(&mut partial.title, rest);
            field = Field::Title;
        } else if let Some(rest) = line.strip_prefix("<desc>") {
            let rest = rest.trim();
            let rest = rest.strip_prefix("Description:").unwrap_or(rest);
            let desc = partial.desc.get_or_insert_with(String::new);
            append(desc, rest);
            field = Field::Desc;
        } else if line.starts_with('<') && line.contains('>') {
            // Unknown field such as <narr>; its text is ignored.
            field = Field::None;
        } else {
            match field {
                Field::Title => append(&mut partial.title, line),
                Field::Desc => append(partial.desc.get_or_insert_with(String::new), line),
                Field::None => {}
            }
        }
    }
    if let Some(partial) = current {
        return Err(Error::malformed("topics", partial.line, "unterminated <top>"));
    }
    Ok(topics)
}

/// Parses `topic_id 0 doc_id grade` lines.
pub fn parse_qrels<R: Read>(reader: R) -> Result<Vec<QrelEntry>> {
    let text = read_lossy(reader)?;
    parse_qrels_str(&text)
}

pub fn parse_qrels_str(text: &str) -> Result<Vec<QrelEntry>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(Error::malformed(
                "qrels",
                line_no,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        }
        let grade = cols[3]
            .parse::<u8>()
            .ok()
            .and_then(Grade::new)
            .ok_or_else(|| {
                Error::malformed("qrels", line_no, format!("grade `{}` is not 0, 1 or 2", cols[3]))
            })?;
        if !seen.insert((cols[0], cols[2])) {
            return Err(Error::malformed(
                "qrels",
                line_no,
                format!("duplicate judgment for ({}, {})", cols[0], cols[2]),
            ));
        }
        out.push(QrelEntry {
            topic_id: cols[0].to_string(),
            doc_id: cols[2].to_string(),
            grade,
        });
    }
    Ok(out)
}

/// Writes `topic_id Q0 doc_id rank score run_tag` lines sorted by topic then
/// rank. Scores are printed with six decimals.
pub fn write_run<W: Write>(entries: &[RunEntry], mut writer: W) -> Result<()> {
    let mut sorted: Vec<&RunEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| a.topic_id.cmp(&b.topic_id).then(a.rank.cmp(&b.rank)));
    for e in sorted {
        writeln!(
            writer,
            "{} Q0 {} {} {:.6} {}",
            e.topic_id, e.doc_id, e.rank, e.score, e.run_tag
        )?;
    }
    Ok(())
}

/// Parses a TREC run file. `#` comment lines are skipped.
///
/// Rank contiguity, score monotonicity and uniqueness of `(topic, doc)` are
/// validated per topic.
pub fn parse_run<R: Read>(reader: R) -> Result<Vec<RunEntry>> {
    let text = read_lossy(reader)?;
    parse_run_str(&text)
}

pub fn parse_run_str(text: &str) -> Result<Vec<RunEntry>> {
    let mut out: Vec<RunEntry> = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(Error::malformed(
                "run",
                line_no,
                format!("expected 6 columns, found {}", cols.len()),
            ));
        }
        let rank: u32 = cols[3]
            .parse()
            .ok()
            .filter(|&r| r > 0)
            .ok_or_else(|| Error::malformed("run", line_no, format!("bad rank `{}`", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::malformed("run", line_no, format!("bad score `{}`", cols[4])))?;
        if !seen.insert((cols[0].to_string(), cols[2].to_string())) {
            return Err(Error::malformed(
                "run",
                line_no,
                format!("document {} listed twice for topic {}", cols[2], cols[0]),
            ));
        }
        out.push(RunEntry {
            topic_id: cols[0].to_string(),
            doc_id: cols[2].to_string(),
            rank,
            score,
            run_tag: cols[5].to_string(),
        });
    }
    validate_run(&out)?;
    Ok(out)
}

/// Checks that each topic's ranks are exactly `1..=k` and scores never
/// increase with rank.
pub fn validate_run(entries: &[RunEntry]) -> Result<()> {
    let mut by_topic: std::collections::BTreeMap<&str, Vec<&RunEntry>> = Default::default();
    for e in entries {
        by_topic.entry(&e.topic_id).or_default().push(e);
    }
    for (topic, mut rows) in by_topic {
        rows.sort_by_key(|e| e.rank);
        for (i, pair) in rows.iter().enumerate() {
            if pair.rank as usize != i + 1 {
                return Err(Error::UnsortedRun(topic.to_string()));
            }
        }
        if rows.windows(2).any(|w| w[1].score > w[0].score) {
            return Err(Error::UnsortedRun(topic.to_string()));
        }
    }
    Ok(())
}
