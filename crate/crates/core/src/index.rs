//! Inverted index over one term space at document or passage granularity.
//!
//! Persisted form (plain text, one record per line):
//!
//! ```text
//! #index space=RELATION granularity=passage N=42 avgdl=1.5
//! # any further comment lines
//! T <term>
//! P <unit_id> <tf>
//! ...
//! U <unit_id> <parent_doc_id> <length>
//! ```
//!
//! Terms appear in byte order, postings in unit-id order, and the unit table
//! closes the file.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermSpace {
    Word,
    Concept,
    Relation,
}

impl fmt::Display for TermSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TermSpace::Word => "WORD",
            TermSpace::Concept => "CONCEPT",
            TermSpace::Relation => "RELATION",
        })
    }
}

impl FromStr for TermSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "WORD" | "BOW" => Ok(TermSpace::Word),
            "CONCEPT" | "BOC" => Ok(TermSpace::Concept),
            "RELATION" | "BOR" => Ok(TermSpace::Relation),
            _ => Err(Error::Parameter(format!("unknown term space `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Granularity {
    Doc,
    Passage,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Doc => "doc",
            Granularity::Passage => "passage",
        })
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "doc" | "document" => Ok(Granularity::Doc),
            "passage" => Ok(Granularity::Passage),
            _ => Err(Error::Parameter(format!("unknown granularity `{s}`"))),
        }
    }
}

/// Input to [`InvertedIndex::build`]: one unit and its term multiset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitTerms {
    pub unit_id: String,
    pub parent_doc_id: String,
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexUnit {
    pub unit_id: String,
    pub parent_doc_id: String,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Posting {
    pub unit_id: String,
    pub tf: u32,
}

/// Internal posting: position in the unit table plus term frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawPosting {
    pub unit: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexStats {
    pub n_units: usize,
    pub avgdl: f64,
    pub df: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    space: TermSpace,
    granularity: Granularity,
    /// Sorted by unit id; `RawPosting::unit` indexes into this.
    units: Vec<IndexUnit>,
    unit_pos: HashMap<String, u32>,
    postings: BTreeMap<String, Vec<RawPosting>>,
    avgdl: f64,
}

impl InvertedIndex {
    pub fn build(
        mut input: Vec<UnitTerms>,
        space: TermSpace,
        granularity: Granularity,
    ) -> Result<InvertedIndex> {
        input.sort_by(|a, b| a.unit_id.cmp(&b.unit_id));
        if let Some(w) = input.windows(2).find(|w| w[0].unit_id == w[1].unit_id) {
            return Err(Error::DuplicateUnit(w[0].unit_id.clone()));
        }
        let mut units = Vec::with_capacity(input.len());
        let mut postings: BTreeMap<String, Vec<RawPosting>> = BTreeMap::new();
        for (pos, unit) in input.into_iter().enumerate() {
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for term in unit.terms {
                *counts.entry(term).or_default() += 1;
            }
            let length = counts.values().map(|&c| c as u64).sum();
            for (term, tf) in counts {
                postings.entry(term).or_default().push(RawPosting {
                    unit: pos as u32,
                    tf,
                });
            }
            units.push(IndexUnit {
                unit_id: unit.unit_id,
                parent_doc_id: unit.parent_doc_id,
                length,
            });
        }
        Ok(InvertedIndex::assemble(space, granularity, units, postings))
    }

    fn assemble(
        space: TermSpace,
        granularity: Granularity,
        units: Vec<IndexUnit>,
        postings: BTreeMap<String, Vec<RawPosting>>,
    ) -> InvertedIndex {
        let total: u64 = units.iter().map(|u| u.length).sum();
        let avgdl = if units.is_empty() {
            0.0
        } else {
            total as f64 / units.len() as f64
        };
        let unit_pos = units
            .iter()
            .enumerate()
            .map(|(i, u)| (u.unit_id.clone(), i as u32))
            .collect();
        InvertedIndex {
            space,
            granularity,
            units,
            unit_pos,
            postings,
            avgdl,
        }
    }

    pub fn space(&self) -> TermSpace {
        self.space
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn units(&self) -> &[IndexUnit] {
        &self.units
    }

    pub fn unit(&self, pos: u32) -> &IndexUnit {
        &self.units[pos as usize]
    }

    pub fn unit_by_id(&self, unit_id: &str) -> Option<&IndexUnit> {
        self.unit_pos.get(unit_id).map(|&p| self.unit(p))
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn raw_postings(&self, term: &str) -> &[RawPosting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or_default()
    }

    pub fn lookup(&self, term: &str) -> Vec<Posting> {
        self.raw_postings(term)
            .iter()
            .map(|p| Posting {
                unit_id: self.unit(p.unit).unit_id.clone(),
                tf: p.tf,
            })
            .collect()
    }

    pub fn df(&self, term: &str) -> usize {
        self.raw_postings(term).len()
    }

    pub fn tf(&self, term: &str, unit_id: &str) -> u32 {
        let Some(&pos) = self.unit_pos.get(unit_id) else {
            return 0;
        };
        let list = self.raw_postings(term);
        list.binary_search_by_key(&pos, |p| p.unit)
            .map(|i| list[i].tf)
            .unwrap_or(0)
    }

    pub fn stats(&self) -> IndexStats {
        IndexStats {
            n_units: self.units.len(),
            avgdl: self.avgdl,
            df: self
                .postings
                .iter()
                .map(|(t, p)| (t.clone(), p.len()))
                .collect(),
        }
    }

    /// Writes the persisted form. Each `comments` entry becomes a `# ` line
    /// after the header.
    pub fn write_to<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        writeln!(
            w,
            "#index space={} granularity={} N={} avgdl={}",
            self.space,
            self.granularity,
            self.units.len(),
            self.avgdl
        )?;
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        for (term, list) in &self.postings {
            writeln!(w, "T {term}")?;
            for p in list {
                writeln!(w, "P {} {}", self.unit(p.unit).unit_id, p.tf)?;
            }
        }
        for u in &self.units {
            writeln!(w, "U {} {} {}", u.unit_id, u.parent_doc_id, u.length)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut reader: R) -> Result<InvertedIndex> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let bad = |line: usize, msg: String| Error::malformed("index", line, msg);

        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty index file".into()))?;
        let header = header
            .strip_prefix("#index ")
            .ok_or_else(|| bad(1, "missing `#index` header".into()))?;
        let mut fields = HashMap::new();
        for kv in header.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(1, format!("bad header field `{kv}`")))?;
            fields.insert(k, v);
        }
        let field = |k: &str| fields.get(k).copied().ok_or_else(|| bad(1, format!("header lacks {k}")));
        let space: TermSpace = field("space")?.parse()?;
        let granularity: Granularity = field("granularity")?.parse()?;
        let n: usize = field("N")?.parse().map_err(|_| bad(1, "bad N".into()))?;
        let avgdl: f64 = field("avgdl")?.parse().map_err(|_| bad(1, "bad avgdl".into()))?;

        // Each term with its postings as (line number, unit id, tf).
        type Pending = (String, Vec<(usize, String, u32)>);
        let mut pending: Vec<Pending> = Vec::new();
        let mut units = Vec::new();
        for (no, line) in lines {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(' ').collect();
            match cols[..] {
                ["T", term] => pending.push((term.to_string(), Vec::new())),
                ["P", unit, tf] => {
                    let tf: u32 = tf
                        .parse()
                        .ok()
                        .filter(|&t| t > 0)
                        .ok_or_else(|| bad(no, format!("bad tf `{tf}`")))?;
                    let (_, list) = pending
                        .last_mut()
                        .ok_or_else(|| bad(no, "posting before any term".into()))?;
                    list.push((no, unit.to_string(), tf));
                }
                ["U", unit, parent, length] => units.push(IndexUnit {
                    unit_id: unit.to_string(),
                    parent_doc_id: parent.to_string(),
                    length: length.parse().map_err(|_| bad(no, format!("bad length `{length}`")))?,
                }),
                _ => return Err(bad(no, format!("unrecognised line `{line}`"))),
            }
        }
        if units.len() != n {
            return Err(bad(1, format!("header says N={n} but {} units listed", units.len())));
        }
        if units.windows(2).any(|w| w[0].unit_id >= w[1].unit_id) {
            return Err(bad(1, "unit table is not strictly sorted".into()));
        }
        let unit_pos: HashMap<&str, u32> = units
            .iter()
            .enumerate()
            .map(|(i, u)| (u.unit_id.as_str(), i as u32))
            .collect();
        let mut postings = BTreeMap::new();
        let mut lengths = vec![0u64; units.len()];
        for (term, list) in pending {
            let mut raw = Vec::with_capacity(list.len());
            for (no, unit, tf) in list {
                let &pos = unit_pos
                    .get(unit.as_str())
                    .ok_or_else(|| bad(no, format!("posting for unknown unit `{unit}`")))?;
                if raw.last().is_some_and(|p: &RawPosting| p.unit >= pos) {
                    return Err(bad(no, format!("postings of `{term}` not sorted")));
                }
                lengths[pos as usize] += tf as u64;
                raw.push(RawPosting { unit: pos, tf });
            }
            postings.insert(term, raw);
        }
        if let Some(u) = units.iter().zip(&lengths).find(|(u, &l)| u.length != l) {
            return Err(bad(1, format!("unit `{}` length disagrees with its postings", u.0.unit_id)));
        }
        let index = InvertedIndex::assemble(space, granularity, units, postings);
        if (index.avgdl - avgdl).abs() > 1e-9 * avgdl.abs().max(1.0) {
            return Err(bad(1, format!("header avgdl {avgdl} disagrees with unit table")));
        }
        Ok(index)
    }
}
