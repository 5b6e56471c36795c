//! Flat `key = value` pipeline configuration.
//!
//! Lines are `key = value`; `#` starts a comment line. Relative paths in a
//! file resolve against the file's directory. Later settings override
//! earlier ones, so command-line overrides are applied after the file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::EvalParams;
use crate::index::{Granularity, TermSpace};
use crate::ranker::RankingParams;
use crate::textproc::TextOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Representation {
    Bow,
    Boc,
    Bor,
}

impl Representation {
    pub fn space(self) -> TermSpace {
        match self {
            Representation::Bow => TermSpace::Word,
            Representation::Boc => TermSpace::Concept,
            Representation::Bor => TermSpace::Relation,
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::Bow => "bow",
            Representation::Boc => "boc",
            Representation::Bor => "bor",
        })
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bow" => Ok(Representation::Bow),
            "boc" => Ok(Representation::Boc),
            "bor" => Ok(Representation::Bor),
            _ => Err(Error::Parameter(format!(
                "representation must be bow, boc or bor, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus: Option<PathBuf>,
    pub topics: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub kb_concepts: Option<PathBuf>,
    pub kb_relations: Option<PathBuf>,
    /// Where the annotation artifact is written and read.
    pub annotations: Option<PathBuf>,
    /// External annotation file consumed by `extract` instead of rule-based
    /// extraction.
    pub annotations_input: Option<PathBuf>,
    pub mentions: Option<PathBuf>,
    pub work_dir: PathBuf,
    pub index_dir: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub topic_set: String,
    pub run_tag: Option<String>,
    pub ranking: RankingParams,
    pub eval: EvalParams,
    pub text: TextOptions,
    pub representation: Representation,
    pub granularity: Granularity,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: None,
            topics: None,
            qrels: None,
            kb_concepts: None,
            kb_relations: None,
            annotations: None,
            annotations_input: None,
            mentions: None,
            work_dir: PathBuf::from("."),
            index_dir: None,
            run_dir: None,
            topic_set: "topics".to_string(),
            run_tag: None,
            ranking: RankingParams::default(),
            eval: EvalParams::default(),
            text: TextOptions::default(),
            representation: Representation::Bor,
            granularity: Granularity::Passage,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Parameter(format!("{key} expects on/off, got `{value}`"))),
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parameter(format!("{key}: `{value}` is not a valid number")))
}

fn on_off(flag: bool) -> &'static str {
    if flag {
        "on"
    } else {
        "off"
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut config = PipelineConfig::default();
        config.apply_text(&text, base)?;
        Ok(config)
    }

    /// Applies `key = value` lines; relative paths are joined to `base`.
    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<()> {
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::malformed("config", idx + 1, format!("expected `key = value`, found `{line}`"))
            })?;
            self.set(key.trim(), value.trim(), base)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || Some(base.join(value));
        match key {
            "corpus" => self.corpus = path(),
            "topics" => self.topics = path(),
            "qrels" => self.qrels = path(),
            "kb_concepts" => self.kb_concepts = path(),
            "kb_relations" => self.kb_relations = path(),
            "annotations" => self.annotations = path(),
            "annotations_input" => self.annotations_input = path(),
            "mentions" => self.mentions = path(),
            "work_dir" => self.work_dir = base.join(value),
            "index_dir" => self.index_dir = path(),
            "run_dir" => self.run_dir = path(),
            "topic_set" => self.topic_set = value.to_string(),
            "run_tag" => self.run_tag = Some(value.to_string()),
            "k1" => self.ranking.k1 = parse_num(key, value)?,
            "b" => self.ranking.b = parse_num(key, value)?,
            "top_k" => self.ranking.top_k = parse_num(key, value)?,
            "passage_len" => self.ranking.passage_len = parse_num(key, value)?,
            "cutoff" => self.eval.cutoff = parse_num(key, value)?,
            "empty_run_is_na" => self.eval.empty_run_is_na = parse_bool(key, value)?,
            "stemming" => self.text.stemming = parse_bool(key, value)?,
            "stopwords" => self.text.stopwords = parse_bool(key, value)?,
            "representation" => self.representation = value.parse()?,
            "granularity" => self.granularity = value.parse()?,
            _ => return Err(Error::Parameter(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Checks parameter ranges and the representation/granularity pairing.
    pub fn validate(&self) -> Result<()> {
        self.ranking.validate()?;
        if self.eval.cutoff == 0 {
            return Err(Error::Parameter("cutoff must be at least 1".into()));
        }
        if self.granularity == Granularity::Passage && self.representation != Representation::Bor {
            return Err(Error::Parameter(format!(
                "passage granularity requires representation=bor, got {}",
                self.representation
            )));
        }
        if self.topic_set.is_empty() || self.topic_set.contains(['/', '\\']) {
            return Err(Error::Parameter(format!("bad topic_set `{}`", self.topic_set)));
        }
        Ok(())
    }

    pub fn index_dir(&self) -> PathBuf {
        self.index_dir.clone().unwrap_or_else(|| self.work_dir.join("index"))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.run_dir.clone().unwrap_or_else(|| self.work_dir.join("runs"))
    }

    pub fn annotations_path(&self) -> PathBuf {
        self.annotations
            .clone()
            .unwrap_or_else(|| self.work_dir.join("annotations.tsv"))
    }

    pub fn mentions_path(&self) -> PathBuf {
        self.mentions
            .clone()
            .unwrap_or_else(|| self.work_dir.join("mentions.tsv"))
    }

    pub fn sentences_path(&self) -> PathBuf {
        self.work_dir.join("sentences.tsv")
    }

    pub fn index_path(&self) -> PathBuf {
        self.index_dir()
            .join(format!("{}.{}.idx", self.representation, self.granularity))
    }

    pub fn run_path(&self) -> PathBuf {
        self.run_dir().join(format!(
            "{}.{}.{}.run",
            self.topic_set, self.representation, self.granularity
        ))
    }

    pub fn run_tag(&self) -> String {
        self.run_tag
            .clone()
            .unwrap_or_else(|| format!("{}-{}", self.representation, self.granularity))
    }

    /// Every setting in canonical `key = value` form, sorted by key.
    pub fn canonical(&self) -> String {
        let p = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut pairs = vec![
            ("annotations", p(&self.annotations)),
            ("annotations_input", p(&self.annotations_input)),
            ("b", self.ranking.b.to_string()),
            ("corpus", p(&self.corpus)),
            ("cutoff", self.eval.cutoff.to_string()),
            ("empty_run_is_na", on_off(self.eval.empty_run_is_na).into()),
            ("granularity", self.granularity.to_string()),
            ("index_dir", p(&self.index_dir)),
            ("k1", self.ranking.k1.to_string()),
            ("kb_concepts", p(&self.kb_concepts)),
            ("kb_relations", p(&self.kb_relations)),
            ("mentions", p(&self.mentions)),
            ("passage_len", self.ranking.passage_len.to_string()),
            ("qrels", p(&self.qrels)),
            ("representation", self.representation.to_string()),
            ("run_dir", p(&self.run_dir)),
            ("run_tag", self.run_tag.clone().unwrap_or_default()),
            ("stemming", on_off(self.text.stemming).into()),
            ("stopwords", on_off(self.text.stopwords).into()),
            ("top_k", self.ranking.top_k.to_string()),
            ("topic_set", self.topic_set.clone()),
            ("topics", p(&self.topics)),
            ("work_dir", self.work_dir.display().to_string()),
        ];
        pairs.sort_by_key(|(k, _)| *k);
        pairs
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// First 16 hex digits of the SHA-256 of [`PipelineConfig::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_overrides() {
        let mut c = PipelineConfig::default();
        c.apply_text(
            "# fixture\ncorpus = data/c.txt\nk1 = 0.9\nrepresentation = boc\ngranularity = doc\nstemming = on\n",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(c.corpus.as_deref(), Some(Path::new("/base/data/c.txt")));
        assert_eq!(c.ranking.k1, 0.9);
        assert!(c.text.stemming);
        c.set("k1", "1.5", Path::new(".")).unwrap();
        assert_eq!(c.ranking.k1, 1.5);
        assert_eq!(c.index_path(), Path::new("./index/boc.doc.idx"));
        assert_eq!(c.run_path(), Path::new("./runs/topics.boc.doc.run"));
        c.validate().unwrap();
    }

    #[test]
    fn passage_needs_bor() {
        let mut c = PipelineConfig::default();
        c.set("representation", "bow", Path::new(".")).unwrap();
        assert!(matches!(c.validate(), Err(Error::Parameter(_))));
    }

    #[test]
    fn bad_lines() {
        let mut c = PipelineConfig::default();
        assert!(matches!(
            c.apply_text("k1 1.2\n", Path::new(".")),
            Err(Error::Malformed { line: 1, .. })
        ));
        assert!(c.apply_text("colour = red\n", Path::new(".")).is_err());
        assert!(c.apply_text("k1 = fast\n", Path::new(".")).is_err());
    }

    #[test]
    fn hash_tracks_settings() {
        let a = PipelineConfig::default();
        let mut b = PipelineConfig::default();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        b.ranking.b = 0.5;
        assert_ne!(a.hash(), b.hash());
    }
}
