//! nDCG per topic, NA-aware aggregation, and the paired t-test.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use statrs::function::beta::beta_reg;

use crate::corpus::{Grade, QrelEntry, RunEntry};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalParams {
    /// Rank cutoff for DCG and IDCG.
    pub cutoff: usize,
    /// Report a topic as NA when its run retrieved nothing.
    pub empty_run_is_na: bool,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            cutoff: 1000,
            empty_run_is_na: false,
        }
    }
}

/// Relevance judgments indexed by topic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    by_topic: BTreeMap<String, HashMap<String, Grade>>,
}

impl Qrels {
    pub fn new(entries: &[QrelEntry]) -> Qrels {
        let mut by_topic: BTreeMap<String, HashMap<String, Grade>> = BTreeMap::new();
        for e in entries {
            by_topic
                .entry(e.topic_id.clone())
                .or_default()
                .insert(e.doc_id.clone(), e.grade);
        }
        Qrels { by_topic }
    }

    pub fn topic(&self, topic_id: &str) -> Option<&HashMap<String, Grade>> {
        self.by_topic.get(topic_id)
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.by_topic.keys().map(String::as_str)
    }
}

fn gain(grade: u8) -> f64 {
    (1u32 << grade) as f64 - 1.0
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

/// nDCG of one topic's run. `None` means NA: the topic has no relevant
/// document, so the ideal DCG is zero. Unjudged documents have grade 0.
pub fn ndcg(
    run: &[RunEntry],
    judgments: Option<&HashMap<String, Grade>>,
    params: &EvalParams,
) -> Result<Option<f64>> {
    if params.cutoff == 0 {
        return Err(Error::Parameter("cutoff must be at least 1".into()));
    }
    if let Some(w) = run.windows(2).find(|w| w[1].rank <= w[0].rank) {
        return Err(Error::UnsortedRun(w[0].topic_id.clone()));
    }
    let Some(judgments) = judgments else {
        return Ok(None);
    };
    let mut ideal: Vec<u8> = judgments.values().map(|g| g.value()).filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return Ok(None);
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(params.cutoff)
        .enumerate()
        .map(|(i, &g)| gain(g) / discount(i + 1))
        .sum();
    let dcg: f64 = run
        .iter()
        .take(params.cutoff)
        .enumerate()
        .map(|(i, e)| {
            let g = judgments.get(&e.doc_id).map_or(0, |g| g.value());
            gain(g) / discount(i + 1)
        })
        .sum();
    Ok(Some(dcg / idcg))
}

/// Arithmetic mean of the defined values.
pub fn mean_ndcg(values: &[Option<f64>]) -> Result<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::AllNa);
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Per-topic evaluation of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub run_tag: String,
    /// Topic id → nDCG, `None` for NA. Ordered by topic id.
    pub per_topic: BTreeMap<String, Option<f64>>,
}

impl EvalReport {
    pub fn values(&self) -> Vec<Option<f64>> {
        self.per_topic.values().copied().collect()
    }

    pub fn mean(&self) -> Option<f64> {
        mean_ndcg(&self.values()).ok()
    }

    pub fn na_count(&self) -> usize {
        self.per_topic.values().filter(|v| v.is_none()).count()
    }

    /// `topic_id TAB run_tag TAB value|NA` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (topic, value) in &self.per_topic {
            let _ = writeln!(out, "{topic}\t{}\t{}", self.run_tag, fmt_value(*value));
        }
        out
    }

    /// Aligned plain-text table with a closing mean line.
    pub fn to_table(&self) -> String {
        let width = self
            .per_topic
            .keys()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max("topic".len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>10}", "topic", self.run_tag);
        for (topic, value) in &self.per_topic {
            let _ = writeln!(out, "{topic:<width$}  {:>10}", fmt_value(*value));
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>10}  (topics={} NA={})",
            "mean",
            fmt_value(self.mean()),
            self.per_topic.len() - self.na_count(),
            self.na_count()
        );
        out
    }
}

pub fn fmt_value(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.6}"),
        None => "NA".to_string(),
    }
}

/// Evaluates a run over `topics`. A topic is NA when it is listed in
/// `na_topics` (no query relations), when it has no relevant judgments, or,
/// with `empty_run_is_na`, when nothing was retrieved for it.
pub fn evaluate_run(
    run: &[RunEntry],
    run_tag: &str,
    topics: &[String],
    na_topics: &BTreeSet<String>,
    qrels: &Qrels,
    params: &EvalParams,
) -> Result<EvalReport> {
    let mut by_topic: BTreeMap<&str, Vec<&RunEntry>> = BTreeMap::new();
    for e in run {
        by_topic.entry(&e.topic_id).or_default().push(e);
    }
    let mut per_topic = BTreeMap::new();
    for topic in topics {
        let value = if na_topics.contains(topic) {
            None
        } else {
            let mut rows: Vec<RunEntry> = by_topic
                .get(topic.as_str())
                .map(|v| v.iter().map(|&e| e.clone()).collect())
                .unwrap_or_default();
            rows.sort_by_key(|e| e.rank);
            if rows.is_empty() && params.empty_run_is_na {
                None
            } else {
                ndcg(&rows, qrels.topic(topic), params)?
            }
        };
        per_topic.insert(topic.clone(), value);
    }
    Ok(EvalReport {
        run_tag: run_tag.to_string(),
        per_topic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    /// Two-tailed.
    pub p: f64,
    pub n: usize,
    pub mean_difference: f64,
}

impl TTest {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p < alpha
    }
}

/// Two-tailed paired t-test on aligned samples. Pairs with an NA on either
/// side are dropped first.
pub fn paired_t_test(a: &[Option<f64>], b: &[Option<f64>]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::InsufficientData(format!(
            "samples are not aligned ({} vs {} values)",
            a.len(),
            b.len()
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip();
    paired_t_test_values(&xs, &ys)
}

pub fn paired_t_test_values(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::InsufficientData("samples are not aligned".into()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "paired t-test needs at least 2 pairs, got {n}"
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let df = n - 1;
    let (t, p) = if sd == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        }
    } else {
        let t = mean / (sd / (n as f64).sqrt());
        let x = df as f64 / (df as f64 + t * t);
        (t, beta_reg(df as f64 / 2.0, 0.5, x).clamp(0.0, 1.0))
    };
    Ok(TTest {
        t,
        df,
        p,
        n,
        mean_difference: mean,
    })
}

/// One row of a two-run comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub topic_id: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
}

impl ComparisonRow {
    pub fn delta(&self) -> Option<f64> {
        Some(self.a? - self.b?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub tag_a: String,
    pub tag_b: String,
    pub rows: Vec<ComparisonRow>,
    pub zero_filter: bool,
    /// `None` when fewer than two topics survive NA and zero filtering.
    pub test: Option<TTest>,
}

pub const ALPHA: f64 = 0.05;

/// Aligns two reports by topic. With `zero_filter`, topics where run A
/// scored exactly 0 are left out of the test (they stay in the table).
pub fn compare(a: &EvalReport, b: &EvalReport, zero_filter: bool) -> Comparison {
    let topics: BTreeSet<&String> = a.per_topic.keys().chain(b.per_topic.keys()).collect();
    let rows: Vec<ComparisonRow> = topics
        .into_iter()
        .map(|t| ComparisonRow {
            topic_id: t.clone(),
            a: a.per_topic.get(t).copied().flatten(),
            b: b.per_topic.get(t).copied().flatten(),
        })
        .collect();
    let kept: Vec<&ComparisonRow> = rows
        .iter()
        .filter(|r| !(zero_filter && r.a == Some(0.0)))
        .collect();
    let xs: Vec<Option<f64>> = kept.iter().map(|r| r.a).collect();
    let ys: Vec<Option<f64>> = kept.iter().map(|r| r.b).collect();
    Comparison {
        tag_a: a.run_tag.clone(),
        tag_b: b.run_tag.clone(),
        rows,
        zero_filter,
        test: paired_t_test(&xs, &ys).ok(),
    }
}

impl Comparison {
    pub fn to_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.topic_id.len())
            .max()
            .unwrap_or(0)
            .max("topic".len());
        let col = self.tag_a.len().max(self.tag_b.len()).max(10);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>col$}  {:>col$}  {:>10}",
            "topic", self.tag_a, self.tag_b, "delta"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>col$}  {:>col$}  {:>10}",
                r.topic_id,
                fmt_value(r.a),
                fmt_value(r.b),
                fmt_value(r.delta())
            );
        }
        out.push('\n');
        let filter = if self.zero_filter { " zero-filter=on" } else { "" };
        match &self.test {
            Some(t) => {
                let _ = writeln!(
                    out,
                    "paired t-test (two-tailed, alpha={ALPHA}){filter}: n={} mean_delta={:.6} t={:.6} df={} p={:.6} significant={}",
                    t.n,
                    t.mean_difference,
                    t.t,
                    t.df,
                    t.p,
                    if t.significant(ALPHA) { "yes" } else { "no" }
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "paired t-test (two-tailed, alpha={ALPHA}){filter}: insufficient paired topics"
                );
            }
        }
        out
    }
}
