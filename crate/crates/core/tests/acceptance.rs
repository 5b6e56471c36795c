//! Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and
//! exits non-zero if any check fails.
//!
//! The optional corpus-scale check reads `SEMREL_OHSUMED_CORPUS` (a corpus
//! file, or a directory of `ohsumed.*` files) and `SEMREL_OHSUMED_TOPICS`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use semrel::analysis::index_units;
use semrel::corpus::{parse_ohsumed_corpus, parse_ohsumed_str, parse_qrels_str, parse_topics, parse_topics_str, write_run};
use semrel::eval::{evaluate_run, ndcg, paired_t_test_values, EvalParams, Qrels};
use semrel::linker::Lexicon;
use semrel::ranker::{rank_documents, score_passage_weighted, weighted_passage_sum};
use semrel::relext::extract_rule_based;
use semrel::{
    Document, Engine, Grade, Granularity, InvertedIndex, KnowledgeBase, Normalizer, QueryAnalysis, RankingParams,
    Representation, RunEntry, TermSpace, TextOptions, Topic, UnitTerms,
};

type Check = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).expect("fixture present")
}

struct Fixture {
    docs: Vec<Document>,
    topics: Vec<Topic>,
    kb: KnowledgeBase,
    engine: Engine,
}

fn load() -> Fixture {
    let docs = parse_ohsumed_str(&read("corpus.ohsumed")).unwrap();
    let topics = parse_topics_str(&read("topics.txt")).unwrap();
    let kb = KnowledgeBase::from_strs(&read("kb_concepts.txt"), &read("kb_relations.txt")).unwrap();
    let engine = Engine::new(&docs, &topics, &kb, TextOptions::default(), RankingParams::default(), None).unwrap();
    Fixture {
        docs,
        topics,
        kb,
        engine,
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Textbook BM25 computed from raw unit term lists, with no index.
fn brute_bm25(units: &[UnitTerms], query: &[String], target: &UnitTerms, k1: f64, b: f64) -> f64 {
    let n = units.len() as f64;
    let avgdl = units.iter().map(|u| u.terms.len()).sum::<usize>() as f64 / n;
    let distinct: BTreeSet<&String> = query.iter().collect();
    let mut score = 0.0;
    for term in distinct {
        let df = units.iter().filter(|u| u.terms.contains(term)).count() as f64;
        let tf = target.terms.iter().filter(|t| *t == term).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        let norm = if avgdl > 0.0 { target.terms.len() as f64 / avgdl } else { 1.0 };
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
    }
    score
}

fn ordered(mut scored: Vec<(String, f64)>) -> Vec<(String, f64)> {
    scored.retain(|(_, s)| *s > 0.0);
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored
}

fn same_ranking(got: &[RunEntry], want: &[(String, f64)], tol: f64) -> Result<(), String> {
    ensure(
        got.len() == want.len(),
        format!("{} entries, oracle has {}", got.len(), want.len()),
    )?;
    for (e, (doc, score)) in got.iter().zip(want) {
        ensure(
            &e.doc_id == doc && (e.score - score).abs() <= tol,
            format!("rank {}: got {} {:.12}, oracle {} {:.12}", e.rank, e.doc_id, e.score, doc, score),
        )?;
    }
    Ok(())
}

fn queries(f: &Fixture) -> Vec<QueryAnalysis> {
    f.engine.topic_ids().map(|t| f.engine.query(t).unwrap().clone()).collect()
}

fn units(f: &Fixture, space: TermSpace, gran: Granularity, passage_len: usize) -> Vec<UnitTerms> {
    let c = f.engine.collection();
    index_units(&c.documents, space, gran, passage_len, &c.normalizer, f.engine.annotations()).unwrap()
}

fn bm25_oracle(f: &Fixture) -> Check {
    let params = RankingParams::default();
    let start = Instant::now();
    let mut compared = 0;
    for space in [TermSpace::Word, TermSpace::Concept, TermSpace::Relation] {
        let unit_terms = units(f, space, Granularity::Doc, 1);
        let index = InvertedIndex::build(unit_terms.clone(), space, Granularity::Doc).unwrap();
        for q in queries(f) {
            let terms = q.terms(space);
            let got = rank_documents(&q, &index, &params, "t").map_err(|e| e.to_string())?;
            let want = ordered(
                unit_terms
                    .iter()
                    .map(|u| (u.unit_id.clone(), brute_bm25(&unit_terms, terms, u, params.k1, params.b)))
                    .collect(),
            );
            same_ranking(&got, &want, 1e-9).map_err(|e| format!("{space} {}: {e}", q.topic_id))?;
            compared += got.len();
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("{compared} ranked entries identical across 3 spaces, {elapsed:.2?}"))
}

fn passage_oracle(f: &Fixture) -> Check {
    ensure(
        weighted_passage_sum(&[(1, 2.0), (2, 1.0)], 2) == 2.0,
        "worked example does not give exactly 2.0",
    )?;
    let params = RankingParams::default();
    let passages = units(f, TermSpace::Relation, Granularity::Passage, params.passage_len);
    let index = InvertedIndex::build(passages.clone(), TermSpace::Relation, Granularity::Passage).unwrap();
    let mut checked = 0;
    for q in queries(f) {
        let r_q: BTreeSet<&String> = q.relations.iter().collect();
        let got = score_passage_weighted(&q, &index, &params, "t").map_err(|e| e.to_string())?;
        if r_q.is_empty() {
            ensure(got.is_na(), format!("{} has no relations but was not NA", q.topic_id))?;
            continue;
        }
        let mut per_doc: BTreeMap<String, f64> = BTreeMap::new();
        for p in &passages {
            let r_p: BTreeSet<&String> = p.terms.iter().collect();
            let shared = r_p.intersection(&r_q).count() as f64;
            let weight = shared / r_q.len() as f64;
            let bm25 = brute_bm25(&passages, &q.relations, p, params.k1, params.b);
            *per_doc.entry(p.parent_doc_id.clone()).or_default() += weight * bm25;
        }
        let want = ordered(per_doc.into_iter().collect());
        same_ranking(got.entries(), &want, 1e-9).map_err(|e| format!("{}: {e}", q.topic_id))?;
        checked += 1;
    }
    ensure(checked > 0, "no topic with query relations")?;
    Ok(format!("{checked} topics match direct substitution; worked example = 2.0"))
}

fn na_protocol(f: &mut Fixture) -> Check {
    let ohsu3 = f.engine.annotations().mentions.get("OHSU3").map_or(0, Vec::len);
    ensure(ohsu3 == 0, format!("OHSU3 should contain no lexicon phrase, found {ohsu3} mentions"))?;
    let run = f
        .engine
        .run_all(Representation::Bor, Granularity::Passage, "bor")
        .map_err(|e| e.to_string())?;
    let expect: BTreeSet<String> = ["OHSU3".to_string(), "OHSU4".to_string()].into();
    ensure(run.na_topics == expect, format!("NA topics {:?}", run.na_topics))?;
    let qrels = Qrels::new(&parse_qrels_str(&read("qrels.txt")).unwrap());
    let topics: Vec<String> = f.topics.iter().map(|t| t.topic_id.clone()).collect();
    let report = evaluate_run(&run.entries, "bor", &topics, &run.na_topics, &qrels, &EvalParams::default())
        .map_err(|e| e.to_string())?;
    ensure(
        report.per_topic["OHSU3"].is_none() && report.per_topic["OHSU4"].is_none(),
        "NA topics carry a value",
    )?;
    let defined: Vec<f64> = ["OHSU1", "OHSU2"]
        .iter()
        .map(|t| report.per_topic[*t].ok_or(format!("{t} is NA")))
        .collect::<Result<_, _>>()?;
    let expected_mean = defined.iter().sum::<f64>() / defined.len() as f64;
    let mean = report.mean().ok_or("mean undefined")?;
    ensure((mean - expected_mean).abs() < 1e-12, format!("mean {mean} vs {expected_mean}"))?;
    Ok(format!("OHSU3, OHSU4 NA; mean {mean:.6} over the 2 defined topics"))
}

fn extraction_oracle(f: &Fixture) -> Check {
    let normalizer = Normalizer::new(TextOptions::default());
    let lexicon = Lexicon::build(&f.kb, normalizer);
    let c = f.engine.collection();
    let mut sentences = 0;
    let mut instances = 0;
    for text in c.documents.iter().chain(&c.topics) {
        for s in &text.sentences {
            let mentions = lexicon.link(&text.text_id, s);
            let got: BTreeSet<(String, String, String)> = extract_rule_based(&mentions, &f.kb)
                .into_iter()
                .map(|r| (r.subject_cui, r.predicate, r.object_cui))
                .collect();
            let mut want = BTreeSet::new();
            for (i, a) in mentions.iter().enumerate() {
                for b in &mentions[i + 1..] {
                    if a.cui == b.cui {
                        continue;
                    }
                    for r in f.kb.relations() {
                        let pair = (r.subject_cui.as_str(), r.object_cui.as_str());
                        if pair == (a.cui.as_str(), b.cui.as_str()) || pair == (b.cui.as_str(), a.cui.as_str()) {
                            want.insert((r.subject_cui.clone(), r.predicate.clone(), r.object_cui.clone()));
                        }
                    }
                }
            }
            ensure(
                got == want,
                format!("{} sentence {}: {:?} vs oracle {:?}", text.text_id, s.index, got, want),
            )?;
            sentences += 1;
            instances += want.len();
        }
    }
    Ok(format!("{sentences} sentences, {instances} relations, exact set equality"))
}

/// Independent nDCG over run and qrels text.
fn oracle_ndcg(run_text: &str, qrels_text: &str) -> BTreeMap<String, Option<f64>> {
    let mut grades: HashMap<String, HashMap<String, u32>> = HashMap::new();
    for line in qrels_text.lines().filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        grades.entry(f[0].into()).or_default().insert(f[2].into(), f[3].parse().unwrap());
    }
    let mut ranked: BTreeMap<String, Vec<(u32, String)>> = BTreeMap::new();
    for line in run_text.lines().filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split_whitespace().collect();
        ranked.entry(f[0].into()).or_default().push((f[3].parse().unwrap(), f[2].into()));
    }
    let topics: BTreeSet<String> = grades.keys().chain(ranked.keys()).cloned().collect();
    let empty = HashMap::new();
    topics
        .into_iter()
        .map(|t| {
            let g = grades.get(&t).unwrap_or(&empty);
            let mut ideal: Vec<u32> = g.values().copied().filter(|&x| x > 0).collect();
            ideal.sort_unstable_by(|a, b| b.cmp(a));
            let dcg = |gs: &mut dyn Iterator<Item = u32>| -> f64 {
                gs.take(1000)
                    .enumerate()
                    .map(|(i, x)| (2f64.powi(x as i32) - 1.0) / ((i + 2) as f64).log2())
                    .sum()
            };
            let idcg = dcg(&mut ideal.into_iter());
            let mut docs = ranked.get(&t).cloned().unwrap_or_default();
            docs.sort();
            let value = (idcg > 0.0).then(|| dcg(&mut docs.iter().map(|(_, d)| g.get(d).copied().unwrap_or(0))) / idcg);
            (t, value)
        })
        .collect()
}

fn ndcg_oracle(f: &mut Fixture) -> Check {
    let entry = |doc: &str, rank: u32| RunEntry {
        topic_id: "T".into(),
        doc_id: doc.into(),
        rank,
        score: 10.0 - rank as f64,
        run_tag: "x".into(),
    };
    let judgments: HashMap<String, Grade> = [
        ("A".to_string(), Grade::new(2).unwrap()),
        ("C".to_string(), Grade::new(1).unwrap()),
    ]
    .into();
    let v = ndcg(&[entry("A", 1), entry("B", 2), entry("C", 3)], Some(&judgments), &EvalParams::default())
        .map_err(|e| e.to_string())?
        .ok_or("example is NA")?;
    ensure((v - 0.963940).abs() < 1e-6, format!("example gives {v:.9}"))?;

    let qrels_text = read("qrels.txt");
    let qrels = Qrels::new(&parse_qrels_str(&qrels_text).unwrap());
    let mut compared = 0;
    for (repr, gran) in [
        (Representation::Bow, Granularity::Doc),
        (Representation::Boc, Granularity::Doc),
        (Representation::Bor, Granularity::Doc),
        (Representation::Bor, Granularity::Passage),
    ] {
        let run = f.engine.run_all(repr, gran, "r").map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        write_run(&run.entries, &mut buf).unwrap();
        let run_text = String::from_utf8(buf).unwrap();
        let reparsed = semrel::corpus::parse_run_str(&run_text).map_err(|e| e.to_string())?;
        let oracle = oracle_ndcg(&run_text, &qrels_text);
        let topics: Vec<String> = oracle.keys().cloned().collect();
        let report = evaluate_run(&reparsed, "r", &topics, &BTreeSet::new(), &qrels, &EvalParams::default())
            .map_err(|e| e.to_string())?;
        for (t, want) in &oracle {
            let got = report.per_topic[t];
            let agree = match (got, want) {
                (Some(a), Some(b)) => (a - b).abs() < 1e-6,
                (None, None) => true,
                _ => false,
            };
            ensure(agree, format!("{repr}/{gran} {t}: {got:?} vs oracle {want:?}"))?;
            compared += 1;
        }
    }
    Ok(format!("example = {v:.6}; {compared} topic values agree with the second evaluator"))
}

fn ttest_check() -> Check {
    let t = paired_t_test_values(&[0.1, 0.2, 0.3], &[0.0, 0.0, 0.0]).map_err(|e| e.to_string())?;
    ensure(
        (t.t - 3.464102).abs() < 1e-6 && t.df == 2 && (t.p - 0.074180).abs() < 1e-3,
        format!("t={} df={} p={}", t.t, t.df, t.p),
    )?;
    let same = paired_t_test_values(&[0.4, 0.5, 0.9], &[0.4, 0.5, 0.9]).map_err(|e| e.to_string())?;
    ensure(same.t == 0.0 && same.p == 1.0, format!("a=b gives t={} p={}", same.t, same.p))?;
    Ok(format!("t={:.6} df={} p={:.6}; a=b gives t=0 p=1", t.t, t.df, t.p))
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Check {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let batch = |repr: &str, gran: &str| -> Result<(), String> {
        let out = Command::new(env!("CARGO_BIN_EXE_semrel"))
            .arg("batch")
            .args(["--corpus".as_ref(), fixture("corpus.ohsumed").as_os_str()])
            .args(["--topics".as_ref(), fixture("topics.txt").as_os_str()])
            .args(["--qrels".as_ref(), fixture("qrels.txt").as_os_str()])
            .args(["--kb-concepts".as_ref(), fixture("kb_concepts.txt").as_os_str()])
            .args(["--kb-relations".as_ref(), fixture("kb_relations.txt").as_os_str()])
            .args(["--work-dir".as_ref(), work.path().as_os_str()])
            .args(["--repr", repr, "--gran", gran])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(
            out.status.success(),
            format!("batch {repr}/{gran} failed: {}", String::from_utf8_lossy(&out.stderr)),
        )
    };
    let mut runs = Vec::new();
    for _ in 0..2 {
        batch("bor", "passage")?;
        batch("bow", "doc")?;
        runs.push(snapshot(work.path()));
    }
    let elapsed = start.elapsed();
    ensure(runs[0] == runs[1], "artifacts differ between the two batch runs")?;
    let reports = runs[0].keys().filter(|p| p.to_string_lossy().ends_with(".eval")).count();
    ensure(reports == 2, format!("expected 2 eval reports, found {reports}"))?;
    ensure(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"))?;
    Ok(format!("{} artifacts byte-identical across runs, {elapsed:.2?} for 4 batches", runs[0].len()))
}

fn corpus_scale() -> Option<Check> {
    let corpus = PathBuf::from(std::env::var_os("SEMREL_OHSUMED_CORPUS")?);
    let topics = PathBuf::from(std::env::var_os("SEMREL_OHSUMED_TOPICS")?);
    Some((|| {
        let files: Vec<PathBuf> = if corpus.is_dir() {
            let mut v: Vec<PathBuf> = std::fs::read_dir(&corpus)
                .map_err(|e| e.to_string())?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("ohsumed.")))
                .collect();
            v.sort();
            v
        } else {
            vec![corpus.clone()]
        };
        let mut docs = 0;
        for file in &files {
            let f = std::fs::File::open(file).map_err(|e| format!("{}: {e}", file.display()))?;
            docs += parse_ohsumed_corpus(std::io::BufReader::new(f)).map_err(|e| e.to_string())?.len();
        }
        let f = std::fs::File::open(&topics).map_err(|e| format!("{}: {e}", topics.display()))?;
        let n_topics = parse_topics(f).map_err(|e| e.to_string())?.len();
        ensure(
            docs == 348_566 && n_topics == 106,
            format!("{docs} documents, {n_topics} topics"),
        )?;
        Ok(format!("{docs} documents, {n_topics} topics"))
    })())
}

fn main() {
    let mut f = load();
    assert_eq!(f.docs.len(), 12);
    let results: Vec<(&str, Option<Check>)> = vec![
        ("bm25 brute-force equivalence", Some(bm25_oracle(&f))),
        ("passage-weighted scoring oracle", Some(passage_oracle(&f))),
        ("NA protocol", Some(na_protocol(&mut f))),
        ("rule-based extraction oracle", Some(extraction_oracle(&f))),
        ("nDCG example and second evaluator", Some(ndcg_oracle(&mut f))),
        ("paired t-test", Some(ttest_check())),
        ("batch determinism and runtime", Some(determinism())),
        ("OHSUMED corpus scale", corpus_scale()),
    ];
    let mut failed = 0;
    for (name, result) in &results {
        match result {
            Some(Ok(detail)) => println!("PASS  {name}: {detail}"),
            Some(Err(why)) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
            None => println!("SKIP  {name}: SEMREL_OHSUMED_CORPUS / SEMREL_OHSUMED_TOPICS not set"),
        }
    }
    println!("acceptance: {} checks, {failed} failed", results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
