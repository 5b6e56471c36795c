//! `semrel`: command-line front end for the retrieval pipeline.
//!
//! Exit codes: 0 success, 1 other failure, 2 missing input file,
//! 3 malformed input, 4 invalid flags or configuration.

use std::collections::BTreeSet;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semrel::analysis::Annotations;
use semrel::config::PipelineConfig;
use semrel::corpus::write_run;
use semrel::eval::{compare, Qrels};
use semrel::index::{InvertedIndex, TermSpace};
use semrel::linker::{write_mentions, Lexicon};
use semrel::pipeline::{self, create, header, open, Collection};
use semrel::relext::write_annotations;
use semrel::{Error, Normalizer};

#[derive(Parser)]
#[command(name = "semrel", version, about = "Relation-aware case-based retrieval")]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, env = "SEMREL_CONFIG")]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Flags that override configuration keys of the same name.
#[derive(Args)]
struct Overrides {
    #[arg(long, global = true)]
    corpus: Option<String>,
    #[arg(long, global = true)]
    topics: Option<String>,
    #[arg(long, global = true)]
    qrels: Option<String>,
    #[arg(long, global = true)]
    kb_concepts: Option<String>,
    #[arg(long, global = true)]
    kb_relations: Option<String>,
    #[arg(long, global = true)]
    work_dir: Option<String>,
    #[arg(long, global = true)]
    topic_set: Option<String>,
    /// bow, boc or bor.
    #[arg(long = "repr", global = true)]
    representation: Option<String>,
    /// doc or passage.
    #[arg(long = "gran", global = true)]
    granularity: Option<String>,
    #[arg(long, global = true)]
    k1: Option<String>,
    #[arg(long, global = true)]
    b: Option<String>,
    #[arg(long, global = true)]
    top_k: Option<String>,
    #[arg(long, global = true)]
    passage_len: Option<String>,
    #[arg(long, global = true)]
    cutoff: Option<String>,
    /// on or off.
    #[arg(long, global = true)]
    stemming: Option<String>,
    /// on or off.
    #[arg(long, global = true)]
    stopwords: Option<String>,
    /// Any configuration key, as `key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the corpus and topics and write the sentence listing.
    Ingest,
    /// Link concept mentions in documents and topics.
    Link,
    /// Produce relation annotations, rule-based or from an external file.
    Extract {
        /// Annotation file to validate and adopt instead of running the rules.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Build the index for the configured representation and granularity.
    Index,
    /// Rank the topic set against the built index.
    Search {
        /// Rank one topic and print its results instead of writing a run.
        #[arg(long)]
        topic: Option<String>,
    },
    /// Run every stage in order, evaluating when judgments are configured.
    Batch,
    /// Score a run file with nDCG.
    Eval {
        /// Run file; defaults to the configured run path.
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Compare two runs per topic with a paired t-test.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Leave out topics where the first run scored 0.
        #[arg(long)]
        zero_filter: bool,
        /// Output file; defaults to `compare.<tagA>.<tagB>.txt` in the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(io) if io.kind() == io::ErrorKind::NotFound => 2,
            Error::Malformed { .. }
            | Error::KnowledgeBase(_)
            | Error::DuplicateUnit(_)
            | Error::UnsortedRun(_) => 3,
            Error::Parameter(_) => 4,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

type CliResult<T> = Result<T, Failure>;

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    value.as_deref().ok_or_else(|| Failure {
        code: 2,
        message: format!("no `{key}` input configured"),
    })
}

fn resolve_config(cli: &Cli) -> CliResult<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            open(path)?;
            PipelineConfig::from_file(path)?
        }
        None => PipelineConfig::default(),
    };
    let o = &cli.overrides;
    let cwd = Path::new("");
    let flags = [
        ("corpus", &o.corpus),
        ("topics", &o.topics),
        ("qrels", &o.qrels),
        ("kb_concepts", &o.kb_concepts),
        ("kb_relations", &o.kb_relations),
        ("work_dir", &o.work_dir),
        ("topic_set", &o.topic_set),
        ("representation", &o.representation),
        ("granularity", &o.granularity),
        ("k1", &o.k1),
        ("b", &o.b),
        ("top_k", &o.top_k),
        ("passage_len", &o.passage_len),
        ("cutoff", &o.cutoff),
        ("stemming", &o.stemming),
        ("stopwords", &o.stopwords),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            config.set(key, v, cwd)?;
        }
    }
    for kv in &o.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Parameter(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        config.set(k.trim(), v.trim(), cwd)?;
    }
    config.validate()?;
    Ok(config)
}

struct Ctx {
    config: PipelineConfig,
    hash: String,
}

impl Ctx {
    fn header(&self) -> String {
        header(&self.hash)
    }

    /// Writes an artifact that starts with the config header line.
    fn write(&self, path: &Path, body: impl FnOnce(&mut dyn Write) -> semrel::Result<()>) -> CliResult<()> {
        let mut w = create(path)?;
        writeln!(w, "{}", self.header())?;
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn collection(&self, with_documents: bool) -> CliResult<Collection> {
        let docs = if with_documents {
            pipeline::load_documents(required(&self.config.corpus, "corpus")?)?
        } else {
            Vec::new()
        };
        let topics = pipeline::load_topics(required(&self.config.topics, "topics")?)?;
        Ok(Collection::new(&docs, &topics, self.config.text)?)
    }

    /// Loads whatever annotation artifacts the term space needs.
    fn annotations(&self, space: TermSpace) -> CliResult<Annotations> {
        Ok(match space {
            TermSpace::Word => Annotations::default(),
            TermSpace::Concept => {
                Annotations::from_lists(pipeline::load_mentions(&self.config.mentions_path())?, Vec::new())
            }
            TermSpace::Relation => {
                Annotations::from_lists(Vec::new(), pipeline::load_annotations(&self.config.annotations_path())?)
            }
        })
    }
}

fn ingest(ctx: &Ctx) -> CliResult<()> {
    let c = &ctx.config;
    let docs = pipeline::load_documents(required(&c.corpus, "corpus")?)?;
    let topics = pipeline::load_topics(required(&c.topics, "topics")?)?;
    let judgments = match &c.qrels {
        Some(p) => Some(pipeline::load_qrels(p)?.len()),
        None => None,
    };
    let title_only = docs.iter().filter(|d| d.abstract_text.trim().is_empty()).count();
    let collection = Collection::new(&docs, &topics, c.text)?;
    let path = c.sentences_path();
    ctx.write(&path, |w| collection.write_sentences(w))?;
    println!(
        "ingest: {} documents ({} title-only), {} topics, {} judgments, {} sentences -> {}",
        docs.len(),
        title_only,
        topics.len(),
        judgments.map_or("no".to_string(), |n| n.to_string()),
        collection.sentence_count(),
        path.display()
    );
    Ok(())
}

fn link(ctx: &Ctx) -> CliResult<()> {
    let c = &ctx.config;
    let kb = pipeline::load_kb(required(&c.kb_concepts, "kb_concepts")?, required(&c.kb_relations, "kb_relations")?)?;
    let collection = ctx.collection(true)?;
    let lexicon = Lexicon::build(&kb, Normalizer::new(c.text));
    let mentions: Vec<_> = collection.link(&lexicon).into_values().flatten().collect();
    let path = c.mentions_path();
    ctx.write(&path, |w| write_mentions(&mentions, w))?;
    let cuis: BTreeSet<&str> = mentions.iter().map(|m| m.cui.as_str()).collect();
    let texts: BTreeSet<&str> = mentions.iter().map(|m| m.text_id.as_str()).collect();
    println!(
        "link: {} mentions of {} concepts in {} texts ({} lexicon keys) -> {}",
        mentions.len(),
        cuis.len(),
        texts.len(),
        lexicon.len(),
        path.display()
    );
    Ok(())
}

fn extract(ctx: &Ctx, input: Option<&Path>) -> CliResult<()> {
    let c = &ctx.config;
    let input = input.or(c.annotations_input.as_deref());
    let (method, instances) = match input {
        Some(p) => ("external", pipeline::load_annotations(p)?),
        None => {
            let kb = pipeline::load_kb(
                required(&c.kb_concepts, "kb_concepts")?,
                required(&c.kb_relations, "kb_relations")?,
            )?;
            let grouped = Annotations::from_lists(pipeline::load_mentions(&c.mentions_path())?, Vec::new());
            let relations = Annotations::extract_all(&grouped.mentions, &kb);
            ("rule", relations.into_values().flatten().collect())
        }
    };
    let path = c.annotations_path();
    ctx.write(&path, |w| write_annotations(&instances, w))?;
    let tokens: BTreeSet<String> = instances.iter().map(|r| r.token().into_string()).collect();
    let texts: BTreeSet<&str> = instances.iter().map(|r| r.text_id.as_str()).collect();
    println!(
        "extract ({method}): {} relation instances, {} distinct relations, {} texts -> {}",
        instances.len(),
        tokens.len(),
        texts.len(),
        path.display()
    );
    Ok(())
}

fn index(ctx: &Ctx) -> CliResult<()> {
    let c = &ctx.config;
    let space = c.representation.space();
    let collection = ctx.collection(true)?;
    let annotations = ctx.annotations(space)?;
    let idx = collection.index(&annotations, space, c.granularity, c.ranking.passage_len)?;
    let path = c.index_path();
    let mut w = create(&path)?;
    idx.write_to(
        &mut w,
        &[
            format!("config={}", ctx.hash),
            format!("passage_len={}", c.ranking.passage_len),
        ],
    )?;
    w.flush()?;
    println!(
        "index: {}/{} {} units, {} terms, avgdl {:.4} -> {}",
        c.representation,
        c.granularity,
        idx.n_units(),
        idx.terms().count(),
        idx.avgdl(),
        path.display()
    );
    Ok(())
}

fn load_index(ctx: &Ctx) -> CliResult<InvertedIndex> {
    let c = &ctx.config;
    let idx = InvertedIndex::read_from(open(&c.index_path())?)?;
    if idx.space() != c.representation.space() || idx.granularity() != c.granularity {
        return Err(Error::Parameter(format!(
            "index at {} is {}/{}, but {}/{} was requested",
            c.index_path().display(),
            idx.space(),
            idx.granularity(),
            c.representation.space(),
            c.granularity
        ))
        .into());
    }
    Ok(idx)
}

fn search(ctx: &Ctx, topic: Option<&str>) -> CliResult<()> {
    let c = &ctx.config;
    let idx = load_index(ctx)?;
    let collection = ctx.collection(false)?;
    let annotations = ctx.annotations(idx.space())?;
    let mut queries = collection.queries(&annotations)?;
    let tag = c.run_tag();
    if let Some(id) = topic {
        queries.retain(|q| q.topic_id == id);
        if queries.is_empty() {
            return Err(Error::Parameter(format!("unknown topic `{id}`")).into());
        }
        let run = pipeline::run_queries(&queries, &idx, &c.ranking, &tag)?;
        if run.na_topics.contains(id) {
            println!("{id}: NA (no query relations)");
        } else {
            write_run(&run.entries, io::stdout().lock())?;
        }
        return Ok(());
    }
    let run = pipeline::run_queries(&queries, &idx, &c.ranking, &tag)?;
    let path = c.run_path();
    ctx.write(&path, |w| write_run(&run.entries, w))?;
    ctx.write(&pipeline::na_path(&path), |w| pipeline::write_na(&run.na_topics, w))?;
    println!("search: {} -> {}", pipeline::run_summary(&run, queries.len()), path.display());
    Ok(())
}

fn eval(ctx: &Ctx, run: Option<&Path>) -> CliResult<()> {
    let c = &ctx.config;
    let run_path = run.map(Path::to_path_buf).unwrap_or_else(|| c.run_path());
    let qrels = Qrels::new(&pipeline::load_qrels(required(&c.qrels, "qrels")?)?);
    let topics: Option<Vec<String>> = match &c.topics {
        Some(p) => Some(pipeline::load_topics(p)?.into_iter().map(|t| t.topic_id).collect()),
        None => None,
    };
    let report = pipeline::evaluate_run_file(&run_path, topics.as_deref(), &qrels, &c.eval)?;
    let table = report.to_table();
    let base = run_path.as_os_str().to_owned();
    let with_ext = |ext: &str| {
        let mut s = base.clone();
        s.push(ext);
        PathBuf::from(s)
    };
    let table_path = with_ext(".eval");
    ctx.write(&table_path, |w| Ok(w.write_all(table.as_bytes())?))?;
    ctx.write(&with_ext(".eval.tsv"), |w| Ok(w.write_all(report.to_tsv().as_bytes())?))?;
    print!("{table}");
    println!(
        "eval: {} mean nDCG {} over {} topics ({} NA) -> {}",
        report.run_tag,
        semrel::eval::fmt_value(report.mean()),
        report.per_topic.len() - report.na_count(),
        report.na_count(),
        table_path.display()
    );
    Ok(())
}

fn compare_runs(ctx: &Ctx, a: &Path, b: &Path, zero_filter: bool, out: Option<&Path>) -> CliResult<()> {
    let c = &ctx.config;
    let qrels = Qrels::new(&pipeline::load_qrels(required(&c.qrels, "qrels")?)?);
    let topics: Option<Vec<String>> = match &c.topics {
        Some(p) => Some(pipeline::load_topics(p)?.into_iter().map(|t| t.topic_id).collect()),
        None => None,
    };
    let ra = pipeline::evaluate_run_file(a, topics.as_deref(), &qrels, &c.eval)?;
    let rb = pipeline::evaluate_run_file(b, topics.as_deref(), &qrels, &c.eval)?;
    let cmp = compare(&ra, &rb, zero_filter);
    let table = cmp.to_table();
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| c.run_dir().join(format!("compare.{}.{}.txt", cmp.tag_a, cmp.tag_b)));
    ctx.write(&path, |w| Ok(w.write_all(table.as_bytes())?))?;
    print!("{table}");
    println!("compare: {} vs {} -> {}", cmp.tag_a, cmp.tag_b, path.display());
    Ok(())
}

fn execute(cli: &Cli) -> CliResult<()> {
    let config = resolve_config(cli)?;
    let hash = config.hash();
    let ctx = Ctx { config, hash };
    match &cli.command {
        Command::Ingest => ingest(&ctx),
        Command::Link => link(&ctx),
        Command::Extract { input } => extract(&ctx, input.as_deref()),
        Command::Index => index(&ctx),
        Command::Search { topic } => search(&ctx, topic.as_deref()),
        Command::Eval { run } => eval(&ctx, run.as_deref()),
        Command::Compare {
            run_a,
            run_b,
            zero_filter,
            out,
        } => compare_runs(&ctx, run_a, run_b, *zero_filter, out.as_deref()),
        Command::Batch => {
            ingest(&ctx)?;
            link(&ctx)?;
            extract(&ctx, None)?;
            index(&ctx)?;
            search(&ctx, None)?;
            if ctx.config.qrels.is_some() {
                eval(&ctx, None)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("semrel: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
