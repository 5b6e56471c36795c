//! Case-based retrieval of medical literature over three representations of
//! each text: words, linked knowledge-base concepts, and sentence-level
//! relations between those concepts.
//!
//! The pipeline runs parse → sentence split → link → extract → index →
//! rank → evaluate. Each stage lives in its own module; [`pipeline`] wires
//! them together for the `semrel` command-line tool.

pub mod analysis;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod index;
pub mod kb;
pub mod linker;
pub mod pipeline;
pub mod ranker;
pub mod relext;
pub mod textproc;

pub use config::{PipelineConfig, Representation};
pub use corpus::{Document, Grade, QrelEntry, RunEntry, Topic};
pub use error::{Error, Result};
pub use eval::{EvalParams, EvalReport, Qrels, TTest};
pub use index::{Granularity, IndexUnit, InvertedIndex, Posting, TermSpace, UnitTerms};
pub use kb::{Concept, KbRelation, KnowledgeBase};
pub use linker::{ConceptMention, Lexicon};
pub use pipeline::{BatchRun, Collection, Engine};
pub use ranker::{QueryAnalysis, RankingParams, TopicRun};
pub use relext::{RelationInstance, RelationToken, Source};
pub use textproc::{Normalizer, Passage, Sentence, TextOptions, Token};
