//! Corpus ingestion: Stack Exchange dump parsing, Q&A filtering, text
//! cleaning, sentence splitting, temporal splitting, and evaluation
//! question-set construction.
//!
//! The pipeline goes `Posts.xml -> RawPost -> QARecord -> SplitCorpus`,
//! with `PostLinks.xml` supplying duplicate-question ids. Everything here
//! is deterministic; the only randomness (question sampling) is seeded.

mod clean;
mod corpus;
mod filter;
mod sentences;
mod sets;
mod xml;

pub use clean::{clean_text, clean_text_spans};
pub use corpus::{
    read_corpus, read_questions, write_corpus, write_questions, IngestManifest,
};
pub use filter::{
    default_allowed_tags, default_cutoff, filter_qa, temporal_split, DuplicatePolicy, FilterStats,
};
pub use sentences::{split_sentences, split_sentences_protected};
pub use sets::{build_synthetic_set, build_unseen_set, SyntheticOutcome};
pub use xml::{parse_post_links, parse_posts, PostLinkStats, PostStream};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("xml parse error at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: invalid record: {message}")]
    Record {
        path: String,
        line: usize,
        message: String,
    },
    #[error("cannot balance unseen set: class {0:?} is empty")]
    CannotBalance(String),
    #[error("synthetic set requested {requested} questions from a knowledge base of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("synthetic generation failed for {failed} of {total} samples (over the 10% budget)")]
    TooManyFailures { failed: usize, total: usize },
    #[error("question generator error: {0}")]
    Generator(String),
}

/// Post kind as encoded by `PostTypeId` in the dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostType {
    Question,
    Answer,
}

/// One `<row>` from Posts.xml, lightly typed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawPost {
    pub id: i64,
    pub post_type: PostType,
    pub accepted_answer_id: Option<i64>,
    pub parent_id: Option<i64>,
    pub creation_date: DateTime<Utc>,
    pub title: Option<String>,
    pub body: String,
    pub tags: Vec<String>,
    pub closed_date: Option<DateTime<Utc>>,
}

/// One knowledge-base entry: a question joined with its accepted answer,
/// cleaned and sentence-split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QARecord {
    pub question_id: i64,
    pub title: String,
    pub question_body: String,
    pub tags: Vec<String>,
    pub creation_date: DateTime<Utc>,
    pub accepted_answer: String,
    pub answer_sentences: Vec<String>,
}

/// Temporal partition of a corpus around a cutoff date.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitCorpus {
    /// Records created strictly before the cutoff.
    pub kb: Vec<QARecord>,
    /// Records created on or after the cutoff.
    pub unseen_pool: Vec<QARecord>,
    pub cutoff: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionOrigin {
    Synthetic,
    Unseen,
}

/// An evaluation question, either synthesized from the knowledge base or
/// drawn from the post-cutoff unseen pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalQuestion {
    /// For both origins this is the source question id, so every question
    /// links back to the post it came from.
    pub id: i64,
    pub question_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_answer: Option<String>,
    pub origin: QuestionOrigin,
}
