//! Retrieval-augmented answering for developer Q&A, plus the harness
//! that evaluates it.
//!
//! The crate covers the full path from a Stack Exchange dump to an
//! evaluation report:
//!
//! - [`ingest`]: dump parsing, cleaning, filtering, temporal splitting,
//!   and evaluation question sets.
//! - [`embed`]: embedding providers (HTTP or deterministic offline) and
//!   unit-vector plumbing.
//! - [`index`]: exact-scan cosine similarity search with versioned
//!   on-disk persistence.
//! - [`llm`]: chat providers, prompt templates, answer generation and
//!   LLM-as-a-judge scoring.
//! - [`engine`]: the retrieval pipeline variants (question-based and
//!   pseudo-answer-based queries, question or answer targets, full or
//!   sentence granularity), fixed and adaptive thresholding, and
//!   end-to-end answering.
//! - [`stats`]: coverage, score binarization, agreement, and
//!   nonparametric significance tests.
//! - [`runner`]: experiment orchestration and report emission.
//!
//! Every model call goes through a provider trait with deterministic
//! offline implementations, so the whole pipeline runs without network
//! access in tests and mock mode.

pub mod embed;
pub mod engine;
pub mod index;
pub mod ingest;
pub mod llm;
pub mod runner;
pub mod stats;
pub mod util;
