//! Q&A pairing, eligibility filtering, and the temporal corpus split.

use std::collections::{HashMap, HashSet};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::clean::clean_text_spans;
use super::sentences::split_sentences_protected;
use super::{PostType, QARecord, RawPost, SplitCorpus};

/// How duplicate questions are recognized.
pub enum DuplicatePolicy {
    /// Ids collected from PostLinks duplicate rows.
    Ids(HashSet<i64>),
    /// No PostLinks available: treat closed questions as duplicates.
    ClosedDate,
}

impl DuplicatePolicy {
    fn is_duplicate(&self, question: &RawPost) -> bool {
        match self {
            DuplicatePolicy::Ids(ids) => ids.contains(&question.id),
            DuplicatePolicy::ClosedDate => question.closed_date.is_some(),
        }
    }
}

/// Tag filter used when none is configured.
pub fn default_allowed_tags() -> HashSet<String> {
    HashSet::from(["java".to_string(), "python".to_string()])
}

/// Counters describing one filtering pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub questions_seen: u64,
    pub answers_seen: u64,
    pub emitted: u64,
    /// Question had no allowed tag.
    pub dropped_tag: u64,
    /// Question matched the duplicate policy.
    pub dropped_duplicate: u64,
    /// Question carried no AcceptedAnswerId.
    pub dropped_no_accepted: u64,
    /// AcceptedAnswerId pointed at a post that is not in the input.
    pub dangling_accepted: u64,
    /// Question row had no title or the answer cleaned to nothing.
    pub dropped_unusable: u64,
}

/// Joins questions with their accepted answers and keeps those that
/// have an allowed tag, are not duplicates, and whose accepted answer
/// actually exists. Answer bodies are cleaned and sentence-split;
/// question bodies are cleaned. Checks run in the order tag, duplicate,
/// accepted-answer presence, answer resolution, so each drop is counted
/// against the first failed rule.
pub fn filter_qa(
    posts: impl IntoIterator<Item = RawPost>,
    duplicates: &DuplicatePolicy,
    allowed_tags: &HashSet<String>,
) -> (Vec<QARecord>, FilterStats) {
    let mut stats = FilterStats::default();
    let mut questions = Vec::new();
    let mut answers: HashMap<i64, RawPost> = HashMap::new();
    for post in posts {
        match post.post_type {
            PostType::Question => {
                stats.questions_seen += 1;
                questions.push(post);
            }
            PostType::Answer => {
                stats.answers_seen += 1;
                answers.insert(post.id, post);
            }
        }
    }

    let mut records = Vec::new();
    for question in questions {
        if !question.tags.iter().any(|t| allowed_tags.contains(t)) {
            stats.dropped_tag += 1;
            continue;
        }
        if duplicates.is_duplicate(&question) {
            stats.dropped_duplicate += 1;
            continue;
        }
        let Some(accepted_id) = question.accepted_answer_id else {
            stats.dropped_no_accepted += 1;
            continue;
        };
        let Some(answer) = answers.get(&accepted_id) else {
            stats.dangling_accepted += 1;
            continue;
        };
        let (accepted_answer, code_spans) = clean_text_spans(&answer.body);
        let answer_sentences = split_sentences_protected(&accepted_answer, &code_spans);
        let Some(title) = question.title.clone().filter(|t| !t.trim().is_empty()) else {
            stats.dropped_unusable += 1;
            continue;
        };
        if accepted_answer.is_empty() {
            stats.dropped_unusable += 1;
            continue;
        }
        stats.emitted += 1;
        records.push(QARecord {
            question_id: question.id,
            title,
            question_body: super::clean_text(&question.body),
            tags: question.tags,
            creation_date: question.creation_date,
            accepted_answer,
            answer_sentences,
        });
    }
    (records, stats)
}

/// Default knowledge-base cutoff: midnight UTC, 2023-05-01. Records on
/// or after this instant form the unseen pool.
pub fn default_cutoff() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 5, 1, 0, 0, 0)
        .single()
        .expect("fixed valid timestamp")
}

/// Splits records into pre-cutoff knowledge base and post-cutoff unseen
/// pool, preserving input order within each side.
pub fn temporal_split(records: Vec<QARecord>, cutoff: DateTime<Utc>) -> SplitCorpus {
    let mut kb = Vec::new();
    let mut unseen_pool = Vec::new();
    for record in records {
        if record.creation_date < cutoff {
            kb.push(record);
        } else {
            unseen_pool.push(record);
        }
    }
    SplitCorpus {
        kb,
        unseen_pool,
        cutoff,
    }
}
