//! Embedded knowledge base: the vector index over question titles,
//! accepted answers, and answer sentences, plus the payload texts the
//! index entries point back to.

use std::collections::HashMap;

use crate::embed::{embed_batch, EmbedProvider};
use crate::index::{CollectionName, Index};
use crate::ingest::QARecord;
use crate::util::RetryPolicy;

use super::EngineError;

pub fn question_doc_id(question_id: i64) -> String {
    format!("q{question_id}")
}

pub fn answer_doc_id(question_id: i64) -> String {
    format!("a{question_id}")
}

pub fn sentence_doc_id(question_id: i64, sentence_idx: usize) -> String {
    format!("s{question_id}.{sentence_idx}")
}

pub fn question_payload_ref(question_id: i64) -> String {
    format!("q:{question_id}")
}

pub fn answer_payload_ref(question_id: i64) -> String {
    format!("a:{question_id}")
}

pub fn sentence_payload_ref(question_id: i64, sentence_idx: usize) -> String {
    format!("s:{question_id}:{sentence_idx}")
}

/// Recovers the question id from a question-title doc id.
pub fn question_id_from_doc(doc_id: &str) -> Option<i64> {
    doc_id.strip_prefix('q')?.parse().ok()
}

/// The searchable corpus: one index entry per question title, accepted
/// answer, and answer sentence, with payload texts resolvable by ref.
#[derive(Debug)]
pub struct KnowledgeBase {
    index: Index,
    payloads: HashMap<String, String>,
    sentence_counts: HashMap<i64, usize>,
    record_count: usize,
}

impl KnowledgeBase {
    /// Embeds every record and builds the three collections. Question
    /// ids key the derived doc ids, so records must have unique ids.
    pub fn build(
        records: &[QARecord],
        embedder: &dyn EmbedProvider,
        retry: &RetryPolicy,
    ) -> Result<Self, EngineError> {
        let mut index = Index::new(embedder.dim());
        index.ensure_collection(CollectionName::QuestionTitles);
        index.ensure_collection(CollectionName::AnswersFull);
        index.ensure_collection(CollectionName::AnswerSentences);

        let mut texts: Vec<String> = Vec::new();
        let mut targets: Vec<(CollectionName, String, String)> = Vec::new();
        for record in records {
            let id = record.question_id;
            texts.push(record.title.clone());
            targets.push((
                CollectionName::QuestionTitles,
                question_doc_id(id),
                question_payload_ref(id),
            ));
            texts.push(record.accepted_answer.clone());
            targets.push((
                CollectionName::AnswersFull,
                answer_doc_id(id),
                answer_payload_ref(id),
            ));
            for (i, sentence) in record.answer_sentences.iter().enumerate() {
                texts.push(sentence.clone());
                targets.push((
                    CollectionName::AnswerSentences,
                    sentence_doc_id(id, i),
                    sentence_payload_ref(id, i),
                ));
            }
        }

        if !texts.is_empty() {
            let vectors = embed_batch(&texts, embedder, retry)?;
            for ((name, doc_id, payload_ref), vector) in targets.into_iter().zip(vectors) {
                index.add(name, doc_id, vector, payload_ref)?;
            }
        }

        Self::from_parts(index, records)
    }

    /// Pairs an already-built index with the records it was built from.
    /// Every record must be present in the index under the standard doc
    /// ids; a miss means the index belongs to a different corpus.
    pub fn from_parts(index: Index, records: &[QARecord]) -> Result<Self, EngineError> {
        let titles = index
            .collection(CollectionName::QuestionTitles)
            .ok_or(EngineError::MissingCollection(CollectionName::QuestionTitles))?;
        let answers = index
            .collection(CollectionName::AnswersFull)
            .ok_or(EngineError::MissingCollection(CollectionName::AnswersFull))?;
        let sentences = index
            .collection(CollectionName::AnswerSentences)
            .ok_or(EngineError::MissingCollection(CollectionName::AnswerSentences))?;

        let mut payloads = HashMap::new();
        let mut sentence_counts = HashMap::new();
        for record in records {
            let id = record.question_id;
            if !titles.contains(&question_doc_id(id)) {
                return Err(EngineError::CorpusIndexMismatch(format!(
                    "question {id} has no title entry in the index"
                )));
            }
            if !answers.contains(&answer_doc_id(id)) {
                return Err(EngineError::CorpusIndexMismatch(format!(
                    "question {id} has no answer entry in the index"
                )));
            }
            for i in 0..record.answer_sentences.len() {
                if !sentences.contains(&sentence_doc_id(id, i)) {
                    return Err(EngineError::CorpusIndexMismatch(format!(
                        "question {id} is missing sentence entry {i} in the index"
                    )));
                }
            }
            payloads.insert(question_payload_ref(id), record.title.clone());
            payloads.insert(answer_payload_ref(id), record.accepted_answer.clone());
            for (i, sentence) in record.answer_sentences.iter().enumerate() {
                payloads.insert(sentence_payload_ref(id, i), sentence.clone());
            }
            sentence_counts.insert(id, record.answer_sentences.len());
        }

        Ok(KnowledgeBase {
            index,
            payloads,
            sentence_counts,
            record_count: records.len(),
        })
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    /// Resolves a payload ref to its stored text.
    pub fn payload(&self, payload_ref: &str) -> Option<&str> {
        self.payloads.get(payload_ref).map(String::as_str)
    }

    pub fn sentence_count(&self, question_id: i64) -> usize {
        self.sentence_counts.get(&question_id).copied().unwrap_or(0)
    }

    /// Number of QA records behind the index.
    pub fn len(&self) -> usize {
        self.record_count
    }

    pub fn is_empty(&self) -> bool {
        self.record_count == 0
    }
}

/// Test fixture: a minimal well-formed record.
#[cfg(test)]
pub(crate) fn test_record(id: i64, title: &str, answer: &str, sentences: &[&str]) -> QARecord {
    use chrono::TimeZone;
    QARecord {
        question_id: id,
        title: title.to_string(),
        question_body: format!("{title} (body)"),
        tags: vec!["java".to_string()],
        creation_date: chrono::Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap(),
        accepted_answer: answer.to_string(),
        answer_sentences: sentences.iter().map(|s| s.to_string()).collect(),
    }
}
