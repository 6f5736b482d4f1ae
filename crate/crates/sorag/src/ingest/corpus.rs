//! JSONL persistence for corpora, question sets, and the ingest manifest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{EvalQuestion, FilterStats, IngestError, PostLinkStats, QARecord};

/// Summary of one ingest run, written beside the corpus files so later
/// stages can see what produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestManifest {
    pub cutoff: DateTime<Utc>,
    /// "post_links" or "closed_date".
    pub duplicate_policy: String,
    /// Sorted for stable output.
    pub allowed_tags: Vec<String>,
    pub posts_row_errors: u64,
    pub posts_skipped_types: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_links: Option<PostLinkStats>,
    pub filter: FilterStats,
    pub kb_records: usize,
    pub unseen_records: usize,
}

impl IngestManifest {
    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let mut file = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut file, self).map_err(io_invalid)?;
        file.write_all(b"\n")?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let file = BufReader::new(File::open(path)?);
        serde_json::from_reader(file).map_err(|err| IngestError::Record {
            path: path.display().to_string(),
            line: err.line(),
            message: err.to_string(),
        })
    }
}

fn io_invalid(err: serde_json::Error) -> IngestError {
    IngestError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, err))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IngestError> {
    let mut file = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut file, item).map_err(io_invalid)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IngestError> {
    let file = BufReader::new(File::open(path)?);
    let mut items = Vec::new();
    for (idx, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|err| IngestError::Record {
            path: path.display().to_string(),
            line: idx + 1,
            message: err.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

/// Writes knowledge-base records as one JSON object per line.
pub fn write_corpus(path: &Path, records: &[QARecord]) -> Result<(), IngestError> {
    write_jsonl(path, records)
}

/// Reads a JSONL corpus, reporting the offending line on bad records.
pub fn read_corpus(path: &Path) -> Result<Vec<QARecord>, IngestError> {
    read_jsonl(path)
}

/// Writes an evaluation question set as JSONL.
pub fn write_questions(path: &Path, questions: &[EvalQuestion]) -> Result<(), IngestError> {
    write_jsonl(path, questions)
}

/// Reads an evaluation question set from JSONL.
pub fn read_questions(path: &Path) -> Result<Vec<EvalQuestion>, IngestError> {
    read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::QuestionOrigin;

    fn sample_record(id: i64) -> QARecord {
        QARecord {
            question_id: id,
            title: format!("Title {id}"),
            question_body: "body".into(),
            tags: vec!["java".into()],
            creation_date: "2020-01-01T00:00:00Z".parse().unwrap(),
            accepted_answer: "Answer.".into(),
            answer_sentences: vec!["Answer.".into()],
        }
    }

    #[test]
    fn corpus_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.jsonl");
        let records = vec![sample_record(1), sample_record(2)];
        write_corpus(&path, &records).unwrap();
        let back = read_corpus(&path).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn questions_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("questions.jsonl");
        let questions = vec![
            EvalQuestion {
                id: 1,
                question_text: "How?".into(),
                reference_answer: Some("Like this.".into()),
                origin: QuestionOrigin::Unseen,
            },
            EvalQuestion {
                id: 2,
                question_text: "Why?".into(),
                reference_answer: None,
                origin: QuestionOrigin::Synthetic,
            },
        ];
        write_questions(&path, &questions).unwrap();
        let back = read_questions(&path).unwrap();
        assert_eq!(back, questions);
    }

    #[test]
    fn bad_line_reports_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.jsonl");
        let good = serde_json::to_string(&sample_record(1)).unwrap();
        std::fs::write(&path, format!("{good}\nnot json\n")).unwrap();
        match read_corpus(&path) {
            Err(IngestError::Record { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected record error, got {other:?}"),
        }
    }

    #[test]
    fn blank_lines_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.jsonl");
        let good = serde_json::to_string(&sample_record(1)).unwrap();
        std::fs::write(&path, format!("\n{good}\n\n")).unwrap();
        assert_eq!(read_corpus(&path).unwrap().len(), 1);
    }

    #[test]
    fn manifest_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let manifest = IngestManifest {
            cutoff: "2023-05-01T00:00:00Z".parse().unwrap(),
            duplicate_policy: "post_links".into(),
            allowed_tags: vec!["java".into(), "python".into()],
            posts_row_errors: 1,
            posts_skipped_types: 2,
            post_links: Some(PostLinkStats {
                rows: 4,
                duplicate_links: 2,
                row_errors: 0,
            }),
            filter: FilterStats::default(),
            kb_records: 10,
            unseen_records: 3,
        };
        manifest.save(&path).unwrap();
        let back = IngestManifest::load(&path).unwrap();
        assert_eq!(back.kb_records, 10);
        assert_eq!(back.post_links, manifest.post_links);
    }
}
