//! Exact-scan vector index over the three knowledge-base collections.
//!
//! Retrieval thresholds are semantic contracts here, so search is a
//! full cosine scan, never approximate: every hit with similarity at or
//! above tau is found, ordered by similarity descending with ties
//! broken by ascending doc id. Persistence is line-oriented JSON with a
//! versioned header per collection, byte-stable for identical inputs.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::UnitVector;

/// On-disk format version this build writes and reads.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("doc_id {0:?} already present in collection")]
    DuplicateDocId(String),
    #[error("vector dim {actual} does not match index dim {expected}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("threshold {0} outside [0,1]")]
    BadThreshold(f64),
    #[error("k must be >= 1")]
    BadK,
    #[error("index file is format version {actual}, this build reads version {expected}")]
    VersionMismatch { expected: u32, actual: u32 },
    #[error("{path}:{line}: corrupt index file: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The three knowledge-base collections the engine retrieves from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectionName {
    QuestionTitles,
    AnswersFull,
    AnswerSentences,
}

impl CollectionName {
    pub const ALL: [CollectionName; 3] = [
        CollectionName::QuestionTitles,
        CollectionName::AnswersFull,
        CollectionName::AnswerSentences,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CollectionName::QuestionTitles => "question_titles",
            CollectionName::AnswersFull => "answers_full",
            CollectionName::AnswerSentences => "answer_sentences",
        }
    }
}

impl fmt::Display for CollectionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One search result. Similarity is clamped into [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: String,
    pub similarity: f64,
    pub payload_ref: String,
}

/// How a hit's similarity must relate to tau to be selected. The
/// default reads "above the threshold" inclusively.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    #[default]
    Inclusive,
    Exclusive,
}

impl ThresholdRule {
    pub fn selects(self, similarity: f64, tau: f64) -> bool {
        match self {
            ThresholdRule::Inclusive => similarity >= tau,
            ThresholdRule::Exclusive => similarity > tau,
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    doc_id: String,
    vector: UnitVector,
    payload_ref: String,
}

/// A named set of (doc_id, vector, payload_ref) entries with unique ids
/// and a single dimension.
#[derive(Debug, Clone)]
pub struct Collection {
    name: CollectionName,
    dim: usize,
    entries: Vec<Entry>,
    ids: std::collections::HashMap<String, usize>,
}

impl Collection {
    pub fn new(name: CollectionName, dim: usize) -> Self {
        Collection {
            name,
            dim,
            entries: Vec::new(),
            ids: std::collections::HashMap::new(),
        }
    }

    pub fn name(&self) -> CollectionName {
        self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stores one entry. Doc ids are unique within the collection.
    pub fn add(
        &mut self,
        doc_id: impl Into<String>,
        vector: UnitVector,
        payload_ref: impl Into<String>,
    ) -> Result<(), IndexError> {
        let doc_id = doc_id.into();
        if vector.dim() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                actual: vector.dim(),
            });
        }
        if self.ids.contains_key(&doc_id) {
            return Err(IndexError::DuplicateDocId(doc_id));
        }
        self.ids.insert(doc_id.clone(), self.entries.len());
        self.entries.push(Entry {
            doc_id,
            vector,
            payload_ref: payload_ref.into(),
        });
        Ok(())
    }

    /// Looks up a stored vector by document id.
    pub fn vector(&self, doc_id: &str) -> Option<&UnitVector> {
        self.ids.get(doc_id).map(|&i| &self.entries[i].vector)
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.ids.contains_key(doc_id)
    }

    /// Iterates entries in insertion order as (doc_id, vector, payload_ref).
    pub fn iter(&self) -> impl Iterator<Item = (&str, &UnitVector, &str)> {
        self.entries
            .iter()
            .map(|e| (e.doc_id.as_str(), &e.vector, e.payload_ref.as_str()))
    }

    /// Threshold-gated top-k scan with the inclusive rule.
    pub fn search(&self, query: &UnitVector, tau: f64, k: usize) -> Result<Vec<Hit>, IndexError> {
        self.search_with(query, tau, k, ThresholdRule::Inclusive)
    }

    /// Exact scan: computes every similarity, keeps those selected by
    /// `rule` against `tau`, sorts by similarity descending then doc_id
    /// ascending, and truncates to `k`.
    pub fn search_with(
        &self,
        query: &UnitVector,
        tau: f64,
        k: usize,
        rule: ThresholdRule,
    ) -> Result<Vec<Hit>, IndexError> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(IndexError::BadThreshold(tau));
        }
        if k == 0 {
            return Err(IndexError::BadK);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        let mut hits: Vec<Hit> = Vec::new();
        for entry in &self.entries {
            let similarity = dot(query.values(), entry.vector.values()).clamp(-1.0, 1.0);
            if rule.selects(similarity, tau) {
                hits.push(Hit {
                    doc_id: entry.doc_id.clone(),
                    similarity,
                    payload_ref: entry.payload_ref.clone(),
                });
            }
        }
        hits.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then_with(|| a.doc_id.cmp(&b.doc_id))
        });
        hits.truncate(k);
        Ok(hits)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A fixed-dimension set of collections, persisted together.
#[derive(Debug, Clone)]
pub struct Index {
    dim: usize,
    collections: BTreeMap<CollectionName, Collection>,
}

impl Index {
    pub fn new(dim: usize) -> Self {
        Index {
            dim,
            collections: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn collection(&self, name: CollectionName) -> Option<&Collection> {
        self.collections.get(&name)
    }

    /// Total entries across collections.
    pub fn len(&self) -> usize {
        self.collections.values().map(Collection::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Creates the collection if absent, leaving an existing one alone.
    /// A present-but-empty collection searches as empty, while an absent
    /// one signals a configuration problem to callers that require it.
    pub fn ensure_collection(&mut self, name: CollectionName) {
        let dim = self.dim;
        self.collections
            .entry(name)
            .or_insert_with(|| Collection::new(name, dim));
    }

    /// Adds one entry, creating the collection on first use.
    pub fn add(
        &mut self,
        name: CollectionName,
        doc_id: impl Into<String>,
        vector: UnitVector,
        payload_ref: impl Into<String>,
    ) -> Result<(), IndexError> {
        let dim = self.dim;
        self.collections
            .entry(name)
            .or_insert_with(|| Collection::new(name, dim))
            .add(doc_id, vector, payload_ref)
    }

    /// Searches one collection; a collection never written to behaves
    /// as empty.
    pub fn search(
        &self,
        name: CollectionName,
        query: &UnitVector,
        tau: f64,
        k: usize,
    ) -> Result<Vec<Hit>, IndexError> {
        self.search_with(name, query, tau, k, ThresholdRule::Inclusive)
    }

    pub fn search_with(
        &self,
        name: CollectionName,
        query: &UnitVector,
        tau: f64,
        k: usize,
        rule: ThresholdRule,
    ) -> Result<Vec<Hit>, IndexError> {
        match self.collections.get(&name) {
            Some(collection) => collection.search_with(query, tau, k, rule),
            None => {
                if !(0.0..=1.0).contains(&tau) {
                    return Err(IndexError::BadThreshold(tau));
                }
                if k == 0 {
                    return Err(IndexError::BadK);
                }
                Ok(Vec::new())
            }
        }
    }

    /// Writes all collections in canonical order. Output is byte-stable
    /// for identical inputs.
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let mut out = BufWriter::new(File::create(path)?);
        for name in CollectionName::ALL {
            let Some(collection) = self.collections.get(&name) else {
                continue;
            };
            let header = SectionHeader {
                format_version: FORMAT_VERSION,
                dim: self.dim,
                name,
                count: collection.len(),
            };
            write_line(&mut out, &header)?;
            for entry in &collection.entries {
                write_line(
                    &mut out,
                    &EntryLine {
                        doc_id: &entry.doc_id,
                        payload_ref: &entry.payload_ref,
                        values: entry.vector.values(),
                    },
                )?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads an index written by [`save`](Self::save), checking the
    /// format version and entry counts.
    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let file = BufReader::new(File::open(path)?);
        let display = path.display().to_string();
        let mut lines = file.lines().enumerate();
        let mut index: Option<Index> = None;

        while let Some((idx, line)) = lines.next() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let header: SectionHeaderOwned =
                serde_json::from_str(&line).map_err(|e| IndexError::Corrupt {
                    path: display.clone(),
                    line: idx + 1,
                    message: format!("expected section header: {e}"),
                })?;
            if header.format_version != FORMAT_VERSION {
                return Err(IndexError::VersionMismatch {
                    expected: FORMAT_VERSION,
                    actual: header.format_version,
                });
            }
            let index = index.get_or_insert_with(|| Index::new(header.dim));
            if header.dim != index.dim {
                return Err(IndexError::Corrupt {
                    path: display.clone(),
                    line: idx + 1,
                    message: format!(
                        "section dim {} disagrees with index dim {}",
                        header.dim, index.dim
                    ),
                });
            }
            let dim = index.dim;
            index
                .collections
                .entry(header.name)
                .or_insert_with(|| Collection::new(header.name, dim));
            for n in 0..header.count {
                let Some((entry_idx, entry_line)) = lines.next() else {
                    return Err(IndexError::Corrupt {
                        path: display.clone(),
                        line: idx + 1,
                        message: format!(
                            "section {} promises {} entries but the file ends after {n}",
                            header.name, header.count
                        ),
                    });
                };
                let entry_line = entry_line?;
                let parsed: EntryLineOwned =
                    serde_json::from_str(&entry_line).map_err(|e| IndexError::Corrupt {
                        path: display.clone(),
                        line: entry_idx + 1,
                        message: format!("bad entry: {e}"),
                    })?;
                let vector =
                    UnitVector::from_unit(parsed.values).map_err(|e| IndexError::Corrupt {
                        path: display.clone(),
                        line: entry_idx + 1,
                        message: format!("bad vector: {e}"),
                    })?;
                index.add(header.name, parsed.doc_id, vector, parsed.payload_ref)?;
            }
        }
        Ok(index.unwrap_or_else(|| Index::new(0)))
    }
}

#[derive(Serialize)]
struct SectionHeader {
    format_version: u32,
    dim: usize,
    name: CollectionName,
    count: usize,
}

#[derive(Deserialize)]
struct SectionHeaderOwned {
    format_version: u32,
    dim: usize,
    name: CollectionName,
    count: usize,
}

#[derive(Serialize)]
struct EntryLine<'a> {
    doc_id: &'a str,
    payload_ref: &'a str,
    values: &'a [f64],
}

#[derive(Deserialize)]
struct EntryLineOwned {
    doc_id: String,
    payload_ref: String,
    values: Vec<f64>,
}

fn write_line<T: Serialize>(out: &mut impl Write, value: &T) -> Result<(), IndexError> {
    let line = serde_json::to_string(value)
        .map_err(|e| IndexError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
    out.write_all(line.as_bytes())?;
    out.write_all(b"\n")?;
    Ok(())
}
