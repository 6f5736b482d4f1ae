//! Streaming parsers for Stack Exchange dump files.
//!
//! `Posts.xml` and `PostLinks.xml` are flat sequences of `<row .../>`
//! elements under one root. Both parsers work event-by-event, so peak
//! memory tracks the largest single row rather than the dump size.
//! Rows with missing or unparseable required attributes are skipped and
//! counted instead of aborting a multi-gigabyte run.

use std::collections::HashSet;
use std::io::BufRead;

use chrono::{DateTime, NaiveDateTime, Utc};
use quick_xml::events::{BytesStart, Event};
use quick_xml::{Reader, XmlVersion};
use serde::{Deserialize, Serialize};

use super::{IngestError, PostType, RawPost};

/// Link type id marking "duplicate of" rows in PostLinks.xml.
const DUPLICATE_LINK_TYPE: i64 = 3;

/// Streaming iterator over the posts in a dump, yielding [`RawPost`]s.
///
/// Rows whose `PostTypeId` is neither question (1) nor answer (2) are
/// skipped silently; rows with broken required attributes are skipped
/// and counted in [`row_errors`](Self::row_errors). A malformed-XML
/// error is yielded once with its byte offset, after which the stream
/// is exhausted.
pub struct PostStream<R: BufRead> {
    reader: Reader<R>,
    buf: Vec<u8>,
    row_errors: u64,
    skipped_types: u64,
    done: bool,
}

impl<R: BufRead> PostStream<R> {
    /// Rows dropped because a required attribute was missing or invalid.
    pub fn row_errors(&self) -> u64 {
        self.row_errors
    }

    /// Rows dropped because their `PostTypeId` was not 1 or 2.
    pub fn skipped_types(&self) -> u64 {
        self.skipped_types
    }

    /// Size of the internal scratch buffer. Diagnostic: stays near the
    /// largest single row seen, independent of dump length.
    pub fn buffer_capacity(&self) -> usize {
        self.buf.capacity()
    }
}

/// Opens a streaming parse over `Posts.xml` content.
pub fn parse_posts<R: BufRead>(dump: R) -> PostStream<R> {
    PostStream {
        reader: Reader::from_reader(dump),
        buf: Vec::new(),
        row_errors: 0,
        skipped_types: 0,
        done: false,
    }
}

impl<R: BufRead> Iterator for PostStream<R> {
    type Item = Result<RawPost, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            self.buf.clear();
            let event = match self.reader.read_event_into(&mut self.buf) {
                Ok(event) => event,
                Err(err) => {
                    self.done = true;
                    return Some(Err(IngestError::Xml {
                        offset: self.reader.buffer_position(),
                        message: err.to_string(),
                    }));
                }
            };
            match event {
                Event::Empty(row) | Event::Start(row) if row.name().as_ref() == b"row" => {
                    match parse_post_row(&row) {
                        Ok(Some(post)) => return Some(Ok(post)),
                        Ok(None) => self.skipped_types += 1,
                        Err(_) => self.row_errors += 1,
                    }
                }
                Event::Eof => {
                    self.done = true;
                    return None;
                }
                _ => {}
            }
        }
    }
}

/// Parses one `<row>` of Posts.xml. `Ok(None)` means an uninteresting
/// post type; `Err` carries a short reason for the row-error counter.
fn parse_post_row(row: &BytesStart<'_>) -> Result<Option<RawPost>, String> {
    let mut id = None;
    let mut post_type_id = None;
    let mut accepted_answer_id = None;
    let mut parent_id = None;
    let mut creation_date = None;
    let mut title = None;
    let mut body = String::new();
    let mut tags = Vec::new();
    let mut closed_date = None;

    for attr in row.attributes() {
        let attr = attr.map_err(|e| e.to_string())?;
        let value = attr.normalized_value(XmlVersion::default()).map_err(|e| e.to_string())?;
        match attr.key.as_ref() {
            b"Id" => id = Some(parse_i64(&value)?),
            b"PostTypeId" => post_type_id = Some(parse_i64(&value)?),
            b"AcceptedAnswerId" => accepted_answer_id = Some(parse_i64(&value)?),
            b"ParentId" => parent_id = Some(parse_i64(&value)?),
            b"CreationDate" => creation_date = Some(parse_dump_date(&value)?),
            b"Title" => title = Some(value.into_owned()),
            b"Body" => body = value.into_owned(),
            b"Tags" => tags = parse_tags(&value),
            b"ClosedDate" => closed_date = Some(parse_dump_date(&value)?),
            _ => {}
        }
    }

    let id = id.ok_or("missing Id")?;
    let post_type = match post_type_id.ok_or("missing PostTypeId")? {
        1 => PostType::Question,
        2 => PostType::Answer,
        _ => return Ok(None),
    };
    let creation_date = creation_date.ok_or("missing CreationDate")?;
    Ok(Some(RawPost {
        id,
        post_type,
        accepted_answer_id,
        parent_id,
        creation_date,
        title,
        body,
        tags,
        closed_date,
    }))
}

fn parse_i64(value: &str) -> Result<i64, String> {
    value
        .trim()
        .parse()
        .map_err(|_| format!("invalid integer {value:?}"))
}

/// Dump dates look like `2019-03-11T12:51:01.480` (naive, UTC by
/// convention); RFC 3339 with an explicit offset is also accepted.
fn parse_dump_date(value: &str) -> Result<DateTime<Utc>, String> {
    let trimmed = value.trim();
    if let Ok(naive) = NaiveDateTime::parse_from_str(trimmed, "%Y-%m-%dT%H:%M:%S%.f") {
        return Ok(naive.and_utc());
    }
    DateTime::parse_from_rfc3339(trimmed)
        .map(|dt| dt.with_timezone(&Utc))
        .map_err(|_| format!("invalid date {value:?}"))
}

/// Tags arrive as `<java><arrays>` (older dumps) or `|java|arrays|`
/// (newer dumps).
fn parse_tags(raw: &str) -> Vec<String> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Vec::new();
    }
    let inner = if let Some(stripped) = trimmed
        .strip_prefix('<')
        .and_then(|t| t.strip_suffix('>'))
    {
        stripped.split("><")
    } else {
        return trimmed
            .split('|')
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
    };
    inner.filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// Counters from a PostLinks.xml pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostLinkStats {
    /// Total `<row>` elements seen.
    pub rows: u64,
    /// Rows with the duplicate link type.
    pub duplicate_links: u64,
    /// Rows dropped for missing or invalid attributes.
    pub row_errors: u64,
}

/// Reads `PostLinks.xml` and returns the ids of posts marked as
/// duplicates (`LinkTypeId=3`, where `PostId` is the duplicate side).
pub fn parse_post_links<R: BufRead>(
    links: R,
) -> Result<(HashSet<i64>, PostLinkStats), IngestError> {
    let mut reader = Reader::from_reader(links);
    let mut buf = Vec::new();
    let mut duplicate_ids = HashSet::new();
    let mut stats = PostLinkStats::default();
    loop {
        buf.clear();
        let event = match reader.read_event_into(&mut buf) {
            Ok(event) => event,
            Err(err) => {
                return Err(IngestError::Xml {
                    offset: reader.buffer_position(),
                    message: err.to_string(),
                })
            }
        };
        match event {
            Event::Empty(row) | Event::Start(row) if row.name().as_ref() == b"row" => {
                stats.rows += 1;
                match parse_link_row(&row) {
                    Ok(Some(post_id)) => {
                        stats.duplicate_links += 1;
                        duplicate_ids.insert(post_id);
                    }
                    Ok(None) => {}
                    Err(_) => stats.row_errors += 1,
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    Ok((duplicate_ids, stats))
}

/// Parses one PostLinks row, returning the `PostId` when it is a
/// duplicate link.
fn parse_link_row(row: &BytesStart<'_>) -> Result<Option<i64>, String> {
    let mut post_id = None;
    let mut link_type_id = None;
    for attr in row.attributes() {
        let attr = attr.map_err(|e| e.to_string())?;
        let value = attr.normalized_value(XmlVersion::default()).map_err(|e| e.to_string())?;
        match attr.key.as_ref() {
            b"PostId" => post_id = Some(parse_i64(&value)?),
            b"LinkTypeId" => link_type_id = Some(parse_i64(&value)?),
            _ => {}
        }
    }
    let post_id = post_id.ok_or("missing PostId")?;
    let link_type_id = link_type_id.ok_or("missing LinkTypeId")?;
    Ok((link_type_id == DUPLICATE_LINK_TYPE).then_some(post_id))
}
