//! Rule-based sentence splitting for cleaned answer text.
//!
//! A sentence boundary is a run of `.`, `!` or `?` (optionally followed
//! by closing quotes/brackets) with whitespace after it and either end
//! of input or an uppercase letter or digit next. Common abbreviations
//! ("e.g.", "Dr.") and decimals ("3.14") do not split. Splitting never
//! happens inside protected byte ranges, which is how code spans carved
//! out during cleaning (`x.sort()` and friends) stay whole.

use std::ops::Range;

/// Abbreviations whose trailing period is not a sentence boundary, even
/// when an uppercase word follows. Matched case-insensitively on the
/// token before the period.
const ABBREVIATIONS: &[&str] = &[
    "al", "approx", "cf", "dept", "dr", "e.g", "eg", "etc", "fig", "i.e", "ie", "jr", "mr", "mrs",
    "ms", "no", "prof", "sr", "st", "vs",
];

/// Splits cleaned text into trimmed, non-empty sentences.
pub fn split_sentences(text: &str) -> Vec<String> {
    split_sentences_protected(text, &[])
}

/// Like [`split_sentences`], but never splits at a boundary whose
/// terminator falls inside any of `protected` (byte ranges into `text`,
/// sorted or not).
pub fn split_sentences_protected(text: &str, protected: &[Range<usize>]) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut start = 0;
    for boundary in boundaries(text) {
        if protected.iter().any(|r| r.contains(&boundary.terminator)) {
            continue;
        }
        let piece = text[start..boundary.split_at].trim();
        if !piece.is_empty() {
            sentences.push(piece.to_string());
        }
        start = boundary.split_at;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    sentences
}

struct Boundary {
    /// Byte index of the first terminator character of the run.
    terminator: usize,
    /// Byte index where the next sentence starts (after the whitespace).
    split_at: usize,
}

fn boundaries(text: &str) -> Vec<Boundary> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !matches!(bytes[i], b'.' | b'!' | b'?') {
            i += 1;
            continue;
        }
        let terminator = i;
        while i < bytes.len() && matches!(bytes[i], b'.' | b'!' | b'?') {
            i += 1;
        }
        // Closing quotes or brackets ride along with the terminator.
        let mut j = i;
        while j < bytes.len() {
            let ch = text[j..].chars().next().expect("in-bounds char");
            if matches!(ch, '"' | '\'' | ')' | ']' | '}' | '\u{201d}' | '\u{2019}') {
                j += ch.len_utf8();
            } else {
                break;
            }
        }
        let ws_start = j;
        while j < bytes.len() && bytes[j].is_ascii_whitespace() {
            j += 1;
        }
        if j == ws_start && j < bytes.len() {
            continue;
        }
        let next_ok = j >= bytes.len()
            || text[j..]
                .chars()
                .next()
                .is_some_and(|c| c.is_uppercase() || c.is_ascii_digit());
        if !next_ok {
            continue;
        }
        if bytes[terminator] == b'.' && terminator + 1 == i && is_abbreviation(text, terminator) {
            continue;
        }
        out.push(Boundary {
            terminator,
            split_at: j,
        });
    }
    out
}

/// True when the single period at `dot` ends a known abbreviation.
fn is_abbreviation(text: &str, dot: usize) -> bool {
    let before = &text[..dot];
    let token_start = before
        .rfind(|c: char| c.is_whitespace())
        .map(|p| p + 1)
        .unwrap_or(0);
    let token = before[token_start..].to_lowercase();
    ABBREVIATIONS.contains(&token.as_str())
}
