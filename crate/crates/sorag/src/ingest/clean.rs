//! HTML/markdown cleaning for post bodies.
//!
//! The cleaner turns dump HTML into single-line plain text:
//! known HTML tags are removed, entities decoded, markdown emphasis,
//! heading and link syntax stripped, and whitespace runs collapsed.
//! Contents of `<code>`/`<pre>` elements and backtick spans are kept
//! inline (code is the payload of developer answers) and shielded from
//! markdown stripping; [`clean_text_spans`] reports where that code
//! landed in the output so sentence splitting can avoid it.
//!
//! Tag removal is restricted to real HTML tag names, so angle-bracket
//! text like `<java>` or `List<String>` survives. Entity decoding runs
//! to completion (`&amp;lt;` ends up as `<`), which keeps the output
//! stable under re-cleaning for ordinary post content. The known hole:
//! code whose decoded text spells an HTML tag or a backtick is clean on
//! the first pass but no longer recognizable as code afterwards.

use std::ops::Range;

/// HTML elements whose tags are stripped. Anything else in angle
/// brackets (generics, type parameters, tag mentions) is left alone.
const KNOWN_TAGS: &[&str] = &[
    "a", "abbr", "b", "blockquote", "body", "br", "caption", "cite", "code", "col", "colgroup",
    "dd", "del", "details", "div", "dl", "dt", "em", "h1", "h2", "h3", "h4", "h5", "h6", "head",
    "hr", "html", "i", "img", "ins", "kbd", "li", "ol", "p", "pre", "q", "s", "samp", "small",
    "span", "strike", "strong", "sub", "summary", "sup", "table", "tbody", "td", "tfoot", "th",
    "thead", "tr", "u", "ul", "var",
];

/// Block-level elements are replaced by a space so adjacent text does
/// not fuse; inline elements vanish without a trace.
const BLOCK_TAGS: &[&str] = &[
    "blockquote", "body", "br", "caption", "col", "colgroup", "dd", "details", "div", "dl", "dt",
    "h1", "h2", "h3", "h4", "h5", "h6", "head", "hr", "html", "li", "ol", "p", "pre", "summary",
    "table", "tbody", "td", "tfoot", "th", "thead", "tr", "ul",
];

fn is_known_tag(name: &str) -> bool {
    KNOWN_TAGS.binary_search(&name).is_ok()
}

fn is_block_tag(name: &str) -> bool {
    BLOCK_TAGS.binary_search(&name).is_ok()
}

/// Cleans HTML/markdown to collapsed plain text. Never fails.
pub fn clean_text(html: &str) -> String {
    clean_text_spans(html).0
}

/// Like [`clean_text`], also returning the byte ranges of the output
/// that came from code spans (sorted, non-overlapping).
pub fn clean_text_spans(html: &str) -> (String, Vec<Range<usize>>) {
    let segments = segment(html);
    let mut pieces: Vec<(bool, String)> = Vec::with_capacity(segments.len());
    for seg in segments {
        match seg {
            Segment::Text(t) => {
                let stripped = strip_tags(t);
                let decoded = decode_entities(&stripped);
                pieces.push((false, strip_markdown(&decoded)));
            }
            Segment::Code(c) => {
                // Inner structural code tags show up inside <pre> wrappers.
                let stripped = strip_code_wrapper_tags(c);
                pieces.push((true, decode_entities(&stripped)));
            }
        }
    }
    collapse(&pieces)
}

enum Segment<'a> {
    Text(&'a str),
    Code(&'a str),
}

/// Splits raw input into text and code segments. Code containers:
/// `<pre>..</pre>`, `<code>..</code>`, fenced ``` blocks and single
/// backtick spans. An unclosed container runs to end of input.
fn segment(input: &str) -> Vec<Segment<'_>> {
    let bytes = input.as_bytes();
    let mut segments = Vec::new();
    let mut text_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if let Some((content_start, content_end, after)) = match bytes[i] {
            b'<' => match_html_code_container(input, i),
            b'`' => match_backtick_container(input, i),
            _ => None,
        } {
            if text_start < i {
                segments.push(Segment::Text(&input[text_start..i]));
            }
            segments.push(Segment::Code(&input[content_start..content_end]));
            i = after;
            text_start = after;
        } else {
            i += 1;
            while i < bytes.len() && !input.is_char_boundary(i) {
                i += 1;
            }
        }
    }
    if text_start < bytes.len() {
        segments.push(Segment::Text(&input[text_start..]));
    }
    segments
}

/// Recognizes `<pre...>` / `<code...>` at `at` and finds its closing tag.
/// Returns (content_start, content_end, resume_index).
fn match_html_code_container(input: &str, at: usize) -> Option<(usize, usize, usize)> {
    let rest = &input[at..];
    for name in ["pre", "code"] {
        if let Some(tag_len) = match_open_tag(rest, name) {
            let content_start = at + tag_len;
            let close = format!("</{name}");
            let content_end = input[content_start..]
                .to_lowercase()
                .find(&close)
                .map(|p| content_start + p);
            return match content_end {
                Some(end) => {
                    let after = input[end..]
                        .find('>')
                        .map(|p| end + p + 1)
                        .unwrap_or(input.len());
                    Some((content_start, end, after))
                }
                None => Some((content_start, input.len(), input.len())),
            };
        }
    }
    None
}

/// Matches `<name ...>` case-insensitively at the start of `s`, returning
/// tag length. Not self-closing (`<code/>` holds no content).
fn match_open_tag(s: &str, name: &str) -> Option<usize> {
    let bytes = s.as_bytes();
    if bytes.len() < name.len() + 2 || bytes[0] != b'<' {
        return None;
    }
    if !s[1..].to_lowercase().starts_with(name) {
        return None;
    }
    let after_name = 1 + name.len();
    match bytes.get(after_name) {
        Some(b'>') => Some(after_name + 1),
        Some(c) if c.is_ascii_whitespace() => {
            let end = scan_tag_end(s, after_name)?;
            if s.as_bytes()[end - 1] == b'/' || s.as_bytes().get(end) != Some(&b'>') {
                return None;
            }
            Some(end + 1)
        }
        _ => None,
    }
}

/// Finds the index of the closing `>` of a tag starting inside `s`,
/// honoring quoted attribute values.
fn scan_tag_end(s: &str, from: usize) -> Option<usize> {
    let bytes = s.as_bytes();
    let mut i = from;
    let mut quote: Option<u8> = None;
    while i < bytes.len() {
        match (quote, bytes[i]) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), _) => {}
            (None, b'"') | (None, b'\'') => quote = Some(bytes[i]),
            (None, b'>') => return Some(i),
            (None, _) => {}
        }
        i += 1;
    }
    None
}

/// Recognizes ```fences``` and `inline` spans at `at`.
fn match_backtick_container(input: &str, at: usize) -> Option<(usize, usize, usize)> {
    let rest = &input[at..];
    if rest.starts_with("```") {
        let mut content_start = at + 3;
        let body = &input[content_start..];
        // Drop a bare language tag on the fence line.
        if let Some(nl) = body.find('\n') {
            let lang = body[..nl].trim();
            if !lang.is_empty() && lang.chars().all(|c| c.is_ascii_alphanumeric()) {
                content_start += nl + 1;
            }
        }
        return match input[content_start..].find("```") {
            Some(p) => Some((content_start, content_start + p, content_start + p + 3)),
            None => Some((content_start, input.len(), input.len())),
        };
    }
    if rest.starts_with('`') {
        let content_start = at + 1;
        // No closer: the backtick is literal text, not a container.
        return input[content_start..]
            .find('`')
            .map(|p| (content_start, content_start + p, content_start + p + 4 - 3));
    }
    None
}

/// Removes structural `<code>`/`</code>` tags living inside a `<pre>`
/// container.
fn strip_code_wrapper_tags(code: &str) -> String {
    let mut out = String::with_capacity(code.len());
    let mut rest = code;
    while let Some(pos) = rest.find('<') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        let lowered = tail.to_lowercase();
        let tag_len = ["<code>", "</code>", "<pre>", "</pre>"]
            .iter()
            .find(|t| lowered.starts_with(*t))
            .map(|t| t.len());
        match tag_len {
            Some(len) => rest = &tail[len..],
            None => {
                out.push('<');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Strips known HTML tags and comments from a text segment.
fn strip_tags(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'<' {
            let next = text[i..]
                .find('<')
                .map(|p| i + p)
                .unwrap_or(text.len());
            out.push_str(&text[i..next]);
            i = next;
            continue;
        }
        let rest = &text[i..];
        if rest.starts_with("<!--") {
            i = rest.find("-->").map(|p| i + p + 3).unwrap_or(text.len());
            out.push(' ');
            continue;
        }
        if rest.starts_with("<!") {
            i = rest.find('>').map(|p| i + p + 1).unwrap_or(text.len());
            out.push(' ');
            continue;
        }
        match parse_tag(rest) {
            Some((name, len)) if is_known_tag(&name) => {
                if is_block_tag(&name) {
                    out.push(' ');
                }
                i += len;
            }
            _ => {
                out.push('<');
                i += 1;
            }
        }
    }
    out
}

/// Parses a tag at the start of `s`, returning its lowercase name and
/// total byte length, or None if `s` does not start a well-formed tag.
fn parse_tag(s: &str) -> Option<(String, usize)> {
    let bytes = s.as_bytes();
    debug_assert_eq!(bytes[0], b'<');
    let mut i = 1;
    if bytes.get(i) == Some(&b'/') {
        i += 1;
    }
    let name_start = i;
    while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
        i += 1;
    }
    if i == name_start {
        return None;
    }
    let name = s[name_start..i].to_lowercase();
    match bytes.get(i) {
        Some(b'>') => Some((name, i + 1)),
        Some(b'/') if bytes.get(i + 1) == Some(&b'>') => Some((name, i + 2)),
        Some(c) if c.is_ascii_whitespace() => {
            let end = scan_tag_end(s, i)?;
            Some((name, end + 1))
        }
        _ => None,
    }
}

const NAMED_ENTITIES: &[(&str, &str)] = &[
    ("amp", "&"),
    ("apos", "'"),
    ("copy", "\u{a9}"),
    ("deg", "\u{b0}"),
    ("gt", ">"),
    ("hellip", "\u{2026}"),
    ("laquo", "\u{ab}"),
    ("ldquo", "\u{201c}"),
    ("lsquo", "\u{2018}"),
    ("lt", "<"),
    ("mdash", "\u{2014}"),
    ("middot", "\u{b7}"),
    ("nbsp", "\u{a0}"),
    ("ndash", "\u{2013}"),
    ("quot", "\""),
    ("raquo", "\u{bb}"),
    ("rdquo", "\u{201d}"),
    ("reg", "\u{ae}"),
    ("rsquo", "\u{2019}"),
    ("sect", "\u{a7}"),
    ("times", "\u{d7}"),
    ("trade", "\u{2122}"),
];

/// Matches one entity at the start of `s` ("&name;", "&#NN;", "&#xHH;"),
/// returning (decoded, consumed bytes).
fn match_entity(s: &str) -> Option<(char, usize)> {
    let bytes = s.as_bytes();
    if bytes.first() != Some(&b'&') {
        return None;
    }
    let semi = s[1..].find(';').map(|p| p + 1)?;
    if semi < 2 || semi > 33 {
        return None;
    }
    let body = &s[1..semi];
    let decoded = if let Some(num) = body.strip_prefix('#') {
        let code = if let Some(hex) = num.strip_prefix('x').or_else(|| num.strip_prefix('X')) {
            u32::from_str_radix(hex, 16).ok()?
        } else {
            num.parse::<u32>().ok()?
        };
        char::from_u32(code).filter(|c| *c != '\u{0}')?
    } else {
        NAMED_ENTITIES
            .iter()
            .find(|(name, _)| *name == body)?
            .1
            .chars()
            .next()
            .expect("entity expansions are non-empty")
    };
    Some((decoded, semi + 1))
}

/// Decodes entities to completion: when a decode yields `&`, the decoder
/// tries to combine it with the following source text and decode again
/// (`&amp;lt;` becomes `<`). The output therefore contains no decodable
/// entity, which keeps cleaning stable under repetition.
pub(crate) fn decode_entities(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < text.len() {
        if text.as_bytes()[i] == b'&' {
            if let Some((mut ch, mut consumed)) = match_entity(&text[i..]) {
                i += consumed;
                // Chase chains like &amp;amp;lt; down to a bare char.
                while ch == '&' {
                    let mut probe = String::from("&");
                    probe.push_str(&text[i..text.len().min(i + 34)]);
                    match match_entity(&probe) {
                        Some((next, used)) => {
                            ch = next;
                            consumed = used - 1;
                            i += consumed;
                        }
                        None => break,
                    }
                }
                out.push(ch);
                continue;
            }
        }
        let ch = text[i..].chars().next().expect("in-bounds char");
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}

/// Strips markdown heading markers, emphasis and links from a text
/// segment (code spans were already carved out).
fn strip_markdown(text: &str) -> String {
    let headed = strip_headings(text);
    let linked = strip_links(&headed);
    let strong = strip_emphasis(&linked, true);
    strip_emphasis(&strong, false)
}

fn strip_headings(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (idx, line) in text.split('\n').enumerate() {
        if idx > 0 {
            out.push('\n');
        }
        let trimmed = line.trim_start_matches(' ');
        let leading = line.len() - trimmed.len();
        let hashes = trimmed.bytes().take_while(|b| *b == b'#').count();
        if leading <= 3 && (1..=6).contains(&hashes) && trimmed[hashes..].starts_with(' ') {
            out.push_str(&line[..leading]);
            out.push_str(&trimmed[hashes + 1..]);
        } else {
            out.push_str(line);
        }
    }
    out
}

/// `[text](url)` -> `text`, `![alt](url)` -> `alt`.
fn strip_links(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let bytes = text.as_bytes();
    while i < bytes.len() {
        let bang = bytes[i] == b'!' && bytes.get(i + 1) == Some(&b'[');
        if bytes[i] == b'[' || bang {
            let open = if bang { i + 1 } else { i };
            if let Some(close) = find_unnested(text, open + 1, b'[', b']') {
                if bytes.get(close + 1) == Some(&b'(') {
                    if let Some(paren) = find_unnested(text, close + 2, b'(', b')') {
                        out.push_str(&text[open + 1..close]);
                        i = paren + 1;
                        continue;
                    }
                }
            }
        }
        let ch = text[i..].chars().next().expect("in-bounds char");
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}

/// Scans for the matching `close` byte starting at `from`, tracking
/// nesting of `open`/`close`. Stops at newlines.
fn find_unnested(text: &str, from: usize, open: u8, close: u8) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut i = from;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'\n' {
            return None;
        }
        if b == open {
            depth += 1;
        } else if b == close {
            if depth == 0 {
                return Some(i);
            }
            depth -= 1;
        }
        i += 1;
    }
    None
}

/// Unwraps `**x**`/`__x__` (strong = true) or `*x*`/`_x_` pairs whose
/// markers hug non-space content at word boundaries. Spaced or intraword
/// markers (`a * b`, `snake_case`, `2 * 3`) are left alone.
fn strip_emphasis(text: &str, strong: bool) -> String {
    let chars: Vec<char> = text.chars().collect();
    let width = if strong { 2 } else { 1 };
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        let marker = chars[i];
        if (marker == '*' || marker == '_') && run_len(&chars, i, marker) == width {
            let prev_ok = i == 0 || !chars[i - 1].is_alphanumeric() && chars[i - 1] != marker;
            let next = chars.get(i + width);
            let next_ok = next.is_some_and(|c| !c.is_whitespace() && *c != marker);
            if prev_ok && next_ok {
                if let Some(close) = find_emphasis_close(&chars, i + width, marker, width) {
                    for &c in &chars[i + width..close] {
                        out.push(c);
                    }
                    i = close + width;
                    continue;
                }
            }
        }
        out.push(chars[i]);
        i += 1;
    }
    out
}

fn run_len(chars: &[char], at: usize, marker: char) -> usize {
    chars[at..].iter().take_while(|c| **c == marker).count()
}

fn find_emphasis_close(chars: &[char], from: usize, marker: char, width: usize) -> Option<usize> {
    let mut i = from;
    while i + width <= chars.len() {
        if chars[i] == '\n' {
            return None;
        }
        if run_len(chars, i, marker) == width
            && i > from
            && !chars[i - 1].is_whitespace()
            && chars[i - 1] != marker
        {
            let after = chars.get(i + width);
            if after.is_none_or(|c| !c.is_alphanumeric() && *c != marker) {
                return Some(i);
            }
        }
        i += 1;
    }
    None
}

/// Joins processed pieces, collapsing whitespace runs to single spaces
/// and trimming, while tracking which output bytes came from code.
fn collapse(pieces: &[(bool, String)]) -> (String, Vec<Range<usize>>) {
    let mut out = String::new();
    let mut ranges: Vec<Range<usize>> = Vec::new();
    let mut pending_space = false;
    for (is_code, piece) in pieces {
        for ch in piece.chars() {
            if ch.is_whitespace() {
                pending_space = true;
                continue;
            }
            if pending_space && !out.is_empty() {
                if *is_code && ranges.last().is_some_and(|r| r.end == out.len()) {
                    // Keep a mid-code space inside the protected range.
                    out.push(' ');
                    ranges.last_mut().expect("non-empty ranges").end = out.len();
                } else {
                    out.push(' ');
                }
            }
            pending_space = false;
            let start = out.len();
            out.push(ch);
            if *is_code {
                match ranges.last_mut() {
                    Some(last) if last.end == start => last.end = out.len(),
                    _ => ranges.push(start..out.len()),
                }
            }
        }
    }
    (out, ranges)
}
