//! Character-offset helpers. All offsets count Unicode scalar values, not bytes.

use super::types::Span;
use crate::error::{Error, Result};

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Byte offset of the `char_idx`-th scalar value (or `text.len()` at the end).
pub fn byte_offset(text: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (b, _) in text.char_indices() {
        if count == char_idx {
            return Some(b);
        }
        count += 1;
    }
    (count == char_idx).then_some(text.len())
}

pub fn char_offset(text: &str, byte_idx: usize) -> usize {
    text[..byte_idx].chars().count()
}

pub fn slice_chars(text: &str, span: Span) -> Option<&str> {
    if span.char_start > span.char_end {
        return None;
    }
    let start = byte_offset(text, span.char_start)?;
    let end = byte_offset(text, span.char_end)?;
    text.get(start..end)
}

/// Locates the `occurrence`-th (1-based, non-overlapping) match of `surface`.
pub fn resolve_span(host: &str, surface: &str, occurrence: usize) -> Result<Span> {
    if surface.is_empty() {
        return Err(Error::validation("surface string is empty"));
    }
    if occurrence == 0 {
        return Err(Error::validation("occurrence is 1-based"));
    }
    let matches: Vec<usize> = host.match_indices(surface).map(|(b, _)| b).collect();
    if matches.is_empty() {
        return Err(Error::NotFound(format!("`{surface}` does not occur in host text")));
    }
    let Some(&byte_start) = matches.get(occurrence - 1) else {
        return Err(Error::validation(format!(
            "occurrence {occurrence} out of range: `{surface}` occurs {} time(s)",
            matches.len()
        )));
    };
    let char_start = char_offset(host, byte_start);
    Span::new(char_start, char_start + char_len(surface))
}
