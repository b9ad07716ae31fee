//! Corpus records, their line-delimited file formats, and span utilities.

mod io;
mod span;
mod text;
mod types;

pub use io::{
    read_json, read_jsonl, read_records, write_atomic, write_json, write_records, Corpus,
    MANIFEST_FILE,
};
pub use span::{byte_offset, char_len, char_offset, resolve_span, slice_chars};
pub use text::is_single_sentence;
pub use types::*;
