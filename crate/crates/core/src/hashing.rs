//! SHA-256 helpers used for record ids, cache keys and artifact fingerprints.

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// `<first 12 hex chars of sha256(text)>-<seq>`; `seq` disambiguates identical texts.
pub fn content_id(text: &str, seq: usize) -> String {
    format!("{}-{:04}", &sha256_hex(text.as_bytes())[..12], seq)
}
