//! Small shared helpers: byte-scanning for secret leakage, canonical JSON
//! bytes, and base64 codecs used by the wire formats.

use base64::engine::general_purpose::{STANDARD as B64, URL_SAFE_NO_PAD as B64URL};
use base64::Engine;
use serde::Serialize;

pub fn b64(bytes: &[u8]) -> String {
    B64.encode(bytes)
}

pub fn b64_decode(s: &str) -> Option<Vec<u8>> {
    B64.decode(s).ok()
}

/// Canonical serialization: struct fields in declaration order, no
/// insignificant whitespace. Signing payloads and the event log both use
/// this, so a value serializes to the same bytes on every run.
pub fn canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("serializable value")
}

/// Search `haystack` for any plausible encoding of `needle`: the raw bytes,
/// lowercase/uppercase hex, standard and URL-safe base64, and the quoted JSON
/// string form. Used by the key-isolation and selective-disclosure checks.
pub fn contains_encoding(haystack: &[u8], needle: &[u8]) -> bool {
    if needle.is_empty() {
        return false;
    }
    let mut candidates: Vec<Vec<u8>> = vec![
        needle.to_vec(),
        hex::encode(needle).into_bytes(),
        hex::encode_upper(needle).into_bytes(),
        B64.encode(needle).into_bytes(),
        B64URL.encode(needle).into_bytes(),
    ];
    // Quoted JSON string form, for text needles.
    if let Ok(text) = std::str::from_utf8(needle) {
        if let Ok(quoted) = serde_json::to_string(text) {
            candidates.push(quoted.into_bytes());
        }
    }
    candidates
        .iter()
        .any(|c| find_subslice(haystack, c).is_some())
}

/// Leak scan tuned for short attribute values inside JSON documents: matches
/// the quoted JSON string form plus anchored base64/hex encodings. Raw
/// substring matching would false-positive on 2-3 character values embedded
/// in unrelated base64 blobs, so short raw/hex needles are skipped.
pub fn contains_value_encoding(haystack: &[u8], value: &str) -> bool {
    let quoted = serde_json::to_string(value).expect("string");
    if find_subslice(haystack, quoted.as_bytes()).is_some() {
        return true;
    }
    let raw = value.as_bytes();
    if raw.len() >= 4 && find_subslice(haystack, raw).is_some() {
        return true;
    }
    for enc in [
        hex::encode(raw),
        B64.encode(raw),
        B64URL.encode(raw),
    ] {
        if enc.len() >= 8 && find_subslice(haystack, enc.as_bytes()).is_some() {
            return true;
        }
    }
    false
}

pub fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    if needle.is_empty() || haystack.len() < needle.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Longest common substring length between two strings, for the
/// pseudonym-unlinkability "no common substring beyond chance" check.
pub fn longest_common_substring(a: &str, b: &str) -> usize {
    let a: Vec<u8> = a.bytes().collect();
    let b: Vec<u8> = b.bytes().collect();
    let mut prev = vec![0usize; b.len() + 1];
    let mut best = 0;
    for i in 1..=a.len() {
        let mut cur = vec![0usize; b.len() + 1];
        for j in 1..=b.len() {
            if a[i - 1] == b[j - 1] {
                cur[j] = prev[j - 1] + 1;
                best = best.max(cur[j]);
            }
        }
        prev = cur;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_raw_hex_and_base64() {
        let secret = [0xAAu8, 0xBB, 0xCC, 0xDD, 0x01, 0x02, 0x03, 0x04];
        let mut doc = b"prefix ".to_vec();
        doc.extend_from_slice(hex::encode(secret).as_bytes());
        assert!(contains_encoding(&doc, &secret));

        let mut doc = b"x".to_vec();
        doc.extend_from_slice(b64(&secret).as_bytes());
        assert!(contains_encoding(&doc, &secret));

        let clean = b"nothing to see here";
        assert!(!contains_encoding(clean, &secret));
    }

    #[test]
    fn value_scan_matches_quoted_json() {
        let doc = br#"{"country":"CY","x":1}"#;
        assert!(contains_value_encoding(doc, "CY"));
        assert!(!contains_value_encoding(br#"{"country":"DE"}"#, "CY"));
    }

    #[test]
    fn value_scan_ignores_short_needle_inside_base64_noise() {
        // "CY" as raw bytes appears inside this base64 blob, but a 2-byte raw
        // match inside unrelated base64 is exactly the false positive the
        // scan must not report.
        let doc = br#"{"blob":"aGVsbG8CYtZXNzYWdl"}"#;
        assert!(!contains_value_encoding(doc, "CY"));
    }

    #[test]
    fn lcs_basic() {
        assert_eq!(longest_common_substring("abcdef", "zzcdezz"), 3);
        assert_eq!(longest_common_substring("abc", "xyz"), 0);
    }
}
