//! Canonical JSON encoding.
//!
//! Object keys are sorted bytewise, no insignificant whitespace is emitted,
//! numbers use the shortest representation that round-trips, and strings use
//! the standard JSON escapes. The same encoding is used for payload hashing,
//! event log lines, wire bodies and state digests.

use serde::Serialize;
use serde_json::{Number, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum CanonicalError {
    #[error("document contains a non-finite number")]
    NonFiniteNumber,
    #[error("value cannot be represented as JSON: {0}")]
    Unrepresentable(#[from] serde_json::Error),
}

/// Encodes a document into its canonical byte form.
pub fn to_canonical_vec(value: &Value) -> Result<Vec<u8>, CanonicalError> {
    let mut out = Vec::with_capacity(128);
    write_value(value, &mut out)?;
    Ok(out)
}

/// Serializes any `Serialize` value through `serde_json::Value` and encodes it canonically.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    let value = serde_json::to_value(value)?;
    let bytes = to_canonical_vec(&value)?;
    // The writer only ever emits UTF-8.
    Ok(String::from_utf8(bytes).expect("canonical encoding is UTF-8"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_value(value: &Value, out: &mut Vec<u8>) -> Result<(), CanonicalError> {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => write_number(n, out)?,
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out)?;
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_unstable_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (key, item)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                write_value(item, out)?;
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_number(n: &Number, out: &mut Vec<u8>) -> Result<(), CanonicalError> {
    if n.is_f64() {
        let f = n.as_f64().ok_or(CanonicalError::NonFiniteNumber)?;
        if !f.is_finite() {
            return Err(CanonicalError::NonFiniteNumber);
        }
        // -0.0 compares equal to 0.0, so both must encode identically.
        let f = if f == 0.0 { 0.0 } else { f };
        let n = Number::from_f64(f).ok_or(CanonicalError::NonFiniteNumber)?;
        // Exponents are written without a redundant '+' sign.
        out.extend_from_slice(n.to_string().replacen("e+", "e", 1).as_bytes());
    } else {
        out.extend_from_slice(n.to_string().as_bytes());
    }
    Ok(())
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    // serde_json's string escaping is already minimal and deterministic.
    let encoded = serde_json::to_string(s).expect("strings always serialize");
    out.extend_from_slice(encoded.as_bytes());
}
