//! Canonical JSON reports and content digests.
//!
//! Every machine-readable output of the toolkit goes through one writer so
//! that equal inputs produce byte-identical reports: object keys are
//! sorted, separators carry no whitespace, and every float is printed in
//! scientific notation with seventeen significant digits, enough to round
//! trip any 64-bit value exactly. Inputs are identified by a 64-bit
//! FNV-1a digest of their payload bytes, rendered as sixteen lowercase
//! hex digits.

use std::collections::BTreeMap;

use crate::{Error, Result};

/// A JSON document fragment.
///
/// Objects use a sorted map, so insertion order can never leak into the
/// serialized bytes. Integers stay separate from floats: counts and
/// shapes print as plain integers while measured values always carry an
/// exponent, keeping the two distinguishable in the output.
#[derive(Debug, Clone, PartialEq)]
pub enum JsonValue {
    Bool(bool),
    Int(i64),
    UInt(u64),
    Float(f64),
    Str(String),
    Array(Vec<JsonValue>),
    Object(BTreeMap<String, JsonValue>),
}

impl JsonValue {
    /// Convenience for building objects from pairs.
    pub fn object<const N: usize>(pairs: [(&str, JsonValue); N]) -> JsonValue {
        JsonValue::Object(
            pairs
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        )
    }
}

fn push_escaped(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                out.push_str(&format!("\\u{:04x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

fn write_value(out: &mut String, v: &JsonValue) -> Result<()> {
    match v {
        JsonValue::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        JsonValue::Int(i) => out.push_str(&i.to_string()),
        JsonValue::UInt(u) => out.push_str(&u.to_string()),
        JsonValue::Float(x) => {
            if !x.is_finite() {
                return Err(Error::Domain(format!(
                    "cannot serialize non-finite value {x}"
                )));
            }
            out.push_str(&format!("{x:.16e}"));
        }
        JsonValue::Str(s) => push_escaped(out, s),
        JsonValue::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item)?;
            }
            out.push(']');
        }
        JsonValue::Object(map) => {
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                push_escaped(out, k);
                out.push(':');
                write_value(out, item)?;
            }
            out.push('}');
        }
    }
    Ok(())
}

/// Serializes a value to its canonical byte form (no trailing newline).
///
/// # Errors
/// Domain error if the tree contains a non-finite float.
pub fn to_canonical_json(v: &JsonValue) -> Result<String> {
    let mut out = String::new();
    write_value(&mut out, v)?;
    Ok(out)
}

/// 64-bit FNV-1a over a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// The digest as sixteen lowercase hex digits.
pub fn fnv1a64_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a64(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64_hex(b""), "cbf29ce484222325");
        assert_eq!(fnv1a64_hex(b"a"), "af63dc4c8601ec8c");
        assert_eq!(fnv1a64_hex(b"foobar"), "85944171f73967e8");
        assert_eq!(fnv1a64_hex(&[0x00, 0x01, 0x02, 0x03]), "4475327f98e05411");
    }

    #[test]
    fn keys_serialize_sorted_regardless_of_insertion_order() {
        let a = JsonValue::object([
            ("zeta", JsonValue::Int(1)),
            ("alpha", JsonValue::Int(2)),
            ("mid", JsonValue::Bool(true)),
        ]);
        let b = JsonValue::object([
            ("mid", JsonValue::Bool(true)),
            ("zeta", JsonValue::Int(1)),
            ("alpha", JsonValue::Int(2)),
        ]);
        let sa = to_canonical_json(&a).unwrap();
        assert_eq!(sa, to_canonical_json(&b).unwrap());
        assert_eq!(sa, "{\"alpha\":2,\"mid\":true,\"zeta\":1}");
    }

    #[test]
    fn floats_print_with_seventeen_significant_digits() {
        let third = to_canonical_json(&JsonValue::Float(1.0 / 3.0)).unwrap();
        assert_eq!(third, "3.3333333333333331e-1");
        assert_eq!(third.parse::<f64>().unwrap().to_bits(), (1.0f64 / 3.0).to_bits());
        assert_eq!(to_canonical_json(&JsonValue::Float(0.0)).unwrap(), "0.0000000000000000e0");
        assert_eq!(to_canonical_json(&JsonValue::Float(-2.5)).unwrap(), "-2.5000000000000000e0");
    }

    /// Round trip through an independent JSON parser: the canonical bytes
    /// must be valid JSON, and rebuilding the tree from the parsed form
    /// must reproduce the bytes exactly.
    #[test]
    fn canonical_bytes_survive_an_independent_parser() {
        let doc = JsonValue::object([
            ("name", JsonValue::Str("tilt \"check\"\n".into())),
            ("count", JsonValue::UInt(3)),
            ("offset", JsonValue::Int(-7)),
            (
                "values",
                JsonValue::Array(vec![
                    JsonValue::Float(0.1),
                    JsonValue::Float(-1.0e-300),
                    JsonValue::Float(6.02e23),
                ]),
            ),
            (
                "nested",
                JsonValue::object([("ok", JsonValue::Bool(false))]),
            ),
        ]);
        let text = to_canonical_json(&doc).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();

        fn rebuild(v: &serde_json::Value) -> JsonValue {
            match v {
                serde_json::Value::Bool(b) => JsonValue::Bool(*b),
                serde_json::Value::Number(n) => {
                    if let Some(i) = n.as_i64() {
                        if n.to_string().contains(['e', 'E', '.']) {
                            JsonValue::Float(n.as_f64().unwrap())
                        } else if i >= 0 {
                            JsonValue::UInt(i as u64)
                        } else {
                            JsonValue::Int(i)
                        }
                    } else if let Some(u) = n.as_u64() {
                        JsonValue::UInt(u)
                    } else {
                        JsonValue::Float(n.as_f64().unwrap())
                    }
                }
                serde_json::Value::String(s) => JsonValue::Str(s.clone()),
                serde_json::Value::Array(items) => {
                    JsonValue::Array(items.iter().map(rebuild).collect())
                }
                serde_json::Value::Object(map) => JsonValue::Object(
                    map.iter().map(|(k, v)| (k.clone(), rebuild(v))).collect(),
                ),
                serde_json::Value::Null => unreachable!("writer never emits null"),
            }
        }

        let roundtripped = to_canonical_json(&rebuild(&parsed)).unwrap();
        assert_eq!(roundtripped, text);
    }

    #[test]
    fn control_characters_escape_to_unicode_form() {
        let s = to_canonical_json(&JsonValue::Str("a\u{1}b\tc".into())).unwrap();
        assert_eq!(s, "\"a\\u0001b\\tc\"");
    }

    #[test]
    fn non_finite_floats_are_rejected() {
        assert!(to_canonical_json(&JsonValue::Float(f64::NAN)).is_err());
        let nested = JsonValue::Array(vec![JsonValue::Float(f64::INFINITY)]);
        assert!(to_canonical_json(&nested).is_err());
    }
}
