//! Canonical JSON: sorted object keys, no insignificant whitespace, and
//! floats rounded to 9 significant digits then printed in shortest form.
//! Serializing, parsing and re-serializing any document is byte-identical.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{Number, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("non-finite number cannot be serialized")]
    NonFinite,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub const SIGNIFICANT_DIGITS: usize = 9;

/// Rounds to [`SIGNIFICANT_DIGITS`] significant decimal digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let s = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    s.parse().expect("formatted float parses")
}

fn write_f64(out: &mut String, x: f64) -> Result<(), CanonicalError> {
    if !x.is_finite() {
        return Err(CanonicalError::NonFinite);
    }
    let r = round_sig(x);
    // `{}` on f64 prints the shortest round-tripping decimal without exponent.
    let r = if r == 0.0 { 0.0 } else { r };
    write!(out, "{r}").expect("write to String");
    Ok(())
}

fn write_number(out: &mut String, n: &Number) -> Result<(), CanonicalError> {
    if let Some(i) = n.as_i64() {
        write!(out, "{i}").expect("write to String");
        Ok(())
    } else if let Some(u) = n.as_u64() {
        write!(out, "{u}").expect("write to String");
        Ok(())
    } else {
        write_f64(out, n.as_f64().ok_or(CanonicalError::NonFinite)?)
    }
}

fn write_value(out: &mut String, v: &Value) -> Result<(), CanonicalError> {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(out, n)?,
        Value::String(s) => out.push_str(&serde_json::to_string(s)?),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item)?;
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k)?);
                out.push(':');
                write_value(out, &map[k])?;
            }
            out.push('}');
        }
    }
    Ok(())
}

pub fn value_to_string(v: &Value) -> Result<String, CanonicalError> {
    let mut out = String::new();
    write_value(&mut out, v)?;
    Ok(out)
}

/// Canonical serialization of any `Serialize` value.
pub fn to_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    value_to_string(&serde_json::to_value(value)?)
}

/// Canonical serialization with a trailing newline, for files.
pub fn to_file_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    let mut s = to_string(value)?;
    s.push('\n');
    Ok(s)
}
