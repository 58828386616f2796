//! Deterministic result serialization.
//!
//! Every artifact the command-line tool emits goes through this module:
//! JSON documents with keys in sorted order and reals printed with 17
//! significant digits, and CSV tables with a fixed column order. With a
//! fixed seed the bytes are identical across runs and thread counts —
//! object keys live in a `BTreeMap`, floats use one `{:.16e}` format,
//! and nothing iterates a hash map.
//!
//! JSON has no lexical form for NaN or infinities; those values are
//! emitted as the strings `"nan"`, `"inf"`, `"-inf"` so documents stay
//! parseable by any generic reader. CSV cells use the bare tokens.

use crate::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// A JSON document. Construct objects with [`Value::object`]; keys are
/// stored sorted, so insertion order never leaks into the output.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Real(f64),
    Str(String),
    Array(Vec<Value>),
    Object(BTreeMap<String, Value>),
}

impl Value {
    pub fn object<K: Into<String>>(pairs: impl IntoIterator<Item = (K, Value)>) -> Value {
        Value::Object(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn array(items: impl IntoIterator<Item = Value>) -> Value {
        Value::Array(items.into_iter().collect())
    }

    pub fn reals(xs: impl IntoIterator<Item = f64>) -> Value {
        Value::Array(xs.into_iter().map(Value::Real).collect())
    }

    pub fn str(s: impl Into<String>) -> Value {
        Value::Str(s.into())
    }
}

/// 17 significant digits: enough to reproduce any `f64` exactly.
fn push_real(out: &mut String, x: f64) {
    if x.is_nan() {
        out.push_str("\"nan\"");
    } else if x == f64::INFINITY {
        out.push_str("\"inf\"");
    } else if x == f64::NEG_INFINITY {
        out.push_str("\"-inf\"");
    } else {
        let _ = write!(out, "{x:.16e}");
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
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

fn push_value(out: &mut String, v: &Value, indent: usize) {
    const STEP: usize = 2;
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Int(i) => {
            let _ = write!(out, "{i}");
        }
        Value::Real(x) => push_real(out, *x),
        Value::Str(s) => push_escaped(out, s),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&" ".repeat(indent + STEP));
                push_value(out, item, indent + STEP);
            }
            out.push('\n');
            out.push_str(&" ".repeat(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&" ".repeat(indent + STEP));
                push_escaped(out, k);
                out.push_str(": ");
                push_value(out, item, indent + STEP);
            }
            out.push('\n');
            out.push_str(&" ".repeat(indent));
            out.push('}');
        }
    }
}

/// Render a document. The output ends with a newline.
pub fn to_json(v: &Value) -> String {
    let mut out = String::new();
    push_value(&mut out, v, 0);
    out.push('\n');
    out
}

/// A purely numeric table with named columns, for plot-ready CSV.
#[derive(Debug, Clone)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: impl IntoIterator<Item = impl Into<String>>) -> Table {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::InvalidParameter(format!(
                "table row has {} cells, expected {}",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, x) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                if x.is_nan() {
                    out.push_str("nan");
                } else if x.is_infinite() {
                    out.push_str(if *x > 0.0 { "inf" } else { "-inf" });
                } else {
                    let _ = write!(out, "{x:.16e}");
                }
            }
            out.push('\n');
        }
        out
    }

    /// The same table as a JSON array of row objects (column name →
    /// value), for consumers that prefer structured output.
    pub fn to_value(&self) -> Value {
        Value::array(self.rows.iter().map(|row| {
            Value::object(
                self.columns
                    .iter()
                    .zip(row)
                    .map(|(c, x)| (c.clone(), Value::Real(*x))),
            )
        }))
    }
}

/// Write bytes to a path (or stdout for `-`).
pub fn write_output(path: &Path, bytes: &str) -> Result<()> {
    if path.as_os_str() == "-" {
        use std::io::Write;
        std::io::stdout().write_all(bytes.as_bytes())?;
        Ok(())
    } else {
        std::fs::write(path, bytes)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Value {
        // deliberately inserted out of order
        Value::object([
            ("zeta", Value::Real(0.1 + 0.2)),
            ("alpha", Value::Int(-3)),
            (
                "nested",
                Value::object([
                    ("points", Value::reals([1.0, f64::INFINITY, f64::NAN])),
                    ("label", Value::str("a \"quoted\"\nline")),
                    ("flag", Value::Bool(true)),
                    ("nothing", Value::Null),
                ]),
            ),
            ("empty_list", Value::array([])),
            ("empty_obj", Value::object(Vec::<(&str, Value)>::new())),
        ])
    }

    #[test]
    fn keys_are_sorted_and_reals_have_17_digits() {
        let s = to_json(&sample());
        let za = s.find("\"zeta\"").unwrap();
        let aa = s.find("\"alpha\"").unwrap();
        assert!(aa < za, "keys must be sorted:\n{s}");
        assert!(s.contains("3.0000000000000004e-1"), "17-digit real:\n{s}");
        assert!(s.contains("\"inf\"") && s.contains("\"nan\""));
        assert!(s.contains("a \\\"quoted\\\"\\nline"));
    }

    #[test]
    fn serialization_is_byte_deterministic() {
        let a = to_json(&sample());
        let b = to_json(&sample());
        assert_eq!(a.as_bytes(), b.as_bytes());
        // reversed insertion order, same map → same bytes
        let rev = Value::object([
            ("b", Value::Real(2.0)),
            ("a", Value::Real(1.0)),
        ]);
        let fwd = Value::object([
            ("a", Value::Real(1.0)),
            ("b", Value::Real(2.0)),
        ]);
        assert_eq!(to_json(&rev), to_json(&fwd));
    }

    #[test]
    fn json_round_trips_through_a_generic_parser() {
        let s = to_json(&sample());
        let parsed: serde_json::Value = serde_json::from_str(&s).expect("valid JSON");
        assert_eq!(parsed["alpha"], serde_json::json!(-3));
        assert_eq!(parsed["nested"]["flag"], serde_json::json!(true));
        let x = parsed["zeta"].as_f64().unwrap();
        assert_eq!(x, 0.1 + 0.2, "17 digits reproduce the exact f64");
    }

    #[test]
    fn csv_has_the_documented_column_order() {
        let mut t = Table::new(["t", "V", "Mp"]);
        t.push_row(vec![0.0, 1.0, f64::NAN]).unwrap();
        t.push_row(vec![0.5, 1.0, 4.0]).unwrap();
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,V,Mp"));
        let row = lines.next().unwrap();
        assert!(row.starts_with("0.0000000000000000e0,") && row.ends_with(",nan"));
        assert!(t.push_row(vec![1.0]).is_err(), "ragged row rejected");
    }
}
