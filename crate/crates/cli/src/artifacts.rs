//! Artifact emission: canonical JSON with fixed float precision, a
//! provenance header on every file, and TSV tables.
//!
//! Identical inputs must produce byte-identical outputs, so floats are
//! rounded to 12 significant digits before the shortest-round-trip
//! formatter runs, and object keys are emitted in sorted order.

use serde::Serialize;
use serde_json::Value;
use std::fmt::Write as _;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// FNV-1a over the canonicalized configuration text.
pub fn config_hash(config_text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in config_text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(seed: u64, config_text: &str) -> Self {
        Provenance {
            tool: "calitr",
            version: TOOL_VERSION,
            seed,
            config_hash: config_hash(config_text),
        }
    }

    /// Comment lines prepended to CSV/TSV artifacts.
    pub fn comment_lines(&self) -> String {
        format!(
            "# calitr {} seed={} config={}\n",
            self.version, self.seed, self.config_hash
        )
    }
}

/// Round to 12 significant digits; the canonical writer then prints the
/// shortest representation of the rounded double.
pub fn round_sig(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.11e}").parse().expect("scientific notation round-trips")
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    let r = round_sig(f);
                    let mut buf = ryu_format(r);
                    if buf == "-0" {
                        buf = "0".into();
                    }
                    out.push_str(&buf);
                    return;
                }
            }
            let _ = write!(out, "{n}");
        }
        Value::String(s) => {
            let _ = write!(out, "{}", Value::String(s.clone()));
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            // serde_json's default map is ordered by key already; emit as is.
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", Value::String(k.clone()));
                out.push(':');
                write_value(out, item);
            }
            out.push('}');
        }
    }
}

fn ryu_format(v: f64) -> String {
    // serde_json uses ryu internally; formatting the rounded value via a
    // one-element serialization keeps the exact same representation.
    serde_json::to_string(&v).expect("finite floats serialize")
}

/// Canonical JSON text of any serializable payload, with a provenance
/// object injected at the top level.
pub fn canonical_json<T: Serialize>(payload: &T, provenance: &Provenance) -> String {
    let mut value = serde_json::to_value(payload).expect("payload serializes");
    if let Value::Object(map) = &mut value {
        map.insert(
            "provenance".to_string(),
            serde_json::to_value(provenance).expect("provenance serializes"),
        );
    }
    let mut out = String::new();
    write_value(&mut out, &value);
    out.push('\n');
    out
}

/// Format a float for TSV cells: 12 significant digits, shortest form.
pub fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        return "NA".into();
    }
    ryu_format(round_sig(v))
}
