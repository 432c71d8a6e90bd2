//! Report assembly: every subcommand fills one document that renders either
//! as aligned `key: value` text or as a JSON object with the same field
//! names. Floats are printed with nine significant digits in both formats;
//! exact rationals render as `p/q`.

use num_rational::Rational64;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Json,
}

/// Nine significant digits; plain decimal in a readable magnitude window,
/// scientific outside it.
pub fn fmt_float(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    // Round to nine significant digits first so the magnitude used for the
    // decimal layout already accounts for any carry (0.99999999995 -> 1).
    let rounded: f64 = format!("{x:.8e}").parse().expect("exponential form parses");
    let mag = rounded.abs().log10().floor() as i32;
    if !(-5..9).contains(&mag) {
        format!("{rounded:.8e}")
    } else {
        format!("{:.*}", (8 - mag).max(0) as usize, rounded)
    }
}

/// The number actually printed, for JSON payloads: parse the nine-digit
/// rendering back so both formats carry identical values.
pub fn json_float(x: f64) -> Value {
    if !x.is_finite() {
        return Value::String(format!("{x}"));
    }
    let rounded: f64 = fmt_float(x).parse().expect("formatter output is a float");
    json!(rounded)
}

pub fn fmt_rational(r: Rational64) -> String {
    r.to_string()
}

#[derive(Debug, Default)]
pub struct Report {
    lines: Vec<String>,
    json: Map<String, Value>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Free-form text line mirrored by an explicit JSON value.
    pub fn push(&mut self, key: &str, value: Value, text: String) {
        self.lines.push(text);
        self.json.insert(key.to_string(), value);
    }

    pub fn push_str(&mut self, key: &str, value: &str) {
        self.push(key, Value::String(value.to_string()), format!("{key}: {value}"));
    }

    pub fn push_int(&mut self, key: &str, value: usize) {
        self.push(key, json!(value), format!("{key}: {value}"));
    }

    pub fn push_bool(&mut self, key: &str, value: bool) {
        self.push(key, json!(value), format!("{key}: {value}"));
    }

    pub fn push_float(&mut self, key: &str, value: f64) {
        self.push(key, json_float(value), format!("{key}: {}", fmt_float(value)));
    }

    pub fn push_rational(&mut self, key: &str, value: Rational64) {
        let s = fmt_rational(value);
        self.push(key, Value::String(s.clone()), format!("{key}: {s}"));
    }

    pub fn push_null(&mut self, key: &str, note: &str) {
        self.push(key, Value::Null, format!("{key}: {note}"));
    }

    pub fn push_float_list(&mut self, key: &str, values: &[f64]) {
        let rendered: Vec<String> = values.iter().map(|&v| fmt_float(v)).collect();
        self.push(
            key,
            Value::Array(values.iter().map(|&v| json_float(v)).collect()),
            format!("{key}: {}", rendered.join(" ")),
        );
    }

    /// Named pass/fail rows rendered as a JSON array and as text lines.
    pub fn push_checks(&mut self, key: &str, checks: &[(String, bool, f64)]) {
        let mut arr = Vec::new();
        for (name, passed, residual) in checks {
            self.lines.push(format!(
                "check {name}: {} (residual {})",
                if *passed { "pass" } else { "FAIL" },
                fmt_float(*residual)
            ));
            arr.push(json!({
                "name": name,
                "passed": passed,
                "residual": json_float(*residual),
            }));
        }
        self.json.insert(key.to_string(), Value::Array(arr));
    }

    /// Table rendered as aligned text columns and a JSON array of rows.
    pub fn push_table(&mut self, key: &str, columns: &[&str], rows: &[Vec<Value>]) {
        let mut cells: Vec<Vec<String>> = vec![columns.iter().map(|c| c.to_string()).collect()];
        for row in rows {
            cells.push(
                row.iter()
                    .map(|v| match v {
                        Value::String(s) => s.clone(),
                        Value::Number(n) => {
                            if let Some(f) = n.as_f64() {
                                if n.is_f64() {
                                    fmt_float(f)
                                } else {
                                    n.to_string()
                                }
                            } else {
                                n.to_string()
                            }
                        }
                        other => other.to_string(),
                    })
                    .collect(),
            );
        }
        let widths: Vec<usize> = (0..columns.len())
            .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        for r in &cells {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:>w$}"))
                .collect();
            self.lines.push(line.join("  "));
        }
        let arr: Vec<Value> = rows
            .iter()
            .map(|row| {
                let mut obj = Map::new();
                for (c, v) in columns.iter().zip(row) {
                    obj.insert(c.to_string(), v.clone());
                }
                Value::Object(obj)
            })
            .collect();
        self.json.insert(key.to_string(), Value::Array(arr));
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => {
                let mut out = self.lines.join("\n");
                out.push('\n');
                out
            }
            Format::Json => {
                let mut out = serde_json::to_string_pretty(&Value::Object(self.json.clone()))
                    .expect("report serializes");
                out.push('\n');
                out
            }
        }
    }
}
