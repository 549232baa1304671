//! Verification reports and their JSON/CSV emission.
//!
//! JSON output is byte-stable: object keys are sorted and every float is
//! written with C-style `%.12e`. Non-finite values are written as the
//! strings `"inf"`, `"-inf"`, `"nan"`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::grid::fmt_e;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    #[serde(deserialize_with = "float_or_string")]
    pub value: f64,
    pub unit: String,
    #[serde(default, deserialize_with = "opt_float_or_string")]
    pub bound: Option<f64>,
    #[serde(default)]
    pub pass: Option<bool>,
    #[serde(default, deserialize_with = "opt_floats_or_strings")]
    pub witness: Option<Vec<f64>>,
    #[serde(default)]
    pub note: Option<String>,
}

impl Metric {
    pub fn new(name: impl Into<String>, value: f64, unit: impl Into<String>) -> Self {
        Metric { name: name.into(), value, unit: unit.into(), bound: None, pass: None, witness: None, note: None }
    }

    /// Passes when `value ≤ bound` (NaN fails).
    pub fn at_most(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self.pass = Some(self.value <= bound);
        self
    }

    /// Passes when `value ≥ bound`.
    pub fn at_least(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self.pass = Some(self.value >= bound);
        self
    }

    /// Pass flag decided by the caller, with no numeric bound.
    pub fn flag(mut self, pass: bool) -> Self {
        self.pass = Some(pass);
        self
    }

    /// Measured constant with no ceiling: passes when finite.
    pub fn finite(self) -> Self {
        let ok = self.value.is_finite();
        self.flag(ok)
    }

    pub fn witness(mut self, w: Vec<f64>) -> Self {
        self.witness = Some(w);
        self
    }

    pub fn note(mut self, n: impl Into<String>) -> Self {
        self.note = Some(n.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suite: String,
    pub version: String,
    pub schema_version: u32,
    #[serde(default)]
    pub config: Value,
    pub metrics: Vec<Metric>,
    /// Left out of the JSON unless set; timings would break byte stability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl VerificationReport {
    pub fn new(suite: impl Into<String>) -> Self {
        VerificationReport {
            suite: suite.into(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: SCHEMA_VERSION,
            config: Value::Null,
            metrics: Vec::new(),
            wall_time_s: None,
        }
    }

    pub fn push(&mut self, m: Metric) -> &mut Self {
        self.metrics.push(m);
        self
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.metric(name).map(|m| m.value)
    }

    /// True when every flagged metric passed.
    pub fn all_pass(&self) -> bool {
        self.metrics.iter().all(|m| m.pass != Some(false))
    }

    pub fn failures(&self) -> impl Iterator<Item = &Metric> {
        self.metrics.iter().filter(|m| m.pass == Some(false))
    }

    /// Appends another report's metrics, prefixing names with its suite.
    pub fn absorb(&mut self, other: VerificationReport) {
        for mut m in other.metrics {
            m.name = format!("{}.{}", other.suite, m.name);
            self.metrics.push(m);
        }
    }

    pub fn to_json(&self) -> String {
        let mut metrics = Vec::with_capacity(self.metrics.len());
        for m in &self.metrics {
            let mut o = serde_json::Map::new();
            o.insert("name".into(), Value::String(m.name.clone()));
            o.insert("value".into(), FloatToken::encode(m.value));
            o.insert("unit".into(), Value::String(m.unit.clone()));
            if let Some(b) = m.bound {
                o.insert("bound".into(), FloatToken::encode(b));
            }
            if let Some(p) = m.pass {
                o.insert("pass".into(), Value::Bool(p));
            }
            if let Some(w) = &m.witness {
                o.insert("witness".into(), Value::Array(w.iter().map(|&x| FloatToken::encode(x)).collect()));
            }
            if let Some(n) = &m.note {
                o.insert("note".into(), Value::String(n.clone()));
            }
            metrics.push(Value::Object(o));
        }
        let mut root = serde_json::Map::new();
        root.insert("suite".into(), Value::String(self.suite.clone()));
        root.insert("version".into(), Value::String(self.version.clone()));
        root.insert("schema_version".into(), Value::from(self.schema_version));
        root.insert("config".into(), self.config.clone());
        root.insert("metrics".into(), Value::Array(metrics));
        if let Some(t) = self.wall_time_s {
            root.insert("wall_time_s".into(), FloatToken::encode(t));
        }
        let mut out = String::new();
        write_json(&Value::Object(root), 0, &mut out);
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `name,value,bound,pass`, one row per metric.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,value,bound,pass\n");
        for m in &self.metrics {
            let bound = m.bound.map(fmt_e).unwrap_or_default();
            let pass = m.pass.map(|p| p.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{}", m.name.replace(',', ";"), fmt_e(m.value), bound, pass);
        }
        s
    }

    pub fn emit(&self, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
        let text = match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        };
        std::fs::write(path, text)?;
        Ok(())
    }

    /// One line per metric for terminal output.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for m in &self.metrics {
            let status = match m.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "    ",
            };
            let bound = m.bound.map(|b| format!(" (bound {})", fmt_e(b))).unwrap_or_default();
            let _ = writeln!(s, "[{status}] {}.{} = {}{bound} {}", self.suite, m.name, fmt_e(m.value), m.unit);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Floats travel through the JSON tree as tagged strings so the writer can
/// apply the fixed format.
struct FloatToken;

impl FloatToken {
    const TAG: &'static str = "\u{0}f:";

    fn encode(x: f64) -> Value {
        Value::String(format!("{}{}", Self::TAG, fmt_e(x)))
    }
}

fn write_json(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize, out: &mut String| out.extend(std::iter::repeat(' ').take(n));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                write_float_literal(n.as_f64().unwrap_or(f64::NAN), out);
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => {
            if let Some(f) = s.strip_prefix(FloatToken::TAG) {
                if f.parse::<f64>().map(f64::is_finite).unwrap_or(false) {
                    out.push_str(f);
                } else {
                    out.push_str(&Value::String(f.to_string()).to_string());
                }
            } else {
                out.push_str(&Value::String(s.clone()).to_string());
            }
        }
        Value::Array(a) => {
            if a.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                pad(indent + 2, out);
                write_json(x, indent + 2, out);
                if i + 1 < a.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(indent, out);
            out.push(']');
        }
        Value::Object(o) => {
            if o.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = o.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(indent + 2, out);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_json(&o[*k], indent + 2, out);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(indent, out);
            out.push('}');
        }
    }
}

fn write_float_literal(x: f64, out: &mut String) {
    if x.is_finite() {
        out.push_str(&fmt_e(x));
    } else {
        out.push_str(&Value::String(fmt_e(x)).to_string());
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrStr {
    Num(f64),
    Str(String),
}

fn parse_float_token(v: NumOrStr) -> std::result::Result<f64, String> {
    match v {
        NumOrStr::Num(x) => Ok(x),
        NumOrStr::Str(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => other.parse().map_err(|_| format!("not a float: {other}")),
        },
    }
}

fn float_or_string<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    parse_float_token(NumOrStr::deserialize(d)?).map_err(serde::de::Error::custom)
}

fn opt_float_or_string<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    match Option::<NumOrStr>::deserialize(d)? {
        None => Ok(None),
        Some(v) => parse_float_token(v).map(Some).map_err(serde::de::Error::custom),
    }
}

fn opt_floats_or_strings<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<f64>>, D::Error> {
    match Option::<Vec<NumOrStr>>::deserialize(d)? {
        None => Ok(None),
        Some(v) => v.into_iter().map(parse_float_token).collect::<std::result::Result<_, _>>().map(Some).map_err(serde::de::Error::custom),
    }
}
