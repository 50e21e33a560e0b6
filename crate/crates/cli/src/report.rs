use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Resolved configuration echoed at the top of every output file.
#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub threads: usize,
    pub flags: Value,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<Value>,
    pub rows: Vec<Value>,
}

pub fn to_rows<T: Serialize>(items: &[T]) -> serde_json::Result<Vec<Value>> {
    items.iter().map(serde_json::to_value).collect()
}

impl Report {
    pub fn render(&self, format: Format) -> serde_json::Result<String> {
        match format {
            Format::Json => Ok(serde_json::to_string_pretty(self)? + "\n"),
            Format::Csv => self.render_csv(),
        }
    }

    fn render_csv(&self) -> serde_json::Result<String> {
        let mut out = String::new();
        let p = &self.provenance;
        writeln!(out, "# {} {} {}", p.tool, p.version, p.command).unwrap();
        writeln!(out, "# seed={} threads={}", p.seed, p.threads).unwrap();
        writeln!(out, "# flags={}", serde_json::to_string(&p.flags)?).unwrap();
        if let Some(summary) = &self.summary {
            for (k, v) in flatten(summary) {
                writeln!(out, "# summary.{k}={}", cell(&v)).unwrap();
            }
        }
        let flat: Vec<Vec<(String, Value)>> = self.rows.iter().map(flatten).collect();
        let Some(first) = flat.first() else {
            return Ok(out);
        };
        let header: Vec<&str> = first.iter().map(|(k, _)| k.as_str()).collect();
        writeln!(out, "{}", header.join(",")).unwrap();
        for row in &flat {
            let cells: Vec<String> = row.iter().map(|(_, v)| cell(v)).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        Ok(out)
    }
}

/// Nested objects become dotted column names; arrays are joined with `;`.
fn flatten(v: &Value) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    match v {
        Value::Object(map) => flatten_into(map, "", &mut out),
        other => out.push(("value".to_string(), other.clone())),
    }
    out
}

fn flatten_into(map: &Map<String, Value>, prefix: &str, out: &mut Vec<(String, Value)>) {
    for (k, v) in map {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(inner) => flatten_into(inner, &key, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn cell(v: &Value) -> String {
    let raw = match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(cell).collect::<Vec<_>>().join(";"),
        other => other.to_string(),
    };
    if raw.contains([',', '"', '\n']) {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw
    }
}

/// Report body without the provenance header, for comparing reruns.
#[cfg(test)]
fn body(text: &str) -> String {
    if let Ok(Value::Object(mut map)) = serde_json::from_str::<Value>(text) {
        map.remove("provenance");
        return serde_json::to_string(&map).unwrap_or_default();
    }
    text.lines()
        .filter(|l| !l.starts_with("# "))
        .collect::<Vec<_>>()
        .join("\n")
}
