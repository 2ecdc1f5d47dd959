use crate::config::{Format, RunConfig};
use serde::Serialize;
use serde_json::{json, Value};
use std::io::Write;

/// A named property the run is expected to satisfy.
#[derive(Debug, Clone, Serialize)]
pub struct Contract {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

impl Contract {
    pub fn new(name: &str, holds: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            holds,
            detail: detail.into(),
        }
    }
}

/// Plot-ready columns of numbers.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Default)]
pub struct Report {
    pub result: Value,
    pub table: Option<Table>,
    /// Text rows for tables with non-numeric columns (the suite).
    pub text_table: Option<(Vec<String>, Vec<Vec<String>>)>,
    pub contracts: Vec<Contract>,
}

impl Report {
    pub fn holds(&self) -> bool {
        self.contracts.iter().all(|c| c.holds)
    }
}

fn number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

/// JSON cannot hold non-finite numbers; they become the strings
/// "inf", "-inf" and "nan".
fn table_json(t: &Table) -> Value {
    let rows: Vec<Value> = t
        .rows
        .iter()
        .map(|r| {
            Value::Array(
                r.iter()
                    .map(|v| if v.is_finite() { json!(v) } else { json!(number(*v)) })
                    .collect(),
            )
        })
        .collect();
    json!({ "columns": t.columns, "rows": rows })
}

pub fn write_report<W: Write>(cfg: &RunConfig, report: &Report, mut w: W) -> std::io::Result<()> {
    let hash = cfg.hash();
    match cfg.format {
        Format::Json => {
            let mut doc = json!({
                "config": cfg,
                "config_hash": hash,
                "result": report.result,
                "contracts": report.contracts,
                "holds": report.holds(),
            });
            if let Some(t) = &report.table {
                doc["table"] = table_json(t);
            }
            if let Some((cols, rows)) = &report.text_table {
                doc["table"] = json!({ "columns": cols, "rows": rows });
            }
            serde_json::to_writer_pretty(&mut w, &doc)?;
            writeln!(w)
        }
        Format::Csv => {
            writeln!(w, "# config_hash={hash}")?;
            writeln!(w, "# config={}", serde_json::to_string(cfg).expect("config serializes"))?;
            for c in &report.contracts {
                writeln!(w, "# contract {}={} ({})", c.name, c.holds, c.detail)?;
            }
            if let Some(t) = &report.table {
                writeln!(w, "config_hash,{}", t.columns.join(","))?;
                for r in &t.rows {
                    let cells: Vec<String> = r.iter().map(|v| number(*v)).collect();
                    writeln!(w, "{hash},{}", cells.join(","))?;
                }
            } else if let Some((cols, rows)) = &report.text_table {
                writeln!(w, "config_hash,{}", cols.join(","))?;
                for r in rows {
                    let cells: Vec<String> = r.iter().map(|c| csv_cell(c)).collect();
                    writeln!(w, "{hash},{}", cells.join(","))?;
                }
            } else {
                writeln!(w, "config_hash,key,value")?;
                flatten("", &report.result, &mut |k, v| writeln!(w, "{hash},{k},{}", csv_cell(&v)))?;
            }
            Ok(())
        }
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut dyn FnMut(&str, String) -> std::io::Result<()>) -> std::io::Result<()> {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&key(k), v, out)?;
            }
            Ok(())
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), v, out)?;
            }
            Ok(())
        }
        Value::String(s) => out(prefix, s.clone()),
        other => out(prefix, other.to_string()),
    }
}
