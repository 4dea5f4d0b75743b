//! Self-describing tabular output.
//!
//! A [`Document`] is a set of metadata entries (JSON values) plus named
//! tables. Floats are rounded to 12 significant digits before printing and
//! then printed in shortest round-trip form, so parsing an emitted file and
//! emitting it again reproduces the same bytes.
//!
//! CSV layout:
//!
//! ```text
//! # command = "winding"
//! # config = {...}
//! # tool = "nhtopo 0.1.0"
//!
//! # [winding]
//! kappa,omega,w1,gap,flag
//! 4.0,-4.0,0,2.0,ok
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{json, Map, Value};

pub const SIGNIFICANT_DIGITS: usize = 12;
/// Column whose cells must read `ok` for a row to count as clean.
pub const FLAG_COLUMN: &str = "flag";
pub const FLAG_OK: &str = "ok";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn float(x: f64) -> Self {
        Cell::Float(round_significant(x))
    }

    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    fn to_csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format!("{x:?}"),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn from_csv(s: &str) -> Self {
        if s.is_empty() {
            return Cell::Empty;
        }
        if let Ok(i) = s.parse::<i64>() {
            return Cell::Int(i);
        }
        if s.contains(['.', 'e', 'E']) || matches!(s, "inf" | "-inf" | "NaN") {
            if let Ok(x) = s.parse::<f64>() {
                return Cell::Float(x);
            }
        }
        Cell::Text(s.to_string())
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(i) => json!(i),
            Cell::Float(x) if x.is_finite() => json!(x),
            Cell::Float(_) | Cell::Empty => Value::Null,
            Cell::Text(s) => json!(s),
        }
    }

    fn from_json(v: &Value) -> Result<Self, String> {
        Ok(match v {
            Value::Null => Cell::Empty,
            Value::String(s) => Cell::Text(s.clone()),
            Value::Number(n) if n.is_i64() => Cell::Int(n.as_i64().expect("checked")),
            Value::Number(n) => Cell::Float(n.as_f64().ok_or("unrepresentable number")?),
            other => return Err(format!("unexpected cell {other}")),
        })
    }
}

/// `x` rounded to [`SIGNIFICANT_DIGITS`].
pub fn round_significant(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().expect("formatted float parses")
}

/// Rounds every float inside a JSON value.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if !n.is_i64() && !n.is_u64() => {
            n.as_f64().map(|x| json!(round_significant(x))).unwrap_or(Value::Number(n))
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn flagged_rows(&self) -> usize {
        let Some(col) = self.columns.iter().position(|c| c == FLAG_COLUMN) else {
            return 0;
        };
        self.rows.iter().filter(|r| r[col] != Cell::text(FLAG_OK)).count()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    pub meta: BTreeMap<String, Value>,
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Document {
    pub fn set_meta(&mut self, key: &str, value: Value) {
        self.meta.insert(key.to_string(), round_json(value));
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Flagged rows per table, plus metadata objects whose `flag` is not `ok`.
    pub fn flag_summary(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for t in &self.tables {
            let n = t.flagged_rows();
            if n > 0 {
                out.insert(t.name.clone(), n);
            }
        }
        for (k, v) in &self.meta {
            if v.get(FLAG_COLUMN).is_some_and(|f| f != FLAG_OK) {
                out.insert(k.clone(), 1);
            }
        }
        out
    }

    pub fn emit(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    pub fn parse(text: &str, format: Format) -> Result<Self, String> {
        match format {
            Format::Csv => Self::from_csv(text),
            Format::Json => Self::from_json(text),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            writeln!(out, "# {k} = {v}").unwrap();
        }
        for t in &self.tables {
            writeln!(out, "\n# [{}]", t.name).unwrap();
            writeln!(out, "{}", t.columns.join(",")).unwrap();
            for r in &t.rows {
                let cells: Vec<String> = r.iter().map(Cell::to_csv).collect();
                writeln!(out, "{}", cells.join(",")).unwrap();
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut doc = Document::default();
        let mut lines = text.lines().enumerate().peekable();
        while let Some((i, line)) = lines.next() {
            if line.is_empty() {
                continue;
            }
            let body = line.strip_prefix("# ").ok_or_else(|| format!("line {}: expected `# `", i + 1))?;
            if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
                let (_, header) = lines.next().ok_or_else(|| format!("line {}: table without header", i + 1))?;
                let columns: Vec<String> = header.split(',').map(str::to_string).collect();
                let mut rows = Vec::new();
                while let Some(&(j, row)) = lines.peek() {
                    if row.is_empty() || row.starts_with('#') {
                        break;
                    }
                    let cells: Vec<Cell> = row.split(',').map(Cell::from_csv).collect();
                    if cells.len() != columns.len() {
                        return Err(format!("line {}: {} cells for {} columns", j + 1, cells.len(), columns.len()));
                    }
                    rows.push(cells);
                    lines.next();
                }
                doc.tables.push(Table { name: name.to_string(), columns, rows });
            } else {
                let (k, v) = body.split_once(" = ").ok_or_else(|| format!("line {}: malformed metadata", i + 1))?;
                let value = serde_json::from_str(v).map_err(|e| format!("line {}: {e}", i + 1))?;
                doc.meta.insert(k.to_string(), value);
            }
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        let mut root: Map<String, Value> = self.meta.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let tables: Vec<Value> = self
            .tables
            .iter()
            .map(|t| {
                json!({
                    "name": t.name,
                    "columns": t.columns,
                    "rows": t.rows.iter().map(|r| r.iter().map(Cell::to_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
                })
            })
            .collect();
        root.insert("tables".into(), Value::Array(tables));
        let mut s = serde_json::to_string_pretty(&Value::Object(root)).expect("document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let Value::Object(mut root) = serde_json::from_str(text).map_err(|e| e.to_string())? else {
            return Err("top level must be an object".into());
        };
        let tables = match root.remove("tables") {
            Some(Value::Array(a)) => a,
            _ => return Err("missing `tables` array".into()),
        };
        let mut doc = Document { meta: root.into_iter().collect(), tables: Vec::new() };
        for t in tables {
            let name = t["name"].as_str().ok_or("table without name")?.to_string();
            let columns: Vec<String> = t["columns"]
                .as_array()
                .ok_or("table without columns")?
                .iter()
                .map(|c| c.as_str().map(str::to_string).ok_or("non-string column"))
                .collect::<Result<_, _>>()?;
            let rows = t["rows"]
                .as_array()
                .ok_or("table without rows")?
                .iter()
                .map(|r| r.as_array().ok_or("row is not an array".to_string())?.iter().map(Cell::from_json).collect())
                .collect::<Result<Vec<Vec<Cell>>, String>>()?;
            doc.tables.push(Table { name, columns, rows });
        }
        Ok(doc)
    }
}
