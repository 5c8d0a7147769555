//! Tables, summaries and their CSV/JSON rendering.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::{Map, Number, Value};

use crate::error::CliError;
use crate::settings::OutputFormat;

/// Significant digits kept when serializing floats.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds to [`SIGNIFICANT_DIGITS`] and prints the shortest form that reads
/// back to the rounded value. Non-finite values become `inf`, `-inf`, `nan`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round_significant(x);
    if r == 0.0 {
        return "0".into();
    }
    let mag = r.abs();
    if !(1e-4..1e12).contains(&mag) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

pub fn round_significant(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(v) => v.clone(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Float(v) => match Number::from_f64(round_significant(*v)) {
                Some(n) => Value::Number(n),
                None => Value::String(format_float(*v)),
            },
            Cell::Bool(v) => Value::Bool(*v),
            Cell::Text(v) => Value::String(v.clone()),
        }
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v.into())
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }

    fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(c, v)| (c.to_string(), v.to_json()))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

/// Everything one command produces.
#[derive(Debug, Clone)]
pub struct Report {
    pub config: Value,
    pub table: Table,
    /// Ordered `key: value` summary lines.
    pub summary: Vec<(String, Cell)>,
    /// Secondary tables, e.g. the empirical CDF from `simulate`.
    pub extra: Vec<(&'static str, Table)>,
}

impl Report {
    pub fn new(config: Value, table: Table) -> Self {
        Self {
            config,
            table,
            summary: Vec::new(),
            extra: Vec::new(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl Into<Cell>) {
        self.summary.push((key.to_string(), value.into()));
    }

    pub fn summary_value(&self, key: &str) -> Option<&Cell> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn summary_text(&self) -> String {
        self.summary.iter().map(|(k, v)| format!("{k}: {}\n", v.render())).collect()
    }

    pub fn to_json(&self) -> Value {
        let mut summary: Map<String, Value> = self.summary.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
        for (name, table) in &self.extra {
            summary.insert(name.to_string(), table.to_json());
        }
        let mut doc = Map::new();
        doc.insert("config".into(), self.config.clone());
        doc.insert("rows".into(), self.table.to_json());
        doc.insert("summary".into(), Value::Object(summary));
        Value::Object(doc)
    }

    /// Writes the report. CSV goes to `out` (stdout if unset) with the summary
    /// on stdout when `out` is a file and on stderr otherwise, so stdout stays
    /// parseable. Extra tables go to `extra_out` when given. JSON is a single
    /// document on `out` or stdout.
    pub fn emit(&self, format: OutputFormat, out: Option<&Path>, extra_out: Option<&Path>) -> Result<(), CliError> {
        match format {
            OutputFormat::Csv => {
                match out {
                    Some(path) => {
                        self.table.write_csv(BufWriter::new(File::create(path)?))?;
                        io::stdout().write_all(self.summary_text().as_bytes())?;
                    }
                    None => {
                        self.table.write_csv(io::stdout().lock())?;
                        io::stderr().write_all(self.summary_text().as_bytes())?;
                    }
                }
                for (name, table) in &self.extra {
                    match extra_out {
                        Some(path) => table.write_csv(BufWriter::new(File::create(path)?))?,
                        None => eprintln!("note: {name} table not written (pass --out or --ecdf-out)"),
                    }
                }
            }
            OutputFormat::Json => {
                let doc = self.to_json();
                match out {
                    Some(path) => {
                        let mut w = BufWriter::new(File::create(path)?);
                        serde_json::to_writer_pretty(&mut w, &doc)?;
                        w.write_all(b"\n")?;
                        w.flush()?;
                    }
                    None => {
                        let mut w = io::stdout().lock();
                        serde_json::to_writer_pretty(&mut w, &doc)?;
                        w.write_all(b"\n")?;
                    }
                }
            }
        }
        Ok(())
    }
}
