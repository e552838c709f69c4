//! Result tables and their CSV/JSON encodings.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scheme: String,
    pub sweep_value: f64,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

/// Rows keyed by `(scheme, sweep_value, metric)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentTable {
    rows: Vec<Row>,
    keys: HashSet<(String, u64, String)>,
}

impl ExperimentTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Row) -> Result<()> {
        let key = (row.scheme.clone(), row.sweep_value.to_bits(), row.metric.clone());
        if !self.keys.insert(key) {
            return Err(Error::Invariant(format!(
                "duplicate row ({}, {}, {})",
                row.scheme, row.sweep_value, row.metric
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn add(&mut self, scheme: &str, sweep_value: f64, metric: &str, value: f64, stderr: f64, n: u64) -> Result<()> {
        self.push(Row {
            scheme: scheme.to_string(),
            sweep_value,
            metric: metric.to_string(),
            value,
            stderr,
            n,
        })
    }

    pub fn extend(&mut self, other: ExperimentTable) -> Result<()> {
        other.rows.into_iter().try_for_each(|r| self.push(r))
    }

    /// Sorts by scheme, sweep value, then metric.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.scheme
                .cmp(&b.scheme)
                .then(a.sweep_value.total_cmp(&b.sweep_value))
                .then(a.metric.cmp(&b.metric))
        });
    }

    pub fn get(&self, scheme: &str, sweep_value: f64, metric: &str) -> Option<&Row> {
        self.rows.iter().find(|r| {
            r.scheme == scheme && r.sweep_value.total_cmp(&sweep_value) == Ordering::Equal && r.metric == metric
        })
    }

    pub fn from_rows(rows: Vec<Row>) -> Result<Self> {
        let mut t = Self::new();
        rows.into_iter().try_for_each(|r| t.push(r))?;
        Ok(t)
    }
}

const HEADER: [&str; 6] = ["scheme", "sweep_value", "metric", "value", "stderr", "n"];

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    }
}

/// CSV encoding with the header always present and `\n` line endings;
/// floats use the shortest representation that round-trips exactly.
pub fn write_csv<W: Write>(table: &ExperimentTable, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(HEADER)?;
    for row in table.rows() {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_table(table: &ExperimentTable, path: &Path, format: Format) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    match format {
        Format::Csv => write_csv(table, &mut out).map_err(|e| csv_err(path, e))?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, table.rows()).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            })?;
            out.write_all(b"\n").map_err(io_err(path))?;
        }
    }
    out.flush().map_err(io_err(path))
}

pub fn read_table(path: &Path, format: Format) -> Result<ExperimentTable> {
    let file = File::open(path).map_err(io_err(path))?;
    let rows: Vec<Row> = match format {
        Format::Csv => csv::Reader::from_reader(file)
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| csv_err(path, e))?,
        Format::Json => serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?,
    };
    ExperimentTable::from_rows(rows)
}
