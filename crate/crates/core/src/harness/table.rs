//! Plain tabular output: a header plus rows of typed cells, written as CSV
//! with a JSON metadata sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    /// Floats use 17 significant digits so parsing recovers the exact value.
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Table {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Numeric values of a column.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        self.rows.iter().map(|r| r[j].as_f64()).collect()
    }

    /// Mean of a numeric column.
    pub fn mean(&self, name: &str) -> Option<f64> {
        let col = self.column(name)?;
        (!col.is_empty()).then(|| col.iter().sum::<f64>() / col.len() as f64)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let write_err = |e: csv::Error| Error::Numeric(format!("csv encoding failed: {e}"));
        w.write_record(&self.headers).map_err(write_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(write_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numeric(format!("csv encoding failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Writes `table` to `path` as CSV.
pub fn write_csv(table: &Table, path: &Path) -> Result<()> {
    let text = table.to_csv_string()?;
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `<path>.meta.json`.
pub fn metadata_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes the CSV and its pretty-printed metadata sidecar.
pub fn write_with_metadata(table: &Table, metadata: &Value, path: &Path) -> Result<()> {
    write_csv(table, path)?;
    let meta_path = metadata_path(path);
    let text = serde_json::to_string_pretty(metadata).expect("metadata serializes") + "\n";
    fs::write(&meta_path, text).map_err(|source| Error::Io { path: meta_path, source })
}
