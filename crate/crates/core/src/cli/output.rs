//! CSV / JSON result tables.

use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use super::config::OutputFormat;
use crate::error::{Error, Result};

/// Significant digits kept for every floating-point cell.
pub const SIG_DIGITS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
    Empty,
}

/// Rounds to [`SIG_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().expect("formatted float parses")
}

impl Cell {
    fn csv_text(&self) -> String {
        match self {
            Cell::Num(x) => format!("{}", round_sig(*x)),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json_value(&self) -> Value {
        match self {
            Cell::Num(x) => serde_json::Number::from_f64(round_sig(*x)).map_or(Value::Null, Value::Number),
            Cell::Int(i) => Value::from(*i),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}
impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}
impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}
impl From<Option<usize>> for Cell {
    fn from(x: Option<usize>) -> Self {
        x.map_or(Cell::Empty, |v| Cell::Int(v as u64))
    }
}
impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}
impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv_text)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn to_json(&self) -> String {
        let arr: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .columns
                    .iter()
                    .cloned()
                    .zip(row.iter().map(Cell::json_value))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&Value::Array(arr)).expect("json serialization");
        s.push('\n');
        s
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

pub fn write_output(table: &Table, format: OutputFormat, path: &Path) -> Result<()> {
    fs::write(path, table.render(format)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round_sig(0.123_456_789_012_345_6), 0.123_456_789_012);
        assert_eq!(round_sig(1.0), 1.0);
        assert_eq!(round_sig(-2.5e-7), -2.5e-7);
        assert_eq!(round_sig(0.0), 0.0);
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new(&["p_I", "n_star"]);
        assert_eq!(t.to_csv(), "p_I,n_star\n");
        assert_eq!(t.to_json(), "[]\n");
    }

    #[test]
    fn csv_cells() {
        let mut t = Table::new(&["a", "b", "c", "d"]);
        t.push(vec![Cell::Num(1.0 / 3.0), Cell::Int(4), Cell::Bool(true), Cell::Empty]);
        assert_eq!(t.to_csv(), "a,b,c,d\n0.333333333333,4,true,\n");
    }

    #[test]
    fn unwritable_path_echoes_path() {
        let t = Table::new(&["x"]);
        let err = write_output(&t, OutputFormat::Csv, Path::new("/nonexistent-dir/out.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/out.csv"));
    }
}
