//! CSV emission. Every file starts with two comment lines carrying the
//! configuration digest and the library version, then a header row, then
//! data rows. Floats are printed in scientific notation with a fixed digit
//! count so identical runs produce byte-identical files.

use std::fmt::Write as _;

/// One CSV cell. Floats get the canonical scientific format; strings are
/// emitted as-is (column values never contain commas here).
#[derive(Debug, Clone)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Empty,
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

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(if v { "true" } else { "false" }.into())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        match v {
            Some(v) => v.into(),
            None => Cell::Empty,
        }
    }
}

/// Canonical float format: scientific, 15 fractional digits, so a round trip
/// through the file reproduces the f64 to the last bit for all values the
/// pipeline emits.
pub fn format_float(v: f64) -> String {
    format!("{v:.15e}")
}

/// An in-memory CSV table; built fully, then written in one shot so partial
/// files never hit disk.
#[derive(Debug, Clone)]
pub struct Table {
    digest: u64,
    version: &'static str,
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(digest: u64, columns: Vec<&'static str>) -> Table {
        Table { digest, version: env!("CARGO_PKG_VERSION"), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# config_digest = {:016x}", self.digest);
        let _ = writeln!(out, "# version = {}", self.version);
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let mut first = true;
            for cell in row {
                if !first {
                    out.push(',');
                }
                first = false;
                match cell {
                    Cell::Float(v) => out.push_str(&format_float(*v)),
                    Cell::Int(v) => {
                        let _ = write!(out, "{v}");
                    }
                    Cell::Text(v) => out.push_str(v),
                    Cell::Empty => {}
                }
            }
            out.push('\n');
        }
        out
    }
}

/// A two-column key/value table for scalar summaries.
pub struct Summary {
    table: Table,
}

impl Summary {
    pub fn new(digest: u64) -> Summary {
        Summary { table: Table::new(digest, vec!["key", "value"]) }
    }

    pub fn put(&mut self, key: &str, value: impl Into<Cell>) {
        self.table.push(vec![Cell::Text(key.into()), value.into()]);
    }

    pub fn render(&self) -> String {
        self.table.render()
    }
}
