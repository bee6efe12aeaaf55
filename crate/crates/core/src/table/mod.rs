//! Typed in-memory flat tables bound to a [`Schema`].

mod csv_io;
mod split;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::dsdl::{ColumnSpec, ColumnType, Schema};

pub use csv_io::{read_table, write_table, ReadOptions, ReadOutcome};
pub use split::{split, split_indices, Fractions, SplitError, SplitIndices, SplitPolicy, SplitSpec};

/// Delimiter between elements of a list-typed cell.
pub const LIST_DELIMITER: char = '|';

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Binary(Vec<u8>),
    /// categorical, ordinal, textual and url cells
    Text(Vec<Arc<str>>),
    NumericList(Vec<Vec<f64>>),
    BinaryList(Vec<Vec<u8>>),
    TextList(Vec<Vec<Arc<str>>>),
}

impl ColumnData {
    fn empty_for(col_type: ColumnType) -> Self {
        match col_type {
            ColumnType::Numeric => ColumnData::Numeric(Vec::new()),
            ColumnType::Binary => ColumnData::Binary(Vec::new()),
            ColumnType::ListOfNumeric => ColumnData::NumericList(Vec::new()),
            ColumnType::ListOfBinary => ColumnData::BinaryList(Vec::new()),
            t if t.is_list() => ColumnData::TextList(Vec::new()),
            _ => ColumnData::Text(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Binary(v) => v.len(),
            ColumnData::Text(v) => v.len(),
            ColumnData::NumericList(v) => v.len(),
            ColumnData::BinaryList(v) => v.len(),
            ColumnData::TextList(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn take(&self, rows: &[usize]) -> ColumnData {
        fn pick<T: Clone>(v: &[T], rows: &[usize]) -> Vec<T> {
            rows.iter().map(|&r| v[r].clone()).collect()
        }
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(pick(v, rows)),
            ColumnData::Binary(v) => ColumnData::Binary(pick(v, rows)),
            ColumnData::Text(v) => ColumnData::Text(pick(v, rows)),
            ColumnData::NumericList(v) => ColumnData::NumericList(pick(v, rows)),
            ColumnData::BinaryList(v) => ColumnData::BinaryList(pick(v, rows)),
            ColumnData::TextList(v) => ColumnData::TextList(pick(v, rows)),
        }
    }
}

/// One typed column. Missing scalar cells hold a placeholder (0, or the
/// empty string) and are flagged in `missing`; list cells are never missing.
#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub spec: ColumnSpec,
    pub data: ColumnData,
    pub missing: Vec<bool>,
}

impl Column {
    pub fn name(&self) -> &str {
        &self.spec.col_name
    }

    pub fn is_missing(&self, row: usize) -> bool {
        self.missing[row]
    }

    pub fn numeric(&self) -> Option<&[f64]> {
        match &self.data {
            ColumnData::Numeric(v) => Some(v),
            _ => None,
        }
    }

    pub fn binary(&self) -> Option<&[u8]> {
        match &self.data {
            ColumnData::Binary(v) => Some(v),
            _ => None,
        }
    }

    pub fn text(&self) -> Option<&[Arc<str>]> {
        match &self.data {
            ColumnData::Text(v) => Some(v),
            _ => None,
        }
    }

    /// Numeric view of a numeric or binary column.
    pub fn as_f64(&self, row: usize) -> Option<f64> {
        match &self.data {
            ColumnData::Numeric(v) => Some(v[row]),
            ColumnData::Binary(v) => Some(f64::from(v[row])),
            _ => None,
        }
    }

    /// Textual rendering of a cell, `None` when missing. Matches the CSV
    /// encoding, so it doubles as a stable key for grouping.
    pub fn cell_string(&self, row: usize) -> Option<String> {
        if self.missing[row] {
            return None;
        }
        let joined = |parts: Vec<String>| parts.join(&LIST_DELIMITER.to_string());
        Some(match &self.data {
            ColumnData::Numeric(v) => format_f64(v[row]),
            ColumnData::Binary(v) => v[row].to_string(),
            ColumnData::Text(v) => v[row].to_string(),
            ColumnData::NumericList(v) => joined(v[row].iter().map(|x| format_f64(*x)).collect()),
            ColumnData::BinaryList(v) => joined(v[row].iter().map(|x| x.to_string()).collect()),
            ColumnData::TextList(v) => joined(v[row].iter().map(|x| x.to_string()).collect()),
        })
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: Arc<Schema>,
    columns: Vec<Column>,
    rows: usize,
}

impl Dataset {
    /// Assembles a dataset from typed columns, in schema order.
    pub fn from_columns(schema: Arc<Schema>, columns: Vec<Column>) -> Result<Self, String> {
        if columns.len() != schema.columns.len() {
            return Err(format!(
                "expected {} columns, got {}",
                schema.columns.len(),
                columns.len()
            ));
        }
        let rows = columns.first().map_or(0, |c| c.data.len());
        for (col, spec) in columns.iter().zip(&schema.columns) {
            if &col.spec != spec {
                return Err(format!("column '{}' does not match the schema", col.name()));
            }
            if col.data.len() != rows || col.missing.len() != rows {
                return Err(format!("column '{}' has a different row count", col.name()));
            }
        }
        Ok(Dataset { schema, columns, rows })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name() == name)
    }

    pub fn column_mut(&mut self, name: &str) -> Option<&mut Column> {
        self.columns.iter_mut().find(|c| c.name() == name)
    }

    /// New dataset with the given rows, in the given order.
    pub fn take(&self, rows: &[usize]) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                spec: c.spec.clone(),
                data: c.data.take(rows),
                missing: rows.iter().map(|&r| c.missing[r]).collect(),
            })
            .collect();
        Dataset {
            schema: Arc::clone(&self.schema),
            columns,
            rows: rows.len(),
        }
    }
}

/// Deduplicates string cells so repeated categories share one allocation.
#[derive(Default)]
pub(crate) struct Interner {
    map: HashMap<String, Arc<str>>,
}

impl Interner {
    pub(crate) fn intern(&mut self, s: &str) -> Arc<str> {
        if let Some(a) = self.map.get(s) {
            return Arc::clone(a);
        }
        let a: Arc<str> = Arc::from(s);
        self.map.insert(s.to_string(), Arc::clone(&a));
        a
    }
}

/// A problem found while reading a table. Rows are file line numbers (the
/// header is row 1); columns are 1-based field positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableIssue {
    pub row: Option<u64>,
    pub column: Option<usize>,
    pub column_name: Option<String>,
    pub message: String,
}

impl fmt::Display for TableIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(name) = &self.column_name {
            write!(f, "column '{name}': ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{}", .issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ReadError {
    pub issues: Vec<TableIssue>,
}
