use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

use crate::dsdl::{ColumnType, Schema};

use super::{Column, ColumnData, Dataset, Interner, ReadError, TableIssue, LIST_DELIMITER};

const MAX_ISSUES: usize = 20;

#[derive(Clone, Copy, Debug, Default)]
pub struct ReadOptions {
    /// Drop columns absent from the schema (with a warning) instead of failing.
    pub allow_extra_columns: bool,
}

#[derive(Debug)]
pub struct ReadOutcome {
    pub dataset: Dataset,
    pub warnings: Vec<TableIssue>,
}

fn issue(row: Option<u64>, column: Option<usize>, name: Option<&str>, message: String) -> TableIssue {
    TableIssue {
        row,
        column,
        column_name: name.map(str::to_string),
        message,
    }
}

/// Reads a CSV table (header row required, comma delimiter, double-quote
/// quoting) and types every cell against `schema`.
pub fn read_table<R: Read>(source: R, schema: &Arc<Schema>, options: ReadOptions) -> Result<ReadOutcome, ReadError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let fail = |issues: Vec<TableIssue>| Err(ReadError { issues });

    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return fail(vec![issue(Some(1), None, None, format!("cannot read header: {e}"))]),
    };

    let mut issues = Vec::new();
    let mut warnings = Vec::new();
    let mut positions: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if positions.insert(h, i).is_some() {
            issues.push(issue(Some(1), Some(i + 1), Some(h), "duplicate header".into()));
        } else if schema.column(h).is_none() {
            let msg = "unknown header not declared in the schema".to_string();
            if options.allow_extra_columns {
                warnings.push(issue(Some(1), Some(i + 1), Some(h), format!("{msg}; column dropped")));
            } else {
                issues.push(issue(Some(1), Some(i + 1), Some(h), msg));
            }
        }
    }
    for spec in &schema.columns {
        if !positions.contains_key(spec.col_name.as_str()) {
            issues.push(issue(Some(1), None, Some(&spec.col_name), "missing header".into()));
        }
    }
    if !issues.is_empty() {
        return fail(issues);
    }

    let field_of: Vec<usize> = schema.columns.iter().map(|c| positions[c.col_name.as_str()]).collect();
    let mut builders: Vec<ColumnBuilder> = schema.columns.iter().map(|c| ColumnBuilder::new(c.col_type)).collect();

    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let row = e.position().map(|p| p.line());
                issues.push(issue(row, None, None, format!("malformed CSV: {e}")));
                break;
            }
        }
        let row = record.position().map_or(0, |p| p.line());
        for ((spec, builder), &field) in schema.columns.iter().zip(&mut builders).zip(&field_of) {
            if let Err(msg) = builder.push(&record[field]) {
                issues.push(issue(
                    Some(row),
                    Some(field + 1),
                    Some(&spec.col_name),
                    format!("{msg} at row {row}"),
                ));
                if issues.len() >= MAX_ISSUES {
                    return fail(issues);
                }
            }
        }
    }
    if !issues.is_empty() {
        return fail(issues);
    }

    let columns = schema
        .columns
        .iter()
        .zip(builders)
        .map(|(spec, b)| Column {
            spec: spec.clone(),
            data: b.data,
            missing: b.missing,
        })
        .collect();
    let dataset = Dataset::from_columns(Arc::clone(schema), columns).map_err(|m| ReadError {
        issues: vec![issue(None, None, None, m)],
    })?;
    Ok(ReadOutcome { dataset, warnings })
}

struct ColumnBuilder {
    col_type: ColumnType,
    data: ColumnData,
    missing: Vec<bool>,
    interner: Interner,
}

fn parse_numeric(cell: &str) -> Result<f64, String> {
    let x: f64 = cell
        .trim()
        .parse()
        .map_err(|_| format!("expected a number, found {cell:?}"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("non-finite number {cell:?}"))
    }
}

fn parse_binary(cell: &str) -> Result<u8, String> {
    match cell.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(format!("expected 0 or 1, found {cell:?}")),
    }
}

impl ColumnBuilder {
    fn new(col_type: ColumnType) -> Self {
        ColumnBuilder {
            col_type,
            data: ColumnData::empty_for(col_type),
            missing: Vec::new(),
            interner: Interner::default(),
        }
    }

    fn push(&mut self, cell: &str) -> Result<(), String> {
        let is_empty = cell.is_empty();
        let elements = || -> Vec<&str> {
            if is_empty {
                Vec::new()
            } else {
                cell.split(LIST_DELIMITER).collect()
            }
        };
        // Typed push happens only after the cell parses, so a failing cell
        // leaves columns unevenly sized; the read is aborted in that case.
        match &mut self.data {
            ColumnData::Numeric(v) => v.push(if is_empty { 0.0 } else { parse_numeric(cell)? }),
            ColumnData::Binary(v) => v.push(if is_empty { 0 } else { parse_binary(cell)? }),
            ColumnData::Text(v) => v.push(self.interner.intern(cell)),
            ColumnData::NumericList(v) => {
                let list = elements()
                    .into_iter()
                    .map(parse_numeric)
                    .collect::<Result<Vec<_>, _>>()?;
                v.push(list);
            }
            ColumnData::BinaryList(v) => {
                let list = elements()
                    .into_iter()
                    .map(parse_binary)
                    .collect::<Result<Vec<_>, _>>()?;
                v.push(list);
            }
            ColumnData::TextList(v) => {
                let list = elements().into_iter().map(|e| self.interner.intern(e)).collect();
                v.push(list);
            }
        }
        self.missing.push(is_empty && !self.col_type.is_list());
        Ok(())
    }
}

/// Writes `dataset` back out in the format [`read_table`] accepts.
pub fn write_table<W: Write>(dataset: &Dataset, sink: W) -> std::io::Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let to_io = |e: csv::Error| std::io::Error::other(e.to_string());
    writer
        .write_record(dataset.columns().iter().map(|c| c.name()))
        .map_err(to_io)?;
    for row in 0..dataset.rows() {
        let cells: Vec<String> = dataset
            .columns()
            .iter()
            .map(|c| c.cell_string(row).unwrap_or_default())
            .collect();
        writer.write_record(&cells).map_err(to_io)?;
    }
    writer.flush()
}
