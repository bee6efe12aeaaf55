use std::collections::HashSet;

use super::parser::{Pos, SchemaSpans};
use super::{ColumnType, Diagnostic, Schema, TargetType};

/// Checks schema-level rules. Returns one diagnostic per violation; an empty
/// list means the schema is valid. Positions default to (1, 1) since a bare
/// `Schema` carries no source locations.
pub fn validate_schema(schema: &Schema) -> Vec<Diagnostic> {
    validate_with_spans(schema, None)
}

pub(crate) fn validate_with_spans(schema: &Schema, spans: Option<&SchemaSpans>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |msg: String, pos: Option<Pos>| {
        let (line, column) = pos.unwrap_or((1, 1));
        out.push(Diagnostic::error(msg, line, column));
    };

    let mut seen = HashSet::new();
    for (i, col) in schema.columns.iter().enumerate() {
        let pos = spans.and_then(|s| s.columns.get(i)).map(|c| c.name);
        if col.col_name.is_empty() {
            push(format!("column {} has an empty col_name", i + 1), pos);
        } else if !seen.insert(col.col_name.as_str()) {
            push(format!("duplicate column '{}'", col.col_name), pos);
        }
    }

    if let Some(ts) = &schema.timestamp_col {
        let pos = spans.and_then(|s| s.timestamp_col);
        match schema.column(ts) {
            None => push(format!("timestamp_col '{ts}' is not a declared column"), pos),
            Some(c) if c.col_type != ColumnType::Numeric => push(
                format!("timestamp_col '{ts}' must be numeric, found {}", c.col_type),
                pos,
            ),
            Some(_) => {}
        }
    }

    if schema.targets.is_empty() {
        push("schema declares no targets".to_string(), None);
    }

    for (i, target) in schema.targets.iter().enumerate() {
        let tspans = spans.and_then(|s| s.targets.get(i));
        let n = i + 1;

        let label = schema.column(&target.label_col);
        match label {
            None => push(
                format!("target {n}: label_col '{}' is not a declared column", target.label_col),
                tspans.map(|s| s.label_col),
            ),
            Some(c) => {
                let required = match target.target_type {
                    TargetType::Binary => ColumnType::Binary,
                    TargetType::Numeric => ColumnType::Numeric,
                    TargetType::OrderedList | TargetType::UnorderedList => ColumnType::Categorical,
                };
                if c.col_type != required {
                    push(
                        format!(
                            "target {n}: label_col '{}' of target type {} must be {required}, found {}",
                            target.label_col, target.target_type, c.col_type
                        ),
                        tspans.map(|s| s.label_col),
                    );
                }
            }
        }

        if schema.column(&target.key_col).is_none() {
            push(
                format!("target {n}: key_col '{}' is not a declared column", target.key_col),
                tspans.map(|s| s.key_col),
            );
        }
        if target.key_col == target.label_col {
            push(
                format!("target {n}: key_col and label_col must differ"),
                tspans.map(|s| s.key_col),
            );
        }

        let list_fields = target.list_size.is_some() || target.relevance_col.is_some();
        if target.target_type.is_list() {
            if target.list_size.is_none() || target.relevance_col.is_none() {
                push(
                    format!(
                        "target {n}: {} target requires list_size and relevance_col",
                        target.target_type
                    ),
                    tspans.map(|s| s.object),
                );
            }
        } else if list_fields {
            push(
                format!("target {n}: list_size and relevance_col are only allowed on list targets"),
                tspans.map(|s| s.list_size.unwrap_or(s.object)),
            );
        }
        if target.list_size == Some(0) {
            push(
                format!("target {n}: list_size must be a positive integer"),
                tspans.and_then(|s| s.list_size),
            );
        }

        if let Some(rel) = &target.relevance_col {
            let pos = tspans.and_then(|s| s.relevance_col);
            match schema.column(rel) {
                None => push(
                    format!("target {n}: relevance_col '{rel}' is not a declared column"),
                    pos,
                ),
                Some(c) if !matches!(c.col_type, ColumnType::Binary | ColumnType::Numeric) => push(
                    format!(
                        "target {n}: relevance_col must be binary or numeric, '{rel}' is {}",
                        c.col_type
                    ),
                    pos,
                ),
                Some(_) => {}
            }
        }
    }
    out
}
