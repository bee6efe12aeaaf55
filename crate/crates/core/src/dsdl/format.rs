use std::fmt::Write;

use super::lexer::is_bare_ident;
use super::Schema;

const CONTINUATION: &str = "              ";

fn name(s: &str) -> String {
    if is_bare_ident(s) {
        s.to_string()
    } else {
        let mut out = String::with_capacity(s.len() + 2);
        out.push('"');
        for c in s.chars() {
            if matches!(c, '"' | '\\') {
                out.push('\\');
            }
            out.push(c);
        }
        out.push('"');
        out
    }
}

/// Canonical text form: `DsDL:` header, 4-space section indentation, one
/// column object per line, one target field per line, trailing newline.
pub fn serialize(schema: &Schema) -> String {
    let mut out = String::from("DsDL:\n    columns: [");
    for (i, col) in schema.columns.iter().enumerate() {
        if i > 0 {
            out.push_str(",\n");
            out.push_str(CONTINUATION);
        }
        let _ = write!(out, "{{col_name: {}, type: {}}}", name(&col.col_name), col.col_type);
    }
    out.push_str("]\n");

    if let Some(ts) = &schema.timestamp_col {
        let _ = writeln!(out, "    timestamp_col: {}", name(ts));
    }

    out.push_str("    target: [");
    for (i, t) in schema.targets.iter().enumerate() {
        if i > 0 {
            out.push_str(",\n             ");
        }
        let _ = write!(
            out,
            "{{type: {},\n{CONTINUATION}label_col: {},\n{CONTINUATION}key_col: {}",
            t.target_type,
            name(&t.label_col),
            name(&t.key_col)
        );
        if let Some(size) = t.list_size {
            let _ = write!(out, ",\n{CONTINUATION}list_size: {size}");
        }
        if let Some(rel) = &t.relevance_col {
            let _ = write!(out, ",\n{CONTINUATION}relevance_col: {}", name(rel));
        }
        out.push('}');
    }
    out.push_str("]\n");
    out
}
