//! Random valid schemas and a whitespace-scrambling printer for them.

use dtirs_core::dsdl::{ColumnSpec, ColumnType, Schema, TargetSpec, TargetType};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const NAME_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_.-";

fn fresh_name(rng: &mut ChaCha8Rng, taken: &mut Vec<String>) -> String {
    loop {
        let name = if rng.gen_bool(0.15) {
            // needs quoting
            let pieces = ["total spend", "a\"b", "back\\slash", "1st", "naïve", "x y z"];
            format!("{}{}", pieces.choose(rng).unwrap(), rng.gen_range(0..1000))
        } else {
            let first = (b'a' + rng.gen_range(0..26)) as char;
            let len = rng.gen_range(0..10);
            let rest: String = (0..len)
                .map(|_| NAME_CHARS[rng.gen_range(0..NAME_CHARS.len())] as char)
                .collect();
            format!("{first}{rest}")
        };
        if !taken.contains(&name) {
            taken.push(name.clone());
            return name;
        }
    }
}

pub fn random_schema(rng: &mut ChaCha8Rng) -> Schema {
    let mut names = Vec::new();
    let mut columns: Vec<ColumnSpec> = (0..rng.gen_range(1..8))
        .map(|_| ColumnSpec::new(fresh_name(rng, &mut names), *ColumnType::ALL.choose(rng).unwrap()))
        .collect();
    let mut targets = Vec::new();
    for _ in 0..rng.gen_range(1..4) {
        let target_type = *TargetType::ALL.choose(rng).unwrap();
        let label_type = match target_type {
            TargetType::Binary => ColumnType::Binary,
            TargetType::Numeric => ColumnType::Numeric,
            _ => ColumnType::Categorical,
        };
        let label_col = fresh_name(rng, &mut names);
        let key_col = columns.choose(rng).unwrap().col_name.clone();
        columns.push(ColumnSpec::new(label_col.clone(), label_type));
        let (list_size, relevance_col) = if target_type.is_list() {
            let rel = fresh_name(rng, &mut names);
            let rel_type = if rng.gen_bool(0.5) {
                ColumnType::Numeric
            } else {
                ColumnType::Binary
            };
            columns.push(ColumnSpec::new(rel.clone(), rel_type));
            (Some(rng.gen_range(1..=1000)), Some(rel))
        } else {
            (None, None)
        };
        targets.push(TargetSpec {
            target_type,
            label_col,
            key_col,
            list_size,
            relevance_col,
        });
    }
    let timestamp_col = rng.gen_bool(0.5).then(|| {
        let ts = fresh_name(rng, &mut names);
        columns.push(ColumnSpec::new(ts.clone(), ColumnType::Numeric));
        ts
    });
    columns.shuffle(rng);
    Schema {
        columns,
        timestamp_col,
        targets,
    }
}

fn quote(name: &str, rng: &mut ChaCha8Rng) -> String {
    let bare = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'));
    if bare && rng.gen_bool(0.8) {
        return name.to_string();
    }
    let escaped: String = name
        .chars()
        .flat_map(|c| match c {
            '"' | '\\' => vec!['\\', c],
            _ => vec![c],
        })
        .collect();
    format!("\"{escaped}\"")
}

/// Random inline whitespace, sometimes a line break or a comment.
fn gap(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..6) {
        0 => String::new(),
        1 => "\n      ".to_string(),
        2 => "  # note\n   ".to_string(),
        3 => "\t".to_string(),
        _ => " ".to_string(),
    }
}

/// Prints `schema` as DsDL with scrambled spacing inside the brackets.
pub fn scrambled_text(schema: &Schema, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::from("DsDL:\n    columns: [");
    for (i, c) in schema.columns.iter().enumerate() {
        if i > 0 {
            out += &format!(",{}", gap(rng));
        }
        out += &format!(
            "{{{}col_name:{}{},{}type: {}{}}}",
            gap(rng),
            gap(rng),
            quote(&c.col_name, rng),
            gap(rng),
            c.col_type,
            gap(rng)
        );
    }
    out += "]\n";
    if let Some(ts) = &schema.timestamp_col {
        out += &format!("    timestamp_col: {}\n", quote(ts, rng));
    }
    out += "    target: [";
    for (i, t) in schema.targets.iter().enumerate() {
        if i > 0 {
            out += &format!(",{}", gap(rng));
        }
        out += &format!(
            "{{type:{}{},{}label_col: {},{}key_col: {}",
            gap(rng),
            t.target_type,
            gap(rng),
            quote(&t.label_col, rng),
            gap(rng),
            quote(&t.key_col, rng)
        );
        if let (Some(k), Some(rel)) = (t.list_size, &t.relevance_col) {
            out += &format!(
                ",{}list_size: {k},{}relevance_col: {}",
                gap(rng),
                gap(rng),
                quote(rel, rng)
            );
        }
        out += &format!("{}}}", gap(rng));
    }
    out += "]\n";
    out
}
