//! Dataset Description Language (DsDL).
//!
//! A DsDL document declares the columns of a flat table, an optional
//! timestamp column, and one or more prediction targets:
//!
//! ```text
//! DsDL:
//!     columns: [{col_name: user_id, type: categorical},
//!               {col_name: movie_id, type: categorical},
//!               {col_name: rating, type: numeric}]
//!     target: [{type: ordered_list,
//!               label_col: movie_id,
//!               key_col: user_id,
//!               list_size: 10,
//!               relevance_col: rating}]
//! ```
//!
//! [`parse_dsdl`] performs the grammar-level parse, [`validate_schema`]
//! checks cross-references and typing rules, and [`parse_and_validate`]
//! runs both with source positions attached to every diagnostic.
//! [`serialize`] produces the canonical text form.

mod format;
mod lexer;
mod parser;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use format::serialize;
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::{parse_dsdl, ParsedDocument, SchemaSpans};
pub use validate::validate_schema;

/// Maximum number of diagnostics collected by one parse.
pub const MAX_DIAGNOSTICS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnType {
    Numeric,
    Binary,
    Categorical,
    Ordinal,
    Textual,
    Url,
    ListOfNumeric,
    ListOfBinary,
    ListOfCategorical,
    ListOfUrl,
    ListOfOrdinal,
    ListOfTextual,
}

impl ColumnType {
    pub const ALL: [ColumnType; 12] = [
        ColumnType::Numeric,
        ColumnType::Binary,
        ColumnType::Categorical,
        ColumnType::Ordinal,
        ColumnType::Textual,
        ColumnType::Url,
        ColumnType::ListOfNumeric,
        ColumnType::ListOfBinary,
        ColumnType::ListOfCategorical,
        ColumnType::ListOfUrl,
        ColumnType::ListOfOrdinal,
        ColumnType::ListOfTextual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Numeric => "numeric",
            ColumnType::Binary => "binary",
            ColumnType::Categorical => "categorical",
            ColumnType::Ordinal => "ordinal",
            ColumnType::Textual => "textual",
            ColumnType::Url => "url",
            ColumnType::ListOfNumeric => "list_of_numeric",
            ColumnType::ListOfBinary => "list_of_binary",
            ColumnType::ListOfCategorical => "list_of_categorical",
            ColumnType::ListOfUrl => "list_of_url",
            ColumnType::ListOfOrdinal => "list_of_ordinal",
            ColumnType::ListOfTextual => "list_of_textual",
        }
    }

    /// Element type of a list type; `None` for scalar types.
    pub fn element(self) -> Option<ColumnType> {
        match self {
            ColumnType::ListOfNumeric => Some(ColumnType::Numeric),
            ColumnType::ListOfBinary => Some(ColumnType::Binary),
            ColumnType::ListOfCategorical => Some(ColumnType::Categorical),
            ColumnType::ListOfUrl => Some(ColumnType::Url),
            ColumnType::ListOfOrdinal => Some(ColumnType::Ordinal),
            ColumnType::ListOfTextual => Some(ColumnType::Textual),
            _ => None,
        }
    }

    pub fn is_list(self) -> bool {
        self.element().is_some()
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ColumnType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ColumnType::ALL.iter().copied().find(|t| t.as_str() == s).ok_or(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetType {
    Binary,
    Numeric,
    OrderedList,
    UnorderedList,
}

impl TargetType {
    pub const ALL: [TargetType; 4] = [
        TargetType::Binary,
        TargetType::Numeric,
        TargetType::OrderedList,
        TargetType::UnorderedList,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TargetType::Binary => "binary",
            TargetType::Numeric => "numeric",
            TargetType::OrderedList => "ordered_list",
            TargetType::UnorderedList => "unordered_list",
        }
    }

    pub fn is_list(self) -> bool {
        matches!(self, TargetType::OrderedList | TargetType::UnorderedList)
    }
}

impl fmt::Display for TargetType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TargetType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TargetType::ALL.iter().copied().find(|t| t.as_str() == s).ok_or(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub col_name: String,
    pub col_type: ColumnType,
}

impl ColumnSpec {
    pub fn new(col_name: impl Into<String>, col_type: ColumnType) -> Self {
        ColumnSpec {
            col_name: col_name.into(),
            col_type,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub target_type: TargetType,
    pub label_col: String,
    pub key_col: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list_size: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance_col: Option<String>,
}

/// A parsed DsDL document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    #[serde(default)]
    pub timestamp_col: Option<String>,
    pub targets: Vec<TargetSpec>,
}

impl Schema {
    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.col_name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.col_name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

/// A positioned message produced while lexing, parsing or validating.
/// Lines and columns are 1-based; columns count characters, not bytes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub line: usize,
    pub column: usize,
    /// Token set the parser would have accepted, when the diagnostic is a
    /// grammar violation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expected: Vec<String>,
}

impl Diagnostic {
    pub fn error(message: impl Into<String>, line: usize, column: usize) -> Self {
        Diagnostic {
            severity: Severity::Error,
            message: message.into(),
            line,
            column,
            expected: Vec::new(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}", self.severity, self.line, self.column, self.message)
    }
}

/// Parses `text` and validates the resulting schema, attaching source
/// positions to validation diagnostics.
pub fn parse_and_validate(text: &str) -> Result<Schema, Vec<Diagnostic>> {
    let parsed = parse_dsdl(text)?;
    let diagnostics = validate::validate_with_spans(&parsed.schema, Some(&parsed.spans));
    if diagnostics.iter().any(Diagnostic::is_error) {
        Err(diagnostics)
    } else {
        Ok(parsed.schema)
    }
}
