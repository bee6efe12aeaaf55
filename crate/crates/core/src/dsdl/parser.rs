//! Recursive-descent parser with panic-mode recovery.
//!
//! Object fields must appear in grammar order. On a grammar violation the
//! parser records a diagnostic, skips to a synchronisation point (the end of
//! the current object, or the next top-level section) and keeps going until
//! [`MAX_DIAGNOSTICS`] have been collected.

use super::lexer::{tokenize, Token, TokenKind};
use super::{ColumnSpec, ColumnType, Diagnostic, Schema, TargetSpec, TargetType, MAX_DIAGNOSTICS};

/// 1-based (line, column).
pub type Pos = (usize, usize);

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ColumnSpans {
    pub object: Pos,
    pub name: Pos,
    pub col_type: Pos,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TargetSpans {
    pub object: Pos,
    pub target_type: Pos,
    pub label_col: Pos,
    pub key_col: Pos,
    pub list_size: Option<Pos>,
    pub relevance_col: Option<Pos>,
}

/// Source positions of every schema element, parallel to [`Schema`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SchemaSpans {
    pub columns: Vec<ColumnSpans>,
    pub timestamp_col: Option<Pos>,
    pub targets: Vec<TargetSpans>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedDocument {
    pub schema: Schema,
    pub spans: SchemaSpans,
}

/// Grammar-level parse of a complete DsDL document, header included.
///
/// Schema-level rules (references, typing) are not checked here; see
/// [`super::validate_schema`] and [`super::parse_and_validate`].
pub fn parse_dsdl(text: &str) -> Result<ParsedDocument, Vec<Diagnostic>> {
    let tokens = tokenize(text).map_err(|d| vec![d])?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        diagnostics: Vec::new(),
        eof: end_position(text),
    };
    let parsed = parser.document();
    match parsed {
        Some(doc) if parser.diagnostics.is_empty() => Ok(doc),
        _ => {
            if parser.diagnostics.is_empty() {
                parser
                    .diagnostics
                    .push(Diagnostic::error("invalid document", parser.eof.0, parser.eof.1));
            }
            Err(parser.diagnostics)
        }
    }
}

/// Position of the last non-whitespace character, or (1, 1) for blank text.
fn end_position(text: &str) -> Pos {
    let (mut line, mut column) = (1, 1);
    let mut last = (1, 1);
    for c in text.chars() {
        if !c.is_whitespace() {
            last = (line, column);
        }
        if c == '\n' {
            line += 1;
            column = 1;
        } else {
            column += 1;
        }
    }
    last
}

struct Fail;

type PResult<T> = Result<T, Fail>;

const SECTIONS: [&str; 3] = ["columns", "timestamp_col", "target"];

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    diagnostics: Vec<Diagnostic>,
    eof: Pos,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&TokenKind> {
        self.peek().map(|t| &t.kind)
    }

    fn at_ident(&self, word: &str) -> bool {
        matches!(self.peek_kind(), Some(TokenKind::Ident(s)) if s == word)
    }

    fn current_pos(&self) -> Pos {
        self.peek().map(|t| (t.line, t.column)).unwrap_or(self.eof)
    }

    fn advance(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn saturated(&self) -> bool {
        self.diagnostics.len() >= MAX_DIAGNOSTICS
    }

    fn found(&self) -> String {
        match self.peek_kind() {
            Some(kind) => kind.to_string(),
            None => "end of input".to_string(),
        }
    }

    fn report(&mut self, message: String, at: Pos, expected: &[&str]) {
        if self.saturated() {
            return;
        }
        let mut d = Diagnostic::error(message, at.0, at.1);
        d.expected = expected.iter().map(|s| s.to_string()).collect();
        self.diagnostics.push(d);
    }

    /// Reports "expected <first of `expected`>, found ...". The full set is
    /// attached to the diagnostic.
    fn unexpected<T>(&mut self, expected: &[&str]) -> PResult<T> {
        let message = format!("expected {}, found {}", expected[0], self.found());
        self.report(message, self.current_pos(), expected);
        Err(Fail)
    }

    fn expect_punct(&mut self, kind: TokenKind) -> PResult<Pos> {
        if self.peek_kind() == Some(&kind) {
            let t = self.advance().expect("peeked");
            Ok((t.line, t.column))
        } else {
            self.unexpected(&[&kind.to_string()])
        }
    }

    fn expect_keyword(&mut self, word: &str) -> PResult<Pos> {
        if self.at_ident(word) {
            let t = self.advance().expect("peeked");
            Ok((t.line, t.column))
        } else {
            self.unexpected(&[&format!("'{word}'")])
        }
    }

    /// `"key" ":"`
    fn expect_field(&mut self, word: &str) -> PResult<()> {
        self.expect_keyword(word)?;
        self.expect_punct(TokenKind::Colon)?;
        Ok(())
    }

    fn string(&mut self) -> PResult<(String, Pos)> {
        match self.peek_kind() {
            Some(TokenKind::Ident(_) | TokenKind::Str(_)) => {
                let t = self.advance().expect("peeked");
                let value = match t.kind {
                    TokenKind::Ident(s) | TokenKind::Str(s) => s,
                    _ => unreachable!(),
                };
                Ok((value, (t.line, t.column)))
            }
            _ => self.unexpected(&["identifier or quoted string"]),
        }
    }

    fn at_section(&self) -> bool {
        match self.peek_kind() {
            Some(TokenKind::Ident(s)) if SECTIONS.contains(&s.as_str()) => {
                matches!(self.tokens.get(self.pos + 1).map(|t| &t.kind), Some(TokenKind::Colon))
            }
            _ => false,
        }
    }

    /// Skips to the next top-level section keyword or end of input, always
    /// consuming at least one token when not already at the end.
    fn sync_to_section(&mut self) {
        if self.peek().is_some() {
            self.pos += 1;
        }
        while self.peek().is_some() && !self.at_section() {
            self.pos += 1;
        }
    }

    /// Recovery inside a `[ {...}, {...} ]` list: skip past the closing brace
    /// of the broken object, or stop before `]`, `{` or a section keyword.
    fn sync_in_list(&mut self) {
        while let Some(kind) = self.peek_kind() {
            match kind {
                TokenKind::RBrace => {
                    self.pos += 1;
                    return;
                }
                TokenKind::RBracket | TokenKind::LBrace => return,
                _ if self.at_section() => return,
                _ => self.pos += 1,
            }
        }
    }

    fn document(&mut self) -> Option<ParsedDocument> {
        let mut spans = SchemaSpans::default();
        let mut ok = true;

        if self.expect_keyword("DsDL").is_err() || self.expect_punct(TokenKind::Colon).is_err() {
            ok = false;
            if !self.at_section() {
                self.sync_to_section();
            }
        }

        let columns = if self.at_ident("columns") {
            match self.section_list("columns", |p| p.column(), &mut spans.columns) {
                Ok(cols) => Some(cols),
                Err(Fail) => {
                    if !self.at_section() {
                        self.sync_to_section();
                    }
                    None
                }
            }
        } else {
            let _ = self.unexpected::<()>(&["'columns'"]);
            if !self.at_section() {
                self.sync_to_section();
            }
            None
        };
        if self.saturated() {
            return None;
        }

        let mut timestamp_col = None;
        if self.at_ident("timestamp_col") {
            let parsed = self.expect_field("timestamp_col").and_then(|_| self.string());
            match parsed {
                Ok((name, pos)) => {
                    timestamp_col = Some(name);
                    spans.timestamp_col = Some(pos);
                }
                Err(Fail) => {
                    ok = false;
                    if !self.at_section() {
                        self.sync_to_section();
                    }
                }
            }
        }
        if self.saturated() {
            return None;
        }

        let targets = if self.at_ident("target") {
            self.section_list("target", |p| p.target(), &mut spans.targets).ok()
        } else {
            let expected: &[&str] = if timestamp_col.is_none() && spans.timestamp_col.is_none() {
                &["'target'", "'timestamp_col'"]
            } else {
                &["'target'"]
            };
            let _ = self.unexpected::<()>(expected);
            None
        };

        if targets.is_some() && self.peek().is_some() {
            let _ = self.unexpected::<()>(&["end of input"]);
            ok = false;
        }

        match (columns, targets) {
            (Some(columns), Some(targets)) if ok => Some(ParsedDocument {
                schema: Schema {
                    columns,
                    timestamp_col,
                    targets,
                },
                spans,
            }),
            _ => None,
        }
    }

    /// `keyword ":" "[" item { "," item } "]"`
    fn section_list<T, S>(
        &mut self,
        keyword: &str,
        mut item: impl FnMut(&mut Self) -> PResult<(T, S)>,
        spans: &mut Vec<S>,
    ) -> PResult<Vec<T>> {
        self.expect_field(keyword)?;
        self.expect_punct(TokenKind::LBracket)?;
        let mut items = Vec::new();
        let mut failed = false;
        loop {
            if self.saturated() {
                return Err(Fail);
            }
            match item(self) {
                Ok((value, span)) => {
                    items.push(value);
                    spans.push(span);
                }
                Err(Fail) => {
                    failed = true;
                    self.sync_in_list();
                    if self.peek().is_none() || self.at_section() {
                        return Err(Fail);
                    }
                }
            }
            match self.peek_kind() {
                Some(TokenKind::Comma) => {
                    self.advance();
                }
                Some(TokenKind::RBracket) => {
                    self.advance();
                    break;
                }
                Some(TokenKind::LBrace) => {
                    // missing separator; report and keep parsing the next object
                    let _ = self.unexpected::<()>(&["','", "']'"]);
                    failed = true;
                }
                _ => return self.unexpected(&["','", "']'"]),
            }
        }
        if failed {
            Err(Fail)
        } else {
            Ok(items)
        }
    }

    fn column(&mut self) -> PResult<(ColumnSpec, ColumnSpans)> {
        let object = self.expect_punct(TokenKind::LBrace)?;
        self.expect_field("col_name")?;
        let (col_name, name) = self.string()?;
        self.expect_punct(TokenKind::Comma)?;
        self.expect_field("type")?;
        let type_pos = self.current_pos();
        let col_type = match self.peek_kind() {
            Some(TokenKind::Ident(word)) => match word.parse::<ColumnType>() {
                Ok(t) => {
                    self.advance();
                    t
                }
                Err(()) => {
                    let word = word.clone();
                    let expected: Vec<&str> = ColumnType::ALL.iter().map(|t| t.as_str()).collect();
                    self.report(format!("unknown column type '{word}'"), type_pos, &expected);
                    return Err(Fail);
                }
            },
            _ => return self.unexpected(&["column type"]),
        };
        self.expect_punct(TokenKind::RBrace)?;
        Ok((
            ColumnSpec { col_name, col_type },
            ColumnSpans {
                object,
                name,
                col_type: type_pos,
            },
        ))
    }

    fn target(&mut self) -> PResult<(TargetSpec, TargetSpans)> {
        let object = self.expect_punct(TokenKind::LBrace)?;
        self.expect_field("type")?;
        let type_pos = self.current_pos();
        let target_type = match self.peek_kind() {
            Some(TokenKind::Ident(word)) => match word.parse::<TargetType>() {
                Ok(t) => {
                    self.advance();
                    t
                }
                Err(()) => {
                    let word = word.clone();
                    let expected: Vec<&str> = TargetType::ALL.iter().map(|t| t.as_str()).collect();
                    self.report(format!("unknown target type '{word}'"), type_pos, &expected);
                    return Err(Fail);
                }
            },
            _ => return self.unexpected(&["target type"]),
        };
        self.expect_punct(TokenKind::Comma)?;
        self.expect_field("label_col")?;
        let (label_col, label_pos) = self.string()?;
        self.expect_punct(TokenKind::Comma)?;
        self.expect_field("key_col")?;
        let (key_col, key_pos) = self.string()?;

        let mut list_size = None;
        let mut relevance_col = None;
        let mut list_size_pos = None;
        let mut relevance_pos = None;
        if self.peek_kind() == Some(&TokenKind::Comma) {
            self.advance();
            self.expect_field("list_size")?;
            let size_pos = self.current_pos();
            match self.peek_kind() {
                Some(TokenKind::Int(n)) => {
                    let n = *n;
                    self.advance();
                    if n == 0 {
                        self.report(
                            "list_size must be a positive integer".to_string(),
                            size_pos,
                            &["positive integer"],
                        );
                        return Err(Fail);
                    }
                    list_size = Some(n);
                    list_size_pos = Some(size_pos);
                }
                _ => return self.unexpected(&["positive integer"]),
            }
            self.expect_punct(TokenKind::Comma)?;
            self.expect_field("relevance_col")?;
            let (name, pos) = self.string()?;
            relevance_col = Some(name);
            relevance_pos = Some(pos);
        }
        let close = self.current_pos();
        self.expect_punct(TokenKind::RBrace)?;

        if target_type.is_list() && list_size.is_none() {
            self.report(
                format!("{target_type} target requires list_size and relevance_col"),
                close,
                &["','"],
            );
            return Err(Fail);
        }
        if !target_type.is_list() && list_size.is_some() {
            self.report(
                format!(
                    "list_size and relevance_col are only allowed on ordered_list and unordered_list targets, not {target_type}"
                ),
                list_size_pos.unwrap_or(close),
                &["'}'"],
            );
            return Err(Fail);
        }

        Ok((
            TargetSpec {
                target_type,
                label_col,
                key_col,
                list_size,
                relevance_col,
            },
            TargetSpans {
                object,
                target_type: type_pos,
                label_col: label_pos,
                key_col: key_pos,
                list_size: list_size_pos,
                relevance_col: relevance_pos,
            },
        ))
    }
}
