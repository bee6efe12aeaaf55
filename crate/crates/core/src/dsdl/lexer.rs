use std::fmt;

use super::Diagnostic;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TokenKind {
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Colon,
    Comma,
    Ident(String),
    Str(String),
    Int(u64),
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::LBrace => f.write_str("'{'"),
            TokenKind::RBrace => f.write_str("'}'"),
            TokenKind::LBracket => f.write_str("'['"),
            TokenKind::RBracket => f.write_str("']'"),
            TokenKind::Colon => f.write_str("':'"),
            TokenKind::Comma => f.write_str("','"),
            TokenKind::Ident(s) => write!(f, "'{s}'"),
            TokenKind::Str(s) => write!(f, "string {s:?}"),
            TokenKind::Int(n) => write!(f, "integer {n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub column: usize,
}

pub(crate) fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub(crate) fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-')
}

/// True when `s` lexes as a single bare identifier token.
pub(crate) fn is_bare_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if is_ident_start(c) => chars.all(is_ident_continue),
        _ => false,
    }
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }
}

/// Splits DsDL text into tokens. Stops at the first lexical error.
pub fn tokenize(text: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut cur = Cursor {
        chars: text.chars().peekable(),
        line: 1,
        column: 1,
    };
    let mut tokens = Vec::new();

    while let Some(c) = cur.peek() {
        let (line, column) = (cur.line, cur.column);
        let punct = match c {
            '{' => Some(TokenKind::LBrace),
            '}' => Some(TokenKind::RBrace),
            '[' => Some(TokenKind::LBracket),
            ']' => Some(TokenKind::RBracket),
            ':' => Some(TokenKind::Colon),
            ',' => Some(TokenKind::Comma),
            _ => None,
        };
        if let Some(kind) = punct {
            cur.bump();
            tokens.push(Token { kind, line, column });
            continue;
        }

        if c.is_whitespace() {
            cur.bump();
        } else if c == '#' {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
        } else if c == '"' {
            cur.bump();
            let mut value = String::new();
            loop {
                match cur.bump() {
                    None => return Err(Diagnostic::error("unterminated quoted string", line, column)),
                    Some('"') => break,
                    Some('\\') => {
                        let (el, ec) = (cur.line, cur.column);
                        match cur.bump() {
                            Some(e @ ('"' | '\\')) => value.push(e),
                            Some(other) => {
                                return Err(Diagnostic::error(
                                    format!("invalid escape '\\{other}' in quoted string"),
                                    el,
                                    ec.saturating_sub(1).max(1),
                                ))
                            }
                            None => return Err(Diagnostic::error("unterminated quoted string", line, column)),
                        }
                    }
                    Some(other) => value.push(other),
                }
            }
            tokens.push(Token {
                kind: TokenKind::Str(value),
                line,
                column,
            });
        } else if c.is_ascii_digit() {
            let mut digits = String::new();
            while let Some(d) = cur.peek() {
                if !d.is_ascii_digit() {
                    break;
                }
                digits.push(d);
                cur.bump();
            }
            if cur.peek().is_some_and(is_ident_start) {
                return Err(Diagnostic::error(
                    format!("malformed token starting with '{digits}'; quote names that begin with a digit"),
                    line,
                    column,
                ));
            }
            let value = digits
                .parse::<u64>()
                .map_err(|_| Diagnostic::error(format!("integer '{digits}' is out of range"), line, column))?;
            tokens.push(Token {
                kind: TokenKind::Int(value),
                line,
                column,
            });
        } else if is_ident_start(c) {
            let mut ident = String::new();
            while let Some(d) = cur.peek() {
                if !is_ident_continue(d) {
                    break;
                }
                ident.push(d);
                cur.bump();
            }
            tokens.push(Token {
                kind: TokenKind::Ident(ident),
                line,
                column,
            });
        } else {
            return Err(Diagnostic::error(format!("illegal character {c:?}"), line, column));
        }
    }
    Ok(tokens)
}
