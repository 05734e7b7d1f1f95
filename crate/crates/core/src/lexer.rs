//! Tokenizer for `.imp` source.

use std::fmt;

use thiserror::Error;

use crate::ast::Pos;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Keyword,
    Ident,
    Int,
    Operator,
    Punct,
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub line: u32,
    pub column: u32,
}

impl Token {
    pub fn pos(&self) -> Pos {
        Pos::new(self.line, self.column)
    }

    /// True for a keyword, operator or punctuation token with this spelling.
    pub fn is(&self, text: &str) -> bool {
        matches!(self.kind, TokenKind::Keyword | TokenKind::Operator | TokenKind::Punct)
            && self.lexeme == text
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TokenKind::Eof => f.write_str("end of input"),
            _ => write!(f, "`{}`", self.lexeme),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: unexpected character {found:?}")]
pub struct LexError {
    pub line: u32,
    pub column: u32,
    pub found: char,
}

pub const KEYWORDS: &[&str] = &[
    "var", "i32", "u32", "skip", "if", "then", "else", "end", "while", "invariant", "do", "done",
    "true", "false",
];

// Longest match first.
const OPERATORS: &[&str] = &[
    ":=", "<=", "<<", ">>", "||", "&&", "->", "+", "-", "*", "&", "|", "^", "~", "=", "<", "!",
];

const PUNCT: &[char] = &['(', ')', '{', '}', ':', ';'];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

pub fn lex(source: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }

        let start = i;
        let kind = if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            TokenKind::Int
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            if is_keyword(&word) {
                TokenKind::Keyword
            } else {
                TokenKind::Ident
            }
        } else if let Some(op) = OPERATORS.iter().find(|op| {
            let n = op.chars().count();
            i + n <= chars.len() && op.chars().eq(chars[i..i + n].iter().copied())
        }) {
            i += op.chars().count();
            TokenKind::Operator
        } else if PUNCT.contains(&c) {
            i += 1;
            TokenKind::Punct
        } else {
            return Err(LexError { line, column: col, found: c });
        };

        let lexeme: String = chars[start..i].iter().collect();
        tokens.push(Token { kind, lexeme, line, column: col });
        col += (i - start) as u32;
    }

    tokens.push(Token { kind: TokenKind::Eof, lexeme: String::new(), line, column: col });
    Ok(tokens)
}
