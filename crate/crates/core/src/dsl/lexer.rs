// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

use super::diag::{DiagKind, Diagnostic, Loc};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Double(f64),
    Long(i64),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Colon,
    Eq,
    Plus,
    Minus,
    Star,
    Slash,
    Dot,
    Pipe,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Double(v) => format!("number `{v:?}`"),
            Tok::Long(v) => format!("number `{v}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Colon => ":",
            Tok::Eq => "=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Dot => ".",
            Tok::Pipe => "|",
            _ => "?",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub loc: Loc,
}

/// Tokenizes `src`. `origin` is the position of the first character, which
/// lets selector strings be re-lexed with positions pointing into the file.
pub fn tokenize(src: &str, origin: Loc) -> Result<Vec<Token>, Diagnostic> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = origin.line;
    let mut col = origin.col;

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let loc = Loc::new(line, col);
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                loc,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            let mut is_double = false;
            while i < chars.len() && chars[i].is_ascii_digit() {
                bump!();
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                is_double = true;
                bump!();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    bump!();
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_double = true;
                    while i < j {
                        bump!();
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        bump!();
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let tok = if is_double {
                match text.parse::<f64>() {
                    Ok(v) if v.is_finite() => Tok::Double(v),
                    _ => {
                        return Err(Diagnostic::error(
                            DiagKind::Lexical,
                            loc,
                            format!("number `{text}` is out of range"),
                        ))
                    }
                }
            } else {
                match text.parse::<i64>() {
                    Ok(v) => Tok::Long(v),
                    Err(_) => {
                        return Err(Diagnostic::error(
                            DiagKind::Lexical,
                            loc,
                            format!("integer `{text}` is out of range"),
                        ))
                    }
                }
            };
            out.push(Token { tok, loc });
            continue;
        }
        if c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                if i >= chars.len() {
                    return Err(Diagnostic::error(
                        DiagKind::Lexical,
                        loc,
                        "unterminated string literal",
                    ));
                }
                match chars[i] {
                    '"' => {
                        bump!();
                        break;
                    }
                    '\n' => {
                        return Err(Diagnostic::error(
                            DiagKind::Lexical,
                            loc,
                            "newline in string literal",
                        ))
                    }
                    '\\' => {
                        let esc_loc = Loc::new(line, col);
                        bump!();
                        match chars.get(i) {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            _ => {
                                return Err(Diagnostic::error(
                                    DiagKind::Lexical,
                                    esc_loc,
                                    "invalid escape sequence",
                                ))
                            }
                        }
                        bump!();
                    }
                    ch => {
                        s.push(ch);
                        bump!();
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                loc,
            });
            continue;
        }
        let tok = match c {
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ':' => Tok::Colon,
            '=' => Tok::Eq,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '.' => Tok::Dot,
            '|' => Tok::Pipe,
            other => {
                return Err(Diagnostic::error(
                    DiagKind::Lexical,
                    loc,
                    format!("unexpected character `{other}`"),
                ))
            }
        };
        bump!();
        out.push(Token { tok, loc });
    }
    out.push(Token {
        tok: Tok::Eof,
        loc: Loc::new(line, col),
    });
    Ok(out)
}
