//! Tokenizer for the query language.
//!
//! Keywords are not reserved at the lexical level; they surface as `Ident`
//! tokens and the parser decides by position. Numeric literals keep their
//! token class: plain digits are integers, a decimal point makes a decimal,
//! an exponent makes a double.

use bigdecimal::BigDecimal;
use num_bigint::BigInt;
use std::str::FromStr;

use crate::error::{Error, ErrorCode, Result, Span};

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Var(String), // $name
    ContextItem, // $$
    StringLit(String),
    IntegerLit(BigInt),
    DecimalLit(BigDecimal),
    DoubleLit(f64),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Dot,
    Bang,
    Colon,
    ColonEq,
    Plus,
    Minus,
    Star,
    Question,
    Concat, // ||
    Bar,    // |
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Ident(s) => format!("'{s}'"),
            TokenKind::Var(s) => format!("${s}"),
            TokenKind::ContextItem => "$$".into(),
            TokenKind::StringLit(_) => "string literal".into(),
            TokenKind::IntegerLit(_) | TokenKind::DecimalLit(_) | TokenKind::DoubleLit(_) => {
                "number".into()
            }
            TokenKind::LParen => "'('".into(),
            TokenKind::RParen => "')'".into(),
            TokenKind::LBrace => "'{'".into(),
            TokenKind::RBrace => "'}'".into(),
            TokenKind::LBracket => "'['".into(),
            TokenKind::RBracket => "']'".into(),
            TokenKind::Comma => "','".into(),
            TokenKind::Dot => "'.'".into(),
            TokenKind::Bang => "'!'".into(),
            TokenKind::Colon => "':'".into(),
            TokenKind::ColonEq => "':='".into(),
            TokenKind::Plus => "'+'".into(),
            TokenKind::Minus => "'-'".into(),
            TokenKind::Star => "'*'".into(),
            TokenKind::Question => "'?'".into(),
            TokenKind::Concat => "'||'".into(),
            TokenKind::Bar => "'|'".into(),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

impl Token {
    pub fn is_ident(&self, word: &str) -> bool {
        matches!(&self.kind, TokenKind::Ident(s) if s == word)
    }

    pub fn end_offset(&self) -> u32 {
        self.span.offset + self.span.length
    }
}

pub fn tokenize(text: &str) -> Result<Vec<Token>> {
    Lexer::new(text).run()
}

struct Lexer<'a> {
    chars: Vec<(usize, char)>,
    text: &'a str,
    idx: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer { chars: text.char_indices().collect(), text, idx: 0, line: 1, col: 1 }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.idx).map(|&(_, c)| c)
    }

    fn peek2(&self) -> Option<char> {
        self.chars.get(self.idx + 1).map(|&(_, c)| c)
    }

    fn offset(&self) -> u32 {
        self.chars.get(self.idx).map(|&(o, _)| o as u32).unwrap_or(self.text.len() as u32)
    }

    fn bump(&mut self) -> Option<char> {
        let &(_, c) = self.chars.get(self.idx)?;
        self.idx += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn error_here(&self, message: impl Into<String>) -> Error {
        Error::new(ErrorCode::Syntax, message)
            .with_span(Span::new(self.line, self.col, self.offset(), 1))
    }

    fn run(mut self) -> Result<Vec<Token>> {
        let mut tokens = Vec::new();
        loop {
            self.skip_trivia()?;
            let start_line = self.line;
            let start_col = self.col;
            let start = self.offset();
            let Some(c) = self.peek() else {
                tokens.push(Token {
                    kind: TokenKind::Eof,
                    span: Span::new(start_line, start_col, start, 0),
                });
                return Ok(tokens);
            };
            let kind = match c {
                '(' => {
                    self.bump();
                    TokenKind::LParen
                }
                ')' => {
                    self.bump();
                    TokenKind::RParen
                }
                '{' => {
                    self.bump();
                    TokenKind::LBrace
                }
                '}' => {
                    self.bump();
                    TokenKind::RBrace
                }
                '[' => {
                    self.bump();
                    TokenKind::LBracket
                }
                ']' => {
                    self.bump();
                    TokenKind::RBracket
                }
                ',' => {
                    self.bump();
                    TokenKind::Comma
                }
                '+' => {
                    self.bump();
                    TokenKind::Plus
                }
                '-' => {
                    self.bump();
                    TokenKind::Minus
                }
                '*' => {
                    self.bump();
                    TokenKind::Star
                }
                '?' => {
                    self.bump();
                    TokenKind::Question
                }
                '!' => {
                    self.bump();
                    TokenKind::Bang
                }
                ':' => {
                    self.bump();
                    if self.peek() == Some('=') {
                        self.bump();
                        TokenKind::ColonEq
                    } else {
                        TokenKind::Colon
                    }
                }
                '|' => {
                    self.bump();
                    if self.peek() == Some('|') {
                        self.bump();
                        TokenKind::Concat
                    } else {
                        TokenKind::Bar
                    }
                }
                '$' => {
                    self.bump();
                    if self.peek() == Some('$') {
                        self.bump();
                        TokenKind::ContextItem
                    } else {
                        let name = self.lex_name();
                        if name.is_empty() {
                            return Err(self.error_here("expected a variable name after '$'"));
                        }
                        TokenKind::Var(name)
                    }
                }
                '"' => TokenKind::StringLit(self.lex_string()?),
                '.' => {
                    if self.peek2().is_some_and(|c| c.is_ascii_digit()) {
                        self.lex_number()?
                    } else {
                        self.bump();
                        TokenKind::Dot
                    }
                }
                c if c.is_ascii_digit() => self.lex_number()?,
                c if is_name_start(c) => TokenKind::Ident(self.lex_name()),
                _ => return Err(self.error_here(format!("unexpected character {c:?}"))),
            };
            let end = self.offset();
            tokens.push(Token {
                kind,
                span: Span::new(start_line, start_col, start, end - start),
            });
        }
    }

    fn skip_trivia(&mut self) -> Result<()> {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('(') if self.peek2() == Some(':') => {
                    let err_span = Span::new(self.line, self.col, self.offset(), 2);
                    self.bump();
                    self.bump();
                    let mut depth = 1;
                    loop {
                        match (self.peek(), self.peek2()) {
                            (Some('('), Some(':')) => {
                                self.bump();
                                self.bump();
                                depth += 1;
                            }
                            (Some(':'), Some(')')) => {
                                self.bump();
                                self.bump();
                                depth -= 1;
                                if depth == 0 {
                                    break;
                                }
                            }
                            (Some(_), _) => {
                                self.bump();
                            }
                            (None, _) => {
                                return Err(Error::new(
                                    ErrorCode::Syntax,
                                    "unterminated comment",
                                )
                                .with_span(err_span));
                            }
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn lex_name(&mut self) -> String {
        let mut name = String::new();
        if let Some(c) = self.peek() {
            if is_name_start(c) {
                name.push(c);
                self.bump();
            } else {
                return name;
            }
        }
        while let Some(c) = self.peek() {
            if is_name_continue(c) {
                name.push(c);
                self.bump();
            } else if c == '-' && self.peek2().is_some_and(is_name_continue) {
                name.push(c);
                self.bump();
            } else {
                break;
            }
        }
        name
    }

    fn lex_string(&mut self) -> Result<String> {
        let open_span = Span::new(self.line, self.col, self.offset(), 1);
        self.bump(); // opening quote
        let mut value = String::new();
        loop {
            match self.bump() {
                None => {
                    return Err(Error::new(ErrorCode::Syntax, "unterminated string literal")
                        .with_span(open_span))
                }
                Some('"') => return Ok(value),
                Some('\\') => match self.bump() {
                    Some('"') => value.push('"'),
                    Some('\\') => value.push('\\'),
                    Some('/') => value.push('/'),
                    Some('b') => value.push('\u{8}'),
                    Some('f') => value.push('\u{c}'),
                    Some('n') => value.push('\n'),
                    Some('r') => value.push('\r'),
                    Some('t') => value.push('\t'),
                    Some('u') => value.push(self.lex_unicode_escape()?),
                    other => {
                        return Err(self.error_here(format!(
                            "invalid string escape {:?}",
                            other.map(|c| format!("\\{c}")).unwrap_or_else(|| "\\".into())
                        )))
                    }
                },
                Some(c) if (c as u32) < 0x20 => {
                    return Err(self.error_here("raw control character in string literal"))
                }
                Some(c) => value.push(c),
            }
        }
    }

    fn lex_unicode_escape(&mut self) -> Result<char> {
        let read4 = |lexer: &mut Self| -> Result<u32> {
            let mut v = 0u32;
            for _ in 0..4 {
                let c = lexer
                    .bump()
                    .and_then(|c| c.to_digit(16))
                    .ok_or_else(|| lexer.error_here("invalid \\u escape"))?;
                v = v * 16 + c;
            }
            Ok(v)
        };
        let first = read4(self)?;
        if (0xD800..0xDC00).contains(&first) {
            // High surrogate: require a following \uXXXX low surrogate.
            if self.peek() == Some('\\') && self.peek2() == Some('u') {
                self.bump();
                self.bump();
                let second = read4(self)?;
                if (0xDC00..0xE000).contains(&second) {
                    let combined = 0x10000 + ((first - 0xD800) << 10) + (second - 0xDC00);
                    return char::from_u32(combined)
                        .ok_or_else(|| self.error_here("invalid surrogate pair"));
                }
            }
            Err(self.error_here("unpaired surrogate in \\u escape"))
        } else if (0xDC00..0xE000).contains(&first) {
            Err(self.error_here("unpaired surrogate in \\u escape"))
        } else {
            char::from_u32(first).ok_or_else(|| self.error_here("invalid \\u escape"))
        }
    }

    fn lex_number(&mut self) -> Result<TokenKind> {
        let mut text = String::new();
        let mut has_point = false;
        let mut has_exp = false;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                text.push(c);
                self.bump();
            } else if c == '.' && !has_point && !has_exp && self.peek2().is_some_and(|d| d.is_ascii_digit())
            {
                has_point = true;
                text.push(c);
                self.bump();
            } else if c == '.' && text.is_empty() {
                // leading .5
                has_point = true;
                text.push('0');
                text.push(c);
                self.bump();
            } else if (c == 'e' || c == 'E') && !has_exp && !text.is_empty() {
                has_exp = true;
                text.push(c);
                self.bump();
                if let Some(sign @ ('+' | '-')) = self.peek() {
                    text.push(sign);
                    self.bump();
                }
                if !self.peek().is_some_and(|d| d.is_ascii_digit()) {
                    return Err(self.error_here("expected digits in exponent"));
                }
            } else {
                break;
            }
        }
        if has_exp {
            f64::from_str(&text)
                .map(TokenKind::DoubleLit)
                .map_err(|_| self.error_here(format!("invalid number literal {text:?}")))
        } else if has_point {
            BigDecimal::from_str(&text)
                .map(TokenKind::DecimalLit)
                .map_err(|_| self.error_here(format!("invalid number literal {text:?}")))
        } else {
            BigInt::from_str(&text)
                .map(TokenKind::IntegerLit)
                .map_err(|_| self.error_here(format!("invalid number literal {text:?}")))
        }
    }
}

fn is_name_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_name_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<TokenKind> {
        tokenize(text).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn number_classes() {
        assert!(matches!(kinds("42")[0], TokenKind::IntegerLit(_)));
        assert!(matches!(kinds("1.5")[0], TokenKind::DecimalLit(_)));
        assert!(matches!(kinds("1e2")[0], TokenKind::DoubleLit(_)));
        assert!(matches!(kinds("1.5E-3")[0], TokenKind::DoubleLit(_)));
        assert!(matches!(kinds(".5")[0], TokenKind::DecimalLit(_)));
        // "1.foo" is integer, dot, name.
        let k = kinds("1.foo");
        assert!(matches!(k[0], TokenKind::IntegerLit(_)));
        assert_eq!(k[1], TokenKind::Dot);
    }

    #[test]
    fn names_allow_interior_dashes() {
        let k = kinds("json-file(\"x\")");
        assert_eq!(k[0], TokenKind::Ident("json-file".into()));
        // A dash with space separation is a minus token.
        let k = kinds("a - b");
        assert_eq!(k.len(), 4);
        assert_eq!(k[1], TokenKind::Minus);
        // Trailing dash is not swallowed.
        let k = kinds("a- b");
        assert_eq!(k[0], TokenKind::Ident("a".into()));
        assert_eq!(k[1], TokenKind::Minus);
    }

    #[test]
    fn string_escapes() {
        let k = kinds(r#""a\nbA😀""#);
        assert_eq!(k[0], TokenKind::StringLit("a\nbA😀".into()));
        assert!(tokenize(r#""unterminated"#).is_err());
        assert!(tokenize(r#""\q""#).is_err());
    }

    #[test]
    fn comments_nest() {
        let k = kinds("1 (: outer (: inner :) still :) 2");
        assert_eq!(k.len(), 3);
        assert!(tokenize("1 (: open").is_err());
    }

    #[test]
    fn variables_and_context_item() {
        let k = kinds("$x + $$");
        assert_eq!(k[0], TokenKind::Var("x".into()));
        assert_eq!(k[2], TokenKind::ContextItem);
        assert!(tokenize("$ x").is_err());
    }

    #[test]
    fn spans_cover_input() {
        let text = "for $x in (1, 2)\nreturn $x";
        for tok in tokenize(text).unwrap() {
            let end = (tok.span.offset + tok.span.length) as usize;
            assert!(end <= text.len());
        }
    }
}
