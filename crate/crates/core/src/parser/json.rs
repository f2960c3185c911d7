//! Parser for one line of JSON data.
//!
//! Number typing follows the token class: digits only → Integer, a decimal
//! point → Decimal, an exponent → Double. Duplicate object keys are an
//! error, as is any trailing garbage.

use bigdecimal::BigDecimal;
use num_bigint::BigInt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, ErrorCode, Result};
use crate::jdm::{cap_decimal, Item, Object};

const MAX_JSON_DEPTH: u32 = 256;

/// Parse a complete JSON document from one line of input.
pub fn parse_json_line(text: &str) -> Result<Item> {
    let bytes = text.as_bytes();
    let mut parser = JsonParser { text, bytes, pos: 0, depth: 0 };
    parser.skip_ws();
    let value = parser.parse_value()?;
    parser.skip_ws();
    if parser.pos != bytes.len() {
        return Err(parser.error("trailing characters after JSON value"));
    }
    Ok(value)
}

struct JsonParser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    depth: u32,
}

impl<'a> JsonParser<'a> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::new(
            ErrorCode::JsonParse,
            format!("{} at byte offset {}", message.into(), self.pos),
        )
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn expect_byte(&mut self, b: u8) -> Result<()> {
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected {:?}", b as char)))
        }
    }

    fn parse_value(&mut self) -> Result<Item> {
        self.depth += 1;
        if self.depth > MAX_JSON_DEPTH {
            return Err(self.error("value is nested too deeply"));
        }
        let value = match self.peek() {
            Some(b'{') => self.parse_object(),
            Some(b'[') => self.parse_array(),
            Some(b'"') => Ok(Item::String(Arc::from(self.parse_string()?))),
            Some(b't') => self.parse_keyword("true", Item::Boolean(true)),
            Some(b'f') => self.parse_keyword("false", Item::Boolean(false)),
            Some(b'n') => self.parse_keyword("null", Item::Null),
            Some(c) if c == b'-' || c.is_ascii_digit() => self.parse_number(),
            Some(c) => Err(self.error(format!("unexpected character {:?}", c as char))),
            None => Err(self.error("unexpected end of input")),
        };
        self.depth -= 1;
        value
    }

    fn parse_keyword(&mut self, word: &str, value: Item) -> Result<Item> {
        if self.bytes[self.pos..].starts_with(word.as_bytes()) {
            self.pos += word.len();
            Ok(value)
        } else {
            Err(self.error(format!("expected '{word}'")))
        }
    }

    fn parse_object(&mut self) -> Result<Item> {
        self.expect_byte(b'{')?;
        self.skip_ws();
        let mut object = Object::new();
        if self.peek() == Some(b'}') {
            self.pos += 1;
            return Ok(Item::object(object));
        }
        loop {
            self.skip_ws();
            if self.peek() != Some(b'"') {
                return Err(self.error("expected an object key"));
            }
            let key = self.parse_string()?;
            self.skip_ws();
            self.expect_byte(b':')?;
            self.skip_ws();
            let value = self.parse_value()?;
            object
                .insert(Arc::from(key), value)
                .map_err(|e| self.error(e.message))?;
            self.skip_ws();
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                }
                Some(b'}') => {
                    self.pos += 1;
                    return Ok(Item::object(object));
                }
                _ => return Err(self.error("expected ',' or '}' in object")),
            }
        }
    }

    fn parse_array(&mut self) -> Result<Item> {
        self.expect_byte(b'[')?;
        self.skip_ws();
        let mut items = Vec::new();
        if self.peek() == Some(b']') {
            self.pos += 1;
            return Ok(Item::array(items));
        }
        loop {
            self.skip_ws();
            items.push(self.parse_value()?);
            self.skip_ws();
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                }
                Some(b']') => {
                    self.pos += 1;
                    return Ok(Item::array(items));
                }
                _ => return Err(self.error("expected ',' or ']' in array")),
            }
        }
    }

    fn parse_string(&mut self) -> Result<String> {
        self.expect_byte(b'"')?;
        // Fast path: no escapes, no control characters.
        let start = self.pos;
        while let Some(b) = self.peek() {
            match b {
                b'"' => {
                    let s = &self.text[start..self.pos];
                    self.pos += 1;
                    return Ok(s.to_string());
                }
                b'\\' => break,
                0..=0x1f => return Err(self.error("raw control character in string")),
                _ => self.pos += 1,
            }
        }
        // Slow path with escapes.
        let mut out = String::from(&self.text[start..self.pos]);
        loop {
            match self.peek() {
                None => return Err(self.error("unterminated string")),
                Some(b'"') => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some(b'\\') => {
                    self.pos += 1;
                    match self.peek() {
                        Some(b'"') => out.push('"'),
                        Some(b'\\') => out.push('\\'),
                        Some(b'/') => out.push('/'),
                        Some(b'b') => out.push('\u{8}'),
                        Some(b'f') => out.push('\u{c}'),
                        Some(b'n') => out.push('\n'),
                        Some(b'r') => out.push('\r'),
                        Some(b't') => out.push('\t'),
                        Some(b'u') => {
                            self.pos += 1;
                            let c = self.parse_unicode_escape()?;
                            out.push(c);
                            continue;
                        }
                        _ => return Err(self.error("invalid string escape")),
                    }
                    self.pos += 1;
                }
                Some(b) if b < 0x20 => {
                    return Err(self.error("raw control character in string"))
                }
                Some(_) => {
                    // Consume one UTF-8 encoded char.
                    let rest = &self.text[self.pos..];
                    let c = rest.chars().next().expect("valid utf-8 input");
                    out.push(c);
                    self.pos += c.len_utf8();
                }
            }
        }
    }

    fn parse_unicode_escape(&mut self) -> Result<char> {
        let first = self.parse_hex4()?;
        if (0xD800..0xDC00).contains(&first) {
            if self.bytes[self.pos..].starts_with(b"\\u") {
                self.pos += 2;
                let second = self.parse_hex4()?;
                if (0xDC00..0xE000).contains(&second) {
                    let combined = 0x10000 + ((first - 0xD800) << 10) + (second - 0xDC00);
                    return char::from_u32(combined)
                        .ok_or_else(|| self.error("invalid surrogate pair"));
                }
            }
            Err(self.error("unpaired surrogate in \\u escape"))
        } else if (0xDC00..0xE000).contains(&first) {
            Err(self.error("unpaired surrogate in \\u escape"))
        } else {
            char::from_u32(first).ok_or_else(|| self.error("invalid \\u escape"))
        }
    }

    fn parse_hex4(&mut self) -> Result<u32> {
        let mut value = 0u32;
        for _ in 0..4 {
            let digit = self
                .peek()
                .and_then(|b| (b as char).to_digit(16))
                .ok_or_else(|| self.error("invalid \\u escape"))?;
            value = value * 16 + digit;
            self.pos += 1;
        }
        Ok(value)
    }

    fn parse_number(&mut self) -> Result<Item> {
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        // Integer part: 0 | [1-9][0-9]*
        match self.peek() {
            Some(b'0') => self.pos += 1,
            Some(c) if c.is_ascii_digit() => {
                while self.peek().is_some_and(|b| b.is_ascii_digit()) {
                    self.pos += 1;
                }
            }
            _ => return Err(self.error("invalid number")),
        }
        let mut has_point = false;
        if self.peek() == Some(b'.') {
            has_point = true;
            self.pos += 1;
            if !self.peek().is_some_and(|b| b.is_ascii_digit()) {
                return Err(self.error("expected digits after decimal point"));
            }
            while self.peek().is_some_and(|b| b.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        let mut has_exp = false;
        if matches!(self.peek(), Some(b'e' | b'E')) {
            has_exp = true;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if !self.peek().is_some_and(|b| b.is_ascii_digit()) {
                return Err(self.error("expected digits in exponent"));
            }
            while self.peek().is_some_and(|b| b.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        let text = &self.text[start..self.pos];
        if has_exp {
            f64::from_str(text)
                .map(Item::Double)
                .map_err(|_| self.error("invalid number"))
        } else if has_point {
            BigDecimal::from_str(text)
                .map(|d| Item::decimal(cap_decimal(d)))
                .map_err(|_| self.error("invalid number"))
        } else {
            BigInt::from_str(text)
                .map(Item::integer)
                .map_err(|_| self.error("invalid number"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_classes() {
        assert_eq!(parse_json_line("42").unwrap(), Item::integer(42));
        assert_eq!(parse_json_line("-7").unwrap(), Item::integer(-7));
        assert_eq!(
            parse_json_line("1.5").unwrap(),
            Item::decimal(BigDecimal::from_str("1.5").unwrap())
        );
        assert_eq!(parse_json_line("1e2").unwrap(), Item::Double(100.0));
        assert_eq!(parse_json_line("1.25E-1").unwrap(), Item::Double(0.125));
        // JSON forbids leading zeros and bare points.
        assert!(parse_json_line("01").is_err());
        assert!(parse_json_line(".5").is_err());
        assert!(parse_json_line("1.").is_err());
        assert!(parse_json_line("NaN").is_err());
    }

    #[test]
    fn structures() {
        let item = parse_json_line(r#"{"a":[1,null]}"#).unwrap();
        let obj = item.as_object().unwrap();
        assert_eq!(obj.len(), 1);
        let arr = obj.get("a").unwrap().as_array().unwrap();
        assert_eq!(arr, &[Item::integer(1), Item::Null]);
    }

    #[test]
    fn duplicate_keys_rejected() {
        let err = parse_json_line(r#"{"a":1,"a":2}"#).unwrap_err();
        assert_eq!(err.code, ErrorCode::JsonParse);
        assert!(err.message.contains("duplicate"), "{}", err.message);
    }

    #[test]
    fn errors_carry_byte_offsets() {
        let err = parse_json_line(r#"{"a": }"#).unwrap_err();
        assert!(err.message.contains("offset 6"), "{}", err.message);
        assert!(parse_json_line("[1, 2,]").is_err());
        assert!(parse_json_line("[1] extra").is_err());
        assert!(parse_json_line("").is_err());
    }

    #[test]
    fn depth_guard_instead_of_stack_overflow() {
        let deep = "[".repeat(10_000) + &"]".repeat(10_000);
        let err = parse_json_line(&deep).unwrap_err();
        assert_eq!(err.code, ErrorCode::JsonParse);
    }

    #[test]
    fn escapes_and_unicode() {
        assert_eq!(
            parse_json_line(r#""aA😀\n""#).unwrap(),
            Item::string("aA😀\n")
        );
        assert!(parse_json_line(r#""\uD800""#).is_err());
    }
}
