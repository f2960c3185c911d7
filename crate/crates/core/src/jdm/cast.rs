//! Sequence types, `instance of`, `cast`, `castable`, and `treat`.

use bigdecimal::{BigDecimal, FromPrimitive, ParseBigDecimalError};
use num_bigint::BigInt;
use std::fmt;
use std::str::FromStr;

use super::arith::cap_decimal_scale;
use super::Item;
use crate::error::{Error, ErrorCode, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ItemType {
    AnyItem,
    JsonItem,
    Atomic,
    Object,
    Array,
    String,
    Integer,
    Decimal,
    Double,
    Boolean,
    Null,
}

impl ItemType {
    pub fn from_name(name: &str) -> Option<ItemType> {
        Some(match name {
            "item" => ItemType::AnyItem,
            "json-item" => ItemType::JsonItem,
            "atomic" => ItemType::Atomic,
            "object" => ItemType::Object,
            "array" => ItemType::Array,
            "string" => ItemType::String,
            "integer" => ItemType::Integer,
            "decimal" => ItemType::Decimal,
            "double" => ItemType::Double,
            "boolean" => ItemType::Boolean,
            "null" => ItemType::Null,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ItemType::AnyItem => "item",
            ItemType::JsonItem => "json-item",
            ItemType::Atomic => "atomic",
            ItemType::Object => "object",
            ItemType::Array => "array",
            ItemType::String => "string",
            ItemType::Integer => "integer",
            ItemType::Decimal => "decimal",
            ItemType::Double => "double",
            ItemType::Boolean => "boolean",
            ItemType::Null => "null",
        }
    }

    pub fn is_atomic(self) -> bool {
        matches!(
            self,
            ItemType::String
                | ItemType::Integer
                | ItemType::Decimal
                | ItemType::Double
                | ItemType::Boolean
                | ItemType::Null
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Occurrence {
    One,
    Optional, // ?
    Star,     // *
    Plus,     // +
}

impl Occurrence {
    fn accepts(self, len: usize) -> bool {
        match self {
            Occurrence::One => len == 1,
            Occurrence::Optional => len <= 1,
            Occurrence::Star => true,
            Occurrence::Plus => len >= 1,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Occurrence::One => "",
            Occurrence::Optional => "?",
            Occurrence::Star => "*",
            Occurrence::Plus => "+",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SequenceType {
    pub item: ItemType,
    pub occurrence: Occurrence,
}

impl fmt::Display for SequenceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.item.name(), self.occurrence.suffix())
    }
}

/// Dynamic-type check of one item, with integer a subtype of decimal.
pub fn item_matches(item: &Item, ty: ItemType) -> bool {
    match ty {
        ItemType::AnyItem | ItemType::JsonItem => true,
        ItemType::Atomic => item.is_atomic(),
        ItemType::Object => matches!(item, Item::Object(_)),
        ItemType::Array => matches!(item, Item::Array(_)),
        ItemType::String => matches!(item, Item::String(_)),
        ItemType::Integer => matches!(item, Item::Integer(_)),
        ItemType::Decimal => matches!(item, Item::Integer(_) | Item::Decimal(_)),
        ItemType::Double => matches!(item, Item::Double(_)),
        ItemType::Boolean => matches!(item, Item::Boolean(_)),
        ItemType::Null => matches!(item, Item::Null),
    }
}

pub fn instance_of(seq: &[Item], ty: SequenceType) -> bool {
    ty.occurrence.accepts(seq.len()) && seq.iter().all(|item| item_matches(item, ty.item))
}

/// `treat as`: pass the sequence through unchanged or fail.
pub fn treat(seq: Vec<Item>, ty: SequenceType) -> Result<Vec<Item>> {
    if instance_of(&seq, ty) {
        Ok(seq)
    } else {
        Err(Error::new(
            ErrorCode::Treat,
            format!("sequence does not match type {ty}"),
        ))
    }
}

/// Canonical string form of an atomic item, as used by `cast as string`
/// and string concatenation.
pub fn atomic_to_string(item: &Item) -> Result<String> {
    Ok(match item {
        Item::Null => "null".to_string(),
        Item::Boolean(b) => b.to_string(),
        Item::Integer(i) => i.to_string(),
        Item::Decimal(d) => crate::io::decimal_to_plain_string(d),
        Item::Double(d) => crate::io::double_to_string(*d),
        Item::String(s) => s.to_string(),
        Item::Array(_) | Item::Object(_) => {
            return Err(Error::new(
                ErrorCode::Type,
                format!("cannot convert {} to string", item.type_name()),
            ))
        }
    })
}

/// `cast as`: JSON-compatible conversions between the atomic types.
pub fn cast_item(item: &Item, target: ItemType) -> Result<Item> {
    if !item.is_atomic() {
        return Err(cast_error(item, target));
    }
    if !target.is_atomic() {
        return Err(Error::new(
            ErrorCode::Cast,
            format!("cast target must be an atomic type, got {}", target.name()),
        ));
    }
    if item_matches(item, target) && !(target == ItemType::Decimal && matches!(item, Item::Integer(_)))
    {
        return Ok(item.clone());
    }
    match target {
        ItemType::String => Ok(Item::string(atomic_to_string(item)?)),
        ItemType::Integer => cast_to_integer(item),
        ItemType::Decimal => cast_to_decimal(item),
        ItemType::Double => cast_to_double(item),
        ItemType::Boolean => cast_to_boolean(item),
        ItemType::Null => Err(cast_error(item, target)),
        _ => unreachable!(),
    }
}

pub fn castable(item: &Item, target: ItemType) -> bool {
    cast_item(item, target).is_ok()
}

fn cast_error(item: &Item, target: ItemType) -> Error {
    Error::new(
        ErrorCode::Cast,
        format!("cannot cast {} ({}) to {}", item_preview(item), item.type_name(), target.name()),
    )
}

fn item_preview(item: &Item) -> String {
    let s = format!("{item:?}");
    if s.len() > 40 {
        format!("{}…", &s[..s.char_indices().take_while(|(i, _)| *i < 40).count()])
    } else {
        s
    }
}

fn cast_to_integer(item: &Item) -> Result<Item> {
    match item {
        Item::String(s) => {
            let t = s.trim();
            BigInt::from_str(t)
                .map(Item::integer)
                .map_err(|_| cast_error(item, ItemType::Integer))
        }
        Item::Decimal(d) => {
            let truncated = d.with_scale_round(0, bigdecimal::RoundingMode::Down);
            Ok(Item::integer(truncated.into_bigint_and_exponent().0))
        }
        Item::Double(d) => {
            if !d.is_finite() {
                return Err(cast_error(item, ItemType::Integer));
            }
            BigDecimal::from_f64(d.trunc())
                .map(|dec| Item::integer(dec.with_scale(0).into_bigint_and_exponent().0))
                .ok_or_else(|| cast_error(item, ItemType::Integer))
        }
        Item::Boolean(b) => Ok(Item::integer(if *b { 1 } else { 0 })),
        _ => Err(cast_error(item, ItemType::Integer)),
    }
}

fn cast_to_decimal(item: &Item) -> Result<Item> {
    match item {
        Item::String(s) => {
            let t = s.trim();
            // The decimal lexical space has no exponent; those strings must
            // go through `cast as double`.
            if t.contains(['e', 'E']) {
                return Err(cast_error(item, ItemType::Decimal));
            }
            match BigDecimal::from_str(t) {
                Ok(d) => Ok(Item::decimal(cap_decimal_scale(d))),
                Err(ParseBigDecimalError::Empty) | Err(_) => {
                    Err(cast_error(item, ItemType::Decimal))
                }
            }
        }
        Item::Integer(i) => Ok(Item::decimal(BigDecimal::from((**i).clone()))),
        Item::Double(d) => BigDecimal::from_f64(*d)
            .map(|dec| Item::decimal(cap_decimal_scale(dec)))
            .ok_or_else(|| cast_error(item, ItemType::Decimal)),
        Item::Boolean(b) => Ok(Item::decimal(BigDecimal::from(if *b { 1 } else { 0 }))),
        _ => Err(cast_error(item, ItemType::Decimal)),
    }
}

fn cast_to_double(item: &Item) -> Result<Item> {
    use num_traits::ToPrimitive;
    match item {
        Item::String(s) => {
            let t = s.trim();
            let value = match t {
                "NaN" => f64::NAN,
                "INF" | "+INF" | "Infinity" => f64::INFINITY,
                "-INF" | "-Infinity" => f64::NEG_INFINITY,
                _ => {
                    // Rust's float parser accepts spellings like "inf" that
                    // are outside the lexical space; validate shape first.
                    if !is_double_lexical(t) {
                        return Err(cast_error(item, ItemType::Double));
                    }
                    f64::from_str(t).map_err(|_| cast_error(item, ItemType::Double))?
                }
            };
            Ok(Item::Double(value))
        }
        Item::Integer(i) => Ok(Item::Double(
            i.to_f64().unwrap_or(if num_traits::Signed::is_negative(&**i) {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }),
        )),
        Item::Decimal(d) => Ok(Item::Double(d.to_f64().unwrap_or(f64::NAN))),
        Item::Boolean(b) => Ok(Item::Double(if *b { 1.0 } else { 0.0 })),
        _ => Err(cast_error(item, ItemType::Double)),
    }
}

// Optional sign, digits with at most one point (at least one digit total),
// optional exponent.
fn is_double_lexical(s: &str) -> bool {
    let s = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (mantissa, exponent) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, Some(e)),
        None => (s, None),
    };
    let mut digits = 0;
    let mut points = 0;
    for c in mantissa.chars() {
        match c {
            '0'..='9' => digits += 1,
            '.' => points += 1,
            _ => return false,
        }
    }
    if digits == 0 || points > 1 {
        return false;
    }
    match exponent {
        None => true,
        Some(e) => {
            let e = e.strip_prefix(['+', '-']).unwrap_or(e);
            !e.is_empty() && e.chars().all(|c| c.is_ascii_digit())
        }
    }
}

fn cast_to_boolean(item: &Item) -> Result<Item> {
    use num_traits::Zero;
    match item {
        Item::String(s) => match s.trim() {
            "true" | "1" => Ok(Item::Boolean(true)),
            "false" | "0" => Ok(Item::Boolean(false)),
            _ => Err(cast_error(item, ItemType::Boolean)),
        },
        Item::Integer(i) => Ok(Item::Boolean(!i.is_zero())),
        Item::Decimal(d) => Ok(Item::Boolean(!d.is_zero())),
        Item::Double(d) => Ok(Item::Boolean(*d != 0.0 && !d.is_nan())),
        _ => Err(cast_error(item, ItemType::Boolean)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int(i: i64) -> Item {
        Item::integer(i)
    }

    #[test]
    fn cast_fixtures() {
        assert_eq!(cast_item(&Item::string("42"), ItemType::Integer).unwrap(), int(42));
        assert_eq!(cast_item(&Item::string(" -7 "), ItemType::Integer).unwrap(), int(-7));
        assert!(!castable(&Item::string("4x2"), ItemType::Integer));
        assert!(!castable(&Item::string(""), ItemType::Integer));
        assert_eq!(
            cast_item(&Item::string("1.5"), ItemType::Double).unwrap(),
            Item::Double(1.5)
        );
        assert_eq!(
            cast_item(&Item::string("NaN"), ItemType::Double).map(|i| matches!(i, Item::Double(d) if d.is_nan())),
            Ok(true)
        );
        assert!(!castable(&Item::string("1e3"), ItemType::Decimal));
        assert_eq!(cast_item(&Item::Double(3.9), ItemType::Integer).unwrap(), int(3));
        assert_eq!(cast_item(&Item::Double(-3.9), ItemType::Integer).unwrap(), int(-3));
        assert!(!castable(&Item::Double(f64::NAN), ItemType::Integer));
        assert_eq!(cast_item(&Item::Boolean(true), ItemType::Integer).unwrap(), int(1));
        assert_eq!(
            cast_item(&int(0), ItemType::Boolean).unwrap(),
            Item::Boolean(false)
        );
        assert_eq!(
            cast_item(&Item::string("true"), ItemType::Boolean).unwrap(),
            Item::Boolean(true)
        );
        assert_eq!(
            cast_item(&int(42), ItemType::String).unwrap(),
            Item::string("42")
        );
        assert_eq!(
            cast_item(&Item::Null, ItemType::String).unwrap(),
            Item::string("null")
        );
        assert!(!castable(&Item::Null, ItemType::Integer));
        assert!(!castable(&Item::array(vec![]), ItemType::String));
    }

    // Occurrence-indicator truth table, enumerated for lengths 0..3.
    #[test]
    fn occurrence_indicator_table() {
        let seqs: Vec<Vec<Item>> = vec![
            vec![],
            vec![int(1)],
            vec![int(1), int(2)],
            vec![int(1), int(2), int(3)],
        ];
        let table = [
            (Occurrence::One, [false, true, false, false]),
            (Occurrence::Optional, [true, true, false, false]),
            (Occurrence::Star, [true, true, true, true]),
            (Occurrence::Plus, [false, true, true, true]),
        ];
        for (occ, expected) in table {
            for (seq, want) in seqs.iter().zip(expected) {
                let ty = SequenceType { item: ItemType::Integer, occurrence: occ };
                assert_eq!(instance_of(seq, ty), want, "{occ:?} over len {}", seq.len());
            }
        }
        // Mixed types fail the item test regardless of occurrence.
        let mixed = vec![int(1), Item::string("a")];
        assert!(!instance_of(
            &mixed,
            SequenceType { item: ItemType::Integer, occurrence: Occurrence::Star }
        ));
        assert!(instance_of(
            &mixed,
            SequenceType { item: ItemType::Atomic, occurrence: Occurrence::Star }
        ));
    }

    #[test]
    fn integer_is_a_decimal() {
        assert!(item_matches(&int(1), ItemType::Decimal));
        assert!(!item_matches(&Item::Double(1.0), ItemType::Decimal));
        assert!(item_matches(&Item::Double(1.0), ItemType::Double));
    }

    #[test]
    fn treat_passes_or_errors() {
        let ty = SequenceType { item: ItemType::Integer, occurrence: Occurrence::Plus };
        assert_eq!(treat(vec![int(1)], ty).unwrap(), vec![int(1)]);
        let err = treat(vec![], ty).unwrap_err();
        assert_eq!(err.code, ErrorCode::Treat);
        let err = treat(vec![Item::string("x")], ty).unwrap_err();
        assert_eq!(err.code, ErrorCode::Treat);
    }
}
