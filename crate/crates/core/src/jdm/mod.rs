//! The JSONiq data model: items, sequences, and the atomic-value
//! semantics (comparison, arithmetic, effective boolean value, casting,
//! group-key shredding) shared by every other module.
//!
//! Items are immutable after construction and cheap to clone: structured
//! and heap-backed payloads sit behind `Arc`, so sequences can be shared
//! freely across worker threads.

mod arith;
mod cast;
mod compare;
mod shred;

pub use arith::{arith, arith_items, cap_decimal_scale as cap_decimal, negate, ArithOp, SumAccumulator};
pub use cast::{
    atomic_to_string, cast_item, castable, instance_of, item_matches, treat, ItemType, Occurrence,
    SequenceType,
};
pub use compare::{cmp_atomics, compare_atomics, effective_boolean_value, CmpOp, TypeClass};
pub use shred::{shred_group_key, shred_order_key, NullOrder, ShreddedKey, TypeTag};

use bigdecimal::BigDecimal;
use indexmap::IndexMap;
use num_bigint::BigInt;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, ErrorCode, Result};

/// A single JSONiq value: an atomic, an object, or an array.
///
/// `Null` is a value of its own, distinct from the absence of a value
/// (which is an empty [`Sequence`]).
#[derive(Clone)]
pub enum Item {
    Null,
    Boolean(bool),
    Integer(Arc<BigInt>),
    Decimal(Arc<BigDecimal>),
    Double(f64),
    String(Arc<str>),
    Array(Arc<Vec<Item>>),
    Object(Arc<Object>),
}

/// A flat, ordered, possibly empty sequence of items. Flatness holds by
/// construction: an `Item` has no sequence variant.
pub type Sequence = Vec<Item>;

/// An object: an insertion-ordered mapping from unique strings to items.
#[derive(Clone, Default)]
pub struct Object {
    entries: IndexMap<Arc<str>, Item>,
}

impl Object {
    pub fn new() -> Self {
        Object { entries: IndexMap::new() }
    }

    pub fn with_capacity(n: usize) -> Self {
        Object { entries: IndexMap::with_capacity(n) }
    }

    /// Insert a key/value pair; errors if the key is already present.
    pub fn insert(&mut self, key: Arc<str>, value: Item) -> Result<()> {
        if self.entries.insert(key.clone(), value).is_some() {
            return Err(Error::new(
                ErrorCode::Type,
                format!("duplicate object key \"{key}\""),
            ));
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&Item> {
        self.entries.get(key)
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Pairs in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&Arc<str>, &Item)> {
        self.entries.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &Arc<str>> {
        self.entries.keys()
    }

    pub fn values(&self) -> impl Iterator<Item = &Item> {
        self.entries.values()
    }
}

// Key order is part of an object's identity for round-trip purposes, so
// equality compares pairs in insertion order (IndexMap's own PartialEq is
// order-insensitive).
impl PartialEq for Object {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.iter().zip(other.iter()).all(|(a, b)| a == b)
    }
}

impl fmt::Debug for Object {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.iter().map(|(k, v)| (k.as_ref(), v))).finish()
    }
}

impl Item {
    pub fn integer(value: impl Into<BigInt>) -> Item {
        Item::Integer(Arc::new(value.into()))
    }

    pub fn decimal(value: BigDecimal) -> Item {
        Item::Decimal(Arc::new(value))
    }

    pub fn string(value: impl AsRef<str>) -> Item {
        Item::String(Arc::from(value.as_ref()))
    }

    pub fn array(values: Vec<Item>) -> Item {
        Item::Array(Arc::new(values))
    }

    pub fn object(object: Object) -> Item {
        Item::Object(Arc::new(object))
    }

    pub fn is_atomic(&self) -> bool {
        !matches!(self, Item::Array(_) | Item::Object(_))
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Item::Integer(_) | Item::Decimal(_) | Item::Double(_))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Item::Null => "null",
            Item::Boolean(_) => "boolean",
            Item::Integer(_) => "integer",
            Item::Decimal(_) => "decimal",
            Item::Double(_) => "double",
            Item::String(_) => "string",
            Item::Array(_) => "array",
            Item::Object(_) => "object",
        }
    }

    pub fn as_object(&self) -> Option<&Object> {
        match self {
            Item::Object(o) => Some(o),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[Item]> {
        match self {
            Item::Array(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Item::String(s) => Some(s),
            _ => None,
        }
    }

    /// Integer value if this item is an integral number of any numeric type.
    pub fn integral_value(&self) -> Option<BigInt> {
        use num_traits::ToPrimitive;
        match self {
            Item::Integer(i) => Some((**i).clone()),
            Item::Decimal(d) => {
                if d.is_integer() {
                    Some(d.with_scale(0).into_bigint_and_exponent().0)
                } else {
                    None
                }
            }
            Item::Double(d) => {
                if d.is_finite() && d.fract() == 0.0 {
                    // Exact for |d| < 2^63; larger positions are out of range
                    // for any realistic sequence anyway.
                    d.to_i64().map(BigInt::from)
                } else {
                    None
                }
            }
            _ => None,
        }
    }
}

// Deep, type-respecting equality: items of different variants are never
// equal (1 and 1.0 differ here even though they compare equal as query
// values). Decimal equality is value-based (3.0 == 3.00).
impl PartialEq for Item {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Item::Null, Item::Null) => true,
            (Item::Boolean(a), Item::Boolean(b)) => a == b,
            (Item::Integer(a), Item::Integer(b)) => a == b,
            (Item::Decimal(a), Item::Decimal(b)) => a == b,
            (Item::Double(a), Item::Double(b)) => a == b,
            (Item::String(a), Item::String(b)) => a == b,
            (Item::Array(a), Item::Array(b)) => a == b,
            (Item::Object(a), Item::Object(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Debug for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Item::Null => f.write_str("null"),
            Item::Boolean(b) => write!(f, "{b}"),
            Item::Integer(i) => write!(f, "{i}"),
            Item::Decimal(d) => write!(f, "{d}"),
            Item::Double(d) => write!(f, "{d:?}"),
            Item::String(s) => write!(f, "{s:?}"),
            Item::Array(a) => f.debug_list().entries(a.iter()).finish(),
            Item::Object(o) => o.fmt(f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::str::FromStr;

    #[test]
    fn object_rejects_duplicate_keys() {
        let mut o = Object::new();
        o.insert(Arc::from("a"), Item::integer(1)).unwrap();
        let err = o.insert(Arc::from("a"), Item::integer(2)).unwrap_err();
        assert_eq!(err.code, ErrorCode::Type);
    }

    #[test]
    fn object_equality_is_order_sensitive() {
        let mut a = Object::new();
        a.insert(Arc::from("x"), Item::integer(1)).unwrap();
        a.insert(Arc::from("y"), Item::integer(2)).unwrap();
        let mut b = Object::new();
        b.insert(Arc::from("y"), Item::integer(2)).unwrap();
        b.insert(Arc::from("x"), Item::integer(1)).unwrap();
        assert_ne!(Item::object(a), Item::object(b));
    }

    #[test]
    fn item_equality_respects_variant() {
        assert_ne!(Item::integer(1), Item::Double(1.0));
        assert_ne!(Item::integer(1), Item::decimal(BigDecimal::from(1)));
        // Decimal equality is value-based.
        assert_eq!(
            Item::decimal(BigDecimal::from_str("3.50").unwrap()),
            Item::decimal(BigDecimal::from_str("3.5").unwrap())
        );
    }

    #[test]
    fn integral_value_extraction() {
        assert_eq!(Item::integer(5).integral_value(), Some(BigInt::from(5)));
        assert_eq!(
            Item::decimal(BigDecimal::from_str("2.0").unwrap()).integral_value(),
            Some(BigInt::from(2))
        );
        assert_eq!(Item::Double(3.0).integral_value(), Some(BigInt::from(3)));
        assert_eq!(Item::Double(3.5).integral_value(), None);
        assert_eq!(Item::Double(f64::NAN).integral_value(), None);
        assert_eq!(Item::string("3").integral_value(), None);
    }
}
