//! Shredding of atomic grouping/sorting keys into a (number column,
//! string column, type tag) triple.
//!
//! Heterogeneous atomic keys cannot be grouped or ordered directly, so each
//! key cell is encoded as: numbers, booleans, and null go to a double
//! column (booleans as 0/1, null carried by the tag alone), strings go to a
//! string column, and a tag records the original type so that `"1"` and `1`
//! stay distinct. The empty sequence gets its own tag, placed adjacent to
//! null (empty first), and both sit before or after all other types
//! depending on the configured null position.

use num_traits::ToPrimitive;
use std::cmp::Ordering;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use super::Item;
use crate::error::{Error, ErrorCode, Result};

/// Where null (and the empty key) sort relative to all other types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NullOrder {
    #[default]
    Before,
    After,
}

/// Type tag of a shredded key. The derived order is the group/sort order
/// of the tags; the two positions for empty/null realize the configurable
/// null placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TypeTag {
    EmptyLeast,
    NullLeast,
    Boolean,
    Number,
    String,
    EmptyGreatest,
    NullGreatest,
}

/// One shredded key: exactly one of `number`/`string` is present for
/// Number/String tags (booleans ride in `number` as 0/1), both are absent
/// otherwise. Equality defines group identity; `(tag, number, string)`
/// lexicographic order defines group order.
#[derive(Debug, Clone)]
pub struct ShreddedKey {
    pub tag: TypeTag,
    pub number: Option<f64>,
    pub string: Option<Arc<str>>,
}

impl ShreddedKey {
    fn new(tag: TypeTag, number: Option<f64>, string: Option<Arc<str>>) -> Self {
        // NaN keys canonicalize to one representative that sorts after all
        // other numbers; -0.0 folds into 0.0 so the two group together.
        let number = number.map(|n| {
            if n.is_nan() {
                f64::NAN
            } else if n == 0.0 {
                0.0
            } else {
                n
            }
        });
        ShreddedKey { tag, number, string }
    }

    fn number_bits(&self) -> Option<u64> {
        self.number.map(f64::to_bits)
    }
}

impl PartialEq for ShreddedKey {
    fn eq(&self, other: &Self) -> bool {
        self.tag == other.tag
            && self.number_bits() == other.number_bits()
            && self.string == other.string
    }
}

impl Eq for ShreddedKey {}

impl Hash for ShreddedKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.tag.hash(state);
        self.number_bits().hash(state);
        self.string.hash(state);
    }
}

impl PartialOrd for ShreddedKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ShreddedKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.tag
            .cmp(&other.tag)
            .then_with(|| match (&self.number, &other.number) {
                (Some(a), Some(b)) => a.total_cmp(b),
                (None, None) => Ordering::Equal,
                (None, Some(_)) => Ordering::Less,
                (Some(_), None) => Ordering::Greater,
            })
            .then_with(|| self.string.cmp(&other.string))
    }
}

fn number_to_col(item: &Item) -> f64 {
    match item {
        Item::Integer(i) => i
            .to_f64()
            .unwrap_or(if num_traits::Signed::is_negative(&**i) {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }),
        Item::Decimal(d) => d.to_f64().unwrap_or(f64::NAN),
        Item::Double(d) => *d,
        _ => unreachable!(),
    }
}

/// Shred one grouping key cell (a sequence of length ≤ 1).
pub fn shred_group_key(seq: &[Item], null_order: NullOrder) -> Result<ShreddedKey> {
    let (empty_tag, null_tag) = match null_order {
        NullOrder::Before => (TypeTag::EmptyLeast, TypeTag::NullLeast),
        NullOrder::After => (TypeTag::EmptyGreatest, TypeTag::NullGreatest),
    };
    shred_cell(seq, empty_tag, null_tag, |item| {
        Error::new(
            ErrorCode::NonatomicKey,
            format!("grouping key must be atomic, got {}", item.type_name()),
        )
    })
}

/// Shred one sort key cell. Null always sorts as the least atomic; the
/// empty sequence goes before or after everything per the key's
/// empty-greatest/least modifier.
pub fn shred_order_key(seq: &[Item], empty_greatest: bool) -> Result<ShreddedKey> {
    let empty_tag = if empty_greatest { TypeTag::EmptyGreatest } else { TypeTag::EmptyLeast };
    shred_cell(seq, empty_tag, TypeTag::NullLeast, |item| {
        Error::new(
            ErrorCode::OrderIncomparable,
            format!("sort key must be atomic, got {}", item.type_name()),
        )
    })
}

fn shred_cell(
    seq: &[Item],
    empty_tag: TypeTag,
    null_tag: TypeTag,
    nonatomic: impl Fn(&Item) -> Error,
) -> Result<ShreddedKey> {
    match seq {
        [] => Ok(ShreddedKey::new(empty_tag, None, None)),
        [item] => match item {
            Item::Null => Ok(ShreddedKey::new(null_tag, None, None)),
            Item::Boolean(b) => Ok(ShreddedKey::new(
                TypeTag::Boolean,
                Some(if *b { 1.0 } else { 0.0 }),
                None,
            )),
            Item::Integer(_) | Item::Decimal(_) | Item::Double(_) => Ok(ShreddedKey::new(
                TypeTag::Number,
                Some(number_to_col(item)),
                None,
            )),
            Item::String(s) => Ok(ShreddedKey::new(TypeTag::String, None, Some(s.clone()))),
            Item::Array(_) | Item::Object(_) => Err(nonatomic(item)),
        },
        _ => Err(Error::new(
            ErrorCode::MultiItemKey,
            format!("key must have at most one item, got {}", seq.len()),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bigdecimal::BigDecimal;
    use std::str::FromStr;

    fn shred1(item: Item) -> ShreddedKey {
        shred_group_key(&[item], NullOrder::Before).unwrap()
    }

    #[test]
    fn fixture_keys() {
        // Strings keep their own column; "1" and 1 shred to different keys.
        let s = shred1(Item::string("1"));
        assert_eq!(s.tag, TypeTag::String);
        assert_eq!(s.number, None);
        assert_eq!(s.string.as_deref(), Some("1"));
        let n = shred1(Item::integer(1));
        assert_eq!(n.tag, TypeTag::Number);
        assert_eq!(n.number, Some(1.0));
        assert_ne!(s, n);

        let b = shred1(Item::Boolean(true));
        assert_eq!((b.tag, b.number, b.string), (TypeTag::Boolean, Some(1.0), None));

        let empty = shred_group_key(&[], NullOrder::Before).unwrap();
        assert_eq!((empty.tag, empty.number, empty.string), (TypeTag::EmptyLeast, None, None));
        let empty_after = shred_group_key(&[], NullOrder::After).unwrap();
        assert_eq!(empty_after.tag, TypeTag::EmptyGreatest);
    }

    #[test]
    fn numeric_types_merge_boolean_stays_apart() {
        // The double-column encoding makes 1, 1.0 (decimal) and 1.0 (double)
        // the same key, while true (also stored as 1.0) differs by tag.
        let int1 = shred1(Item::integer(1));
        let dec1 = shred1(Item::decimal(BigDecimal::from_str("1.00").unwrap()));
        let dbl1 = shred1(Item::Double(1.0));
        assert_eq!(int1, dec1);
        assert_eq!(int1, dbl1);
        assert_ne!(int1, shred1(Item::Boolean(true)));
        assert_ne!(shred1(Item::Boolean(false)), shred1(Item::integer(0)));
    }

    #[test]
    fn errors() {
        let err = shred_group_key(&[Item::array(vec![])], NullOrder::Before).unwrap_err();
        assert_eq!(err.code, ErrorCode::NonatomicKey);
        let err =
            shred_group_key(&[Item::integer(1), Item::integer(2)], NullOrder::Before).unwrap_err();
        assert_eq!(err.code, ErrorCode::MultiItemKey);
        let err = shred_order_key(&[Item::object(crate::jdm::Object::new())], false).unwrap_err();
        assert_eq!(err.code, ErrorCode::OrderIncomparable);
    }

    #[test]
    fn group_order_follows_null_position() {
        // before: empty < null < booleans < numbers < strings
        let before = [
            shred_group_key(&[], NullOrder::Before).unwrap(),
            shred_group_key(&[Item::Null], NullOrder::Before).unwrap(),
            shred_group_key(&[Item::Boolean(false)], NullOrder::Before).unwrap(),
            shred_group_key(&[Item::integer(5)], NullOrder::Before).unwrap(),
            shred_group_key(&[Item::string("a")], NullOrder::Before).unwrap(),
        ];
        assert!(before.windows(2).all(|w| w[0] < w[1]));
        // after: booleans < numbers < strings < empty < null
        let after = [
            shred_group_key(&[Item::Boolean(false)], NullOrder::After).unwrap(),
            shred_group_key(&[Item::integer(5)], NullOrder::After).unwrap(),
            shred_group_key(&[Item::string("a")], NullOrder::After).unwrap(),
            shred_group_key(&[], NullOrder::After).unwrap(),
            shred_group_key(&[Item::Null], NullOrder::After).unwrap(),
        ];
        assert!(after.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn nan_and_signed_zero_are_canonical() {
        let nan1 = shred1(Item::Double(f64::NAN));
        let nan2 = shred1(Item::Double(-f64::NAN));
        assert_eq!(nan1, nan2);
        // NaN sorts after every other number.
        assert!(nan1 > shred1(Item::Double(f64::INFINITY)));
        assert_eq!(shred1(Item::Double(0.0)), shred1(Item::Double(-0.0)));
    }
}
