//! Atomic comparison and the effective boolean value.

use bigdecimal::{BigDecimal, FromPrimitive};
use std::cmp::Ordering;

use super::Item;
use crate::error::{Error, ErrorCode, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn name(self) -> &'static str {
        match self {
            CmpOp::Eq => "eq",
            CmpOp::Ne => "ne",
            CmpOp::Lt => "lt",
            CmpOp::Le => "le",
            CmpOp::Gt => "gt",
            CmpOp::Ge => "ge",
        }
    }
}

/// Comparison class of an atomic item. Numbers of all three numeric types
/// share one class; items of different classes are incomparable (except
/// null, which is comparable with everything).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TypeClass {
    Null,
    Boolean,
    Number,
    String,
}

impl TypeClass {
    pub fn of(item: &Item) -> Option<TypeClass> {
        match item {
            Item::Null => Some(TypeClass::Null),
            Item::Boolean(_) => Some(TypeClass::Boolean),
            Item::Integer(_) | Item::Decimal(_) | Item::Double(_) => Some(TypeClass::Number),
            Item::String(_) => Some(TypeClass::String),
            Item::Array(_) | Item::Object(_) => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TypeClass::Null => "null",
            TypeClass::Boolean => "boolean",
            TypeClass::Number => "number",
            TypeClass::String => "string",
        }
    }
}

/// Total-ish ordering of two atomic items.
///
/// Numbers compare by numeric value across Integer/Decimal/Double (exactly:
/// a finite double is promoted to its exact decimal expansion). Strings
/// compare by Unicode codepoint, `false < true`, and null is equal only to
/// null and less than every non-null atomic. `Ok(None)` means unordered,
/// which only NaN produces.
pub fn cmp_atomics(a: &Item, b: &Item) -> Result<Option<Ordering>> {
    if !a.is_atomic() || !b.is_atomic() {
        return Err(Error::new(
            ErrorCode::Type,
            format!("cannot compare {} with {}", a.type_name(), b.type_name()),
        ));
    }
    match (a, b) {
        (Item::Null, Item::Null) => Ok(Some(Ordering::Equal)),
        (Item::Null, _) => Ok(Some(Ordering::Less)),
        (_, Item::Null) => Ok(Some(Ordering::Greater)),
        (Item::Boolean(x), Item::Boolean(y)) => Ok(Some(x.cmp(y))),
        (Item::String(x), Item::String(y)) => Ok(Some(x.as_ref().cmp(y.as_ref()))),
        _ if a.is_numeric() && b.is_numeric() => Ok(cmp_numeric(a, b)),
        _ => Err(Error::new(
            ErrorCode::Type,
            format!("cannot compare {} with {}", a.type_name(), b.type_name()),
        )),
    }
}

fn cmp_numeric(a: &Item, b: &Item) -> Option<Ordering> {
    match (a, b) {
        (Item::Integer(x), Item::Integer(y)) => Some(x.cmp(y)),
        (Item::Double(x), Item::Double(y)) => x.partial_cmp(y),
        (Item::Double(x), _) => cmp_double_exact(*x, b).map(|o| o),
        (_, Item::Double(y)) => cmp_double_exact(*y, a).map(Ordering::reverse),
        _ => Some(exact_decimal(a).cmp(&exact_decimal(b))),
    }
}

// Ordering of the double `x` relative to the exact value of `other`.
fn cmp_double_exact(x: f64, other: &Item) -> Option<Ordering> {
    if x.is_nan() {
        return None;
    }
    if x == f64::INFINITY {
        return Some(Ordering::Greater);
    }
    if x == f64::NEG_INFINITY {
        return Some(Ordering::Less);
    }
    let exact = BigDecimal::from_f64(x).expect("finite double has an exact decimal expansion");
    Some(exact.cmp(&exact_decimal(other)))
}

fn exact_decimal(item: &Item) -> BigDecimal {
    match item {
        Item::Integer(i) => BigDecimal::from((**i).clone()),
        Item::Decimal(d) => (**d).clone(),
        _ => unreachable!("exact_decimal on non-exact numeric"),
    }
}

/// Value comparison of two atomic items. NaN compares false for everything
/// except `ne`.
pub fn compare_atomics(a: &Item, b: &Item, op: CmpOp) -> Result<bool> {
    match cmp_atomics(a, b)? {
        None => Ok(op == CmpOp::Ne),
        Some(ord) => Ok(match op {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }),
    }
}

/// Effective boolean value of a sequence.
///
/// Only the first two items matter, so callers may pass a truncated prefix
/// of length ≤ 2: the empty sequence is false, a structured first item of a
/// longer sequence is true, and a singleton atomic follows the usual rules.
pub fn effective_boolean_value(items: &[Item]) -> Result<bool> {
    match items {
        [] => Ok(false),
        [single] => ebv_single(single),
        [first, ..] => {
            if first.is_atomic() {
                Err(Error::new(
                    ErrorCode::Ebv,
                    "effective boolean value of a multi-item sequence starting with an atomic",
                ))
            } else {
                Ok(true)
            }
        }
    }
}

fn ebv_single(item: &Item) -> Result<bool> {
    use num_traits::Zero;
    Ok(match item {
        Item::Null => false,
        Item::Boolean(b) => *b,
        Item::String(s) => !s.is_empty(),
        Item::Integer(i) => !i.is_zero(),
        Item::Decimal(d) => !d.is_zero(),
        Item::Double(d) => *d != 0.0 && !d.is_nan(),
        Item::Array(_) | Item::Object(_) => true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jdm::Object;
    use bigdecimal::BigDecimal;
    use num_bigint::BigInt;
    use std::str::FromStr;

    fn dec(s: &str) -> Item {
        Item::decimal(BigDecimal::from_str(s).unwrap())
    }

    // Independent oracle for cross-type numeric comparison: promote both
    // sides to an exact rational (here: exact decimal, since every finite
    // double is a finite decimal) and compare.
    fn rational_cmp_oracle(a: &Item, b: &Item) -> Ordering {
        fn to_exact(i: &Item) -> BigDecimal {
            match i {
                Item::Integer(v) => BigDecimal::from((**v).clone()),
                Item::Decimal(v) => (**v).clone(),
                Item::Double(v) => BigDecimal::from_f64(*v).unwrap(),
                _ => panic!("numeric only"),
            }
        }
        to_exact(a).cmp(&to_exact(b))
    }

    #[test]
    fn numeric_comparison_crosses_types() {
        // 1 eq 1.0 across Integer/Decimal/Double.
        let one = Item::integer(1);
        let one_dec = dec("1.0");
        let one_dbl = Item::Double(1.0);
        for (a, b) in [(&one, &one_dec), (&one, &one_dbl), (&one_dec, &one_dbl)] {
            assert_eq!(rational_cmp_oracle(a, b), Ordering::Equal);
            assert!(compare_atomics(a, b, CmpOp::Eq).unwrap());
        }
        // 0.1 as a double is slightly above the exact decimal 0.1.
        assert_eq!(
            rational_cmp_oracle(&Item::Double(0.1), &dec("0.1")),
            Ordering::Greater
        );
        assert!(compare_atomics(&Item::Double(0.1), &dec("0.1"), CmpOp::Gt).unwrap());
        // Large integers compare exactly, beyond double precision.
        let big = BigInt::from_str("36028797018963969").unwrap(); // 2^55 + 1
        assert!(compare_atomics(&Item::integer(big), &Item::Double(3.6028797018963968e16), CmpOp::Gt)
            .unwrap());
    }

    #[test]
    fn string_codepoint_order() {
        assert!(compare_atomics(&Item::string("a"), &Item::string("b"), CmpOp::Lt).unwrap());
        assert!(compare_atomics(&Item::string("a"), &Item::string("ab"), CmpOp::Lt).unwrap());
        // Codepoint order, not byte-value tricks: U+00E9 > 'z'.
        assert!(compare_atomics(&Item::string("é"), &Item::string("z"), CmpOp::Gt).unwrap());
    }

    #[test]
    fn null_is_least_and_self_equal() {
        assert!(compare_atomics(&Item::Null, &Item::Null, CmpOp::Eq).unwrap());
        assert!(compare_atomics(&Item::Null, &Item::integer(0), CmpOp::Lt).unwrap());
        assert!(compare_atomics(&Item::Null, &Item::string(""), CmpOp::Lt).unwrap());
        assert!(compare_atomics(&Item::Null, &Item::Boolean(false), CmpOp::Lt).unwrap());
        assert!(!compare_atomics(&Item::Null, &Item::integer(0), CmpOp::Eq).unwrap());
    }

    #[test]
    fn booleans_ordered_false_before_true() {
        assert!(compare_atomics(&Item::Boolean(false), &Item::Boolean(true), CmpOp::Lt).unwrap());
    }

    #[test]
    fn incomparable_types_error() {
        let err = compare_atomics(&Item::string("1"), &Item::integer(1), CmpOp::Eq).unwrap_err();
        assert_eq!(err.code, ErrorCode::Type);
        let err =
            compare_atomics(&Item::Boolean(true), &Item::integer(1), CmpOp::Lt).unwrap_err();
        assert_eq!(err.code, ErrorCode::Type);
        let err = compare_atomics(&Item::array(vec![]), &Item::integer(1), CmpOp::Eq).unwrap_err();
        assert_eq!(err.code, ErrorCode::Type);
    }

    #[test]
    fn nan_is_unordered() {
        let nan = Item::Double(f64::NAN);
        assert!(!compare_atomics(&nan, &nan, CmpOp::Eq).unwrap());
        assert!(compare_atomics(&nan, &nan, CmpOp::Ne).unwrap());
        assert!(!compare_atomics(&nan, &Item::integer(1), CmpOp::Lt).unwrap());
        assert!(!compare_atomics(&nan, &Item::integer(1), CmpOp::Ge).unwrap());
    }

    #[test]
    fn ebv_fixtures() {
        // Transcription of the XQuery EBV rules for the JSON atomics.
        let cases: Vec<(Vec<Item>, bool)> = vec![
            (vec![], false),
            (vec![Item::Boolean(true)], true),
            (vec![Item::Boolean(false)], false),
            (vec![Item::string("")], false),
            (vec![Item::string("x")], true),
            (vec![Item::string("false")], true),
            (vec![Item::Double(0.0)], false),
            (vec![Item::Double(-0.0)], false),
            (vec![Item::Double(f64::NAN)], false),
            (vec![Item::Double(0.5)], true),
            (vec![Item::integer(0)], false),
            (vec![Item::integer(-7)], true),
            (vec![dec("0.0"), ], false),
            (vec![dec("0.001")], true),
            (vec![Item::Null], false),
            (vec![Item::array(vec![])], true),
            (vec![Item::object(Object::new())], true),
            // Multi-item with structured head is true.
            (vec![Item::array(vec![]), Item::integer(1)], true),
        ];
        for (seq, expected) in cases {
            assert_eq!(effective_boolean_value(&seq).unwrap(), expected, "seq {seq:?}");
        }
        // Multi-item with atomic head is an error.
        let err = effective_boolean_value(&[Item::integer(1), Item::integer(2)]).unwrap_err();
        assert_eq!(err.code, ErrorCode::Ebv);
    }
}
