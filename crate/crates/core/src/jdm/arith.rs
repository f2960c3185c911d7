//! Numeric arithmetic with the Integer/Decimal/Double promotion tower.

use bigdecimal::{BigDecimal, FromPrimitive, RoundingMode, Zero};
use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use std::sync::Arc;

use super::{Item, Sequence};
use crate::error::{Error, ErrorCode, Result};

/// Decimals are exact with a bounded scale; results beyond it are rounded
/// half-even.
pub const MAX_DECIMAL_SCALE: i64 = 38;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    IntDiv,
    Mod,
}

impl ArithOp {
    pub fn name(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "div",
            ArithOp::IntDiv => "idiv",
            ArithOp::Mod => "mod",
        }
    }
}

/// Round a decimal to the bounded scale (half-even) if it exceeds it.
pub fn cap_decimal_scale(d: BigDecimal) -> BigDecimal {
    if d.as_bigint_and_exponent().1 > MAX_DECIMAL_SCALE {
        d.with_scale_round(MAX_DECIMAL_SCALE, RoundingMode::HalfEven)
    } else {
        d
    }
}

fn bigint_to_f64(i: &BigInt) -> f64 {
    i.to_f64().unwrap_or(if i.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY })
}

pub(crate) fn item_to_f64(item: &Item) -> f64 {
    match item {
        Item::Integer(i) => bigint_to_f64(i),
        Item::Decimal(d) => d.to_f64().unwrap_or(f64::NAN),
        Item::Double(d) => *d,
        _ => unreachable!("item_to_f64 on non-numeric"),
    }
}

fn item_to_decimal(item: &Item) -> BigDecimal {
    match item {
        Item::Integer(i) => BigDecimal::from((**i).clone()),
        Item::Decimal(d) => (**d).clone(),
        _ => unreachable!("item_to_decimal on non-exact numeric"),
    }
}

fn require_numeric(item: &Item, op: ArithOp) -> Result<()> {
    if item.is_numeric() {
        Ok(())
    } else {
        Err(Error::new(
            ErrorCode::Type,
            format!("operand of {} must be numeric, got {}", op.name(), item.type_name()),
        ))
    }
}

/// Arithmetic over operand sequences: an empty operand makes the result
/// empty, operands of more than one item are a type error.
pub fn arith(op: ArithOp, a: &[Item], b: &[Item]) -> Result<Sequence> {
    if a.is_empty() || b.is_empty() {
        return Ok(Vec::new());
    }
    if a.len() > 1 || b.len() > 1 {
        return Err(Error::new(
            ErrorCode::Type,
            format!("operand of {} must have at most one item", op.name()),
        ));
    }
    Ok(vec![arith_items(op, &a[0], &b[0])?])
}

pub fn arith_items(op: ArithOp, a: &Item, b: &Item) -> Result<Item> {
    require_numeric(a, op)?;
    require_numeric(b, op)?;

    if op == ArithOp::IntDiv {
        return int_div(a, b);
    }

    let any_double = matches!(a, Item::Double(_)) || matches!(b, Item::Double(_));
    if any_double {
        let (x, y) = (item_to_f64(a), item_to_f64(b));
        let value = match op {
            ArithOp::Add => x + y,
            ArithOp::Sub => x - y,
            ArithOp::Mul => x * y,
            ArithOp::Div => x / y,
            ArithOp::Mod => x % y,
            ArithOp::IntDiv => unreachable!(),
        };
        return Ok(Item::Double(value));
    }

    let both_integer = matches!(a, Item::Integer(_)) && matches!(b, Item::Integer(_));
    if both_integer && op != ArithOp::Div {
        let (x, y) = (int_of(a), int_of(b));
        let value = match op {
            ArithOp::Add => &**x + &**y,
            ArithOp::Sub => &**x - &**y,
            ArithOp::Mul => &**x * &**y,
            ArithOp::Mod => {
                if y.is_zero() {
                    return Err(div_by_zero("mod"));
                }
                &**x % &**y
            }
            ArithOp::Div | ArithOp::IntDiv => unreachable!(),
        };
        return Ok(Item::Integer(Arc::new(value)));
    }

    // Exact decimal arithmetic; integer div also lands here.
    let (x, y) = (item_to_decimal(a), item_to_decimal(b));
    let value = match op {
        ArithOp::Add => x + y,
        ArithOp::Sub => x - y,
        ArithOp::Mul => x * y,
        ArithOp::Div => {
            if y.is_zero() {
                return Err(div_by_zero("div"));
            }
            x / y
        }
        ArithOp::Mod => {
            if y.is_zero() {
                return Err(div_by_zero("mod"));
            }
            x % y
        }
        ArithOp::IntDiv => unreachable!(),
    };
    Ok(Item::decimal(cap_decimal_scale(value)))
}

fn int_of(item: &Item) -> &Arc<BigInt> {
    match item {
        Item::Integer(i) => i,
        _ => unreachable!(),
    }
}

fn div_by_zero(op: &str) -> Error {
    Error::new(ErrorCode::DivByZero, format!("{op} by zero"))
}

// idiv truncates toward zero and always yields an Integer.
fn int_div(a: &Item, b: &Item) -> Result<Item> {
    match (a, b) {
        (Item::Integer(x), Item::Integer(y)) => {
            if y.is_zero() {
                return Err(div_by_zero("idiv"));
            }
            Ok(Item::Integer(Arc::new(&**x / &**y)))
        }
        (Item::Double(_), _) | (_, Item::Double(_)) => {
            let (x, y) = (item_to_f64(a), item_to_f64(b));
            if y == 0.0 {
                return Err(div_by_zero("idiv"));
            }
            let q = x / y;
            if !q.is_finite() {
                return Err(Error::new(ErrorCode::Type, "idiv result is not finite"));
            }
            Ok(Item::integer(BigInt::from_f64(q.trunc()).ok_or_else(|| {
                Error::new(ErrorCode::Type, "idiv result is not representable")
            })?))
        }
        _ => {
            let (x, y) = (item_to_decimal(a), item_to_decimal(b));
            if y.is_zero() {
                return Err(div_by_zero("idiv"));
            }
            let q = (x / y).with_scale_round(0, RoundingMode::Down);
            Ok(Item::integer(q.into_bigint_and_exponent().0))
        }
    }
}

/// Unary minus over a sequence operand.
pub fn negate(a: &[Item]) -> Result<Sequence> {
    match a {
        [] => Ok(Vec::new()),
        [item] => {
            require_numeric(item, ArithOp::Sub)?;
            Ok(vec![match item {
                Item::Integer(i) => Item::Integer(Arc::new(-(**i).clone())),
                Item::Decimal(d) => Item::Decimal(Arc::new(-(**d).clone())),
                Item::Double(d) => Item::Double(-*d),
                _ => unreachable!(),
            }])
        }
        _ => Err(Error::new(ErrorCode::Type, "operand of unary - must have at most one item")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum NumKind {
    Integer,
    Decimal,
    Double,
}

/// Accumulator for `sum()` and `avg()`.
///
/// Finite values accumulate exactly (a finite double has an exact decimal
/// expansion), which makes the fold associative: partial sums over
/// partitions combine to the same result regardless of the partitioning.
/// Non-finite doubles are folded separately with IEEE rules, which are
/// themselves absorbing and order-independent.
#[derive(Debug, Clone)]
pub struct SumAccumulator {
    exact: BigDecimal,
    nonfinite: Option<f64>,
    kind: NumKind,
    count: u64,
}

impl Default for SumAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl SumAccumulator {
    pub fn new() -> Self {
        SumAccumulator {
            exact: BigDecimal::zero(),
            nonfinite: None,
            kind: NumKind::Integer,
            count: 0,
        }
    }

    pub fn add(&mut self, item: &Item, fn_name: &str) -> Result<()> {
        match item {
            Item::Integer(i) => self.exact += BigDecimal::from((**i).clone()),
            Item::Decimal(d) => {
                self.kind = self.kind.max(NumKind::Decimal);
                self.exact += (**d).clone();
            }
            Item::Double(d) => {
                self.kind = NumKind::Double;
                match BigDecimal::from_f64(*d) {
                    Some(exact) => self.exact += exact,
                    None => {
                        self.nonfinite = Some(self.nonfinite.unwrap_or(0.0) + *d);
                    }
                }
            }
            _ => {
                return Err(Error::new(
                    ErrorCode::Type,
                    format!("{fn_name}() requires numeric items, got {}", item.type_name()),
                ))
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &SumAccumulator) {
        self.exact += other.exact.clone();
        self.kind = self.kind.max(other.kind);
        self.count += other.count;
        if let Some(nf) = other.nonfinite {
            self.nonfinite = Some(self.nonfinite.unwrap_or(0.0) + nf);
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// The sum; 0 for an empty input.
    pub fn finish_sum(&self) -> Item {
        match self.kind {
            NumKind::Integer => Item::integer(self.exact.with_scale(0).into_bigint_and_exponent().0),
            NumKind::Decimal => Item::decimal(cap_decimal_scale(self.exact.clone())),
            NumKind::Double => Item::Double(self.sum_f64()),
        }
    }

    /// The average, or `None` for an empty input.
    pub fn finish_avg(&self) -> Option<Item> {
        if self.count == 0 {
            return None;
        }
        Some(match self.kind {
            NumKind::Integer | NumKind::Decimal => {
                let q = self.exact.clone() / BigDecimal::from(self.count);
                Item::decimal(cap_decimal_scale(q))
            }
            NumKind::Double => Item::Double(self.sum_f64() / self.count as f64),
        })
    }

    fn sum_f64(&self) -> f64 {
        let finite = self.exact.to_f64().unwrap_or(f64::NAN);
        match self.nonfinite {
            Some(nf) => finite + nf,
            None => finite,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::str::FromStr;

    fn dec(s: &str) -> Item {
        Item::decimal(BigDecimal::from_str(s).unwrap())
    }

    fn int(i: i64) -> Item {
        Item::integer(i)
    }

    // Rational-arithmetic oracle used to derive the frozen expectations:
    // all exact operations below were computed as exact decimals first.
    #[test]
    fn basic_promotion_fixtures() {
        assert_eq!(arith(ArithOp::Add, &[int(1)], &[int(2)]).unwrap(), vec![int(3)]);
        // Empty operand on either side yields the empty sequence.
        assert_eq!(arith(ArithOp::Add, &[int(1)], &[]).unwrap(), Vec::<Item>::new());
        assert_eq!(arith(ArithOp::Add, &[], &[int(1)]).unwrap(), Vec::<Item>::new());
        // div of integers is a decimal; idiv truncates toward zero.
        assert_eq!(arith(ArithOp::Div, &[int(7)], &[int(2)]).unwrap(), vec![dec("3.5")]);
        assert_eq!(arith(ArithOp::IntDiv, &[int(7)], &[int(2)]).unwrap(), vec![int(3)]);
        assert_eq!(arith(ArithOp::IntDiv, &[int(-7)], &[int(2)]).unwrap(), vec![int(-3)]);
        assert_eq!(
            arith(ArithOp::IntDiv, &[dec("7.5")], &[dec("2.5")]).unwrap(),
            vec![int(3)]
        );
        assert_eq!(arith(ArithOp::Mod, &[int(7)], &[int(2)]).unwrap(), vec![int(1)]);
        assert_eq!(arith(ArithOp::Mod, &[int(-7)], &[int(2)]).unwrap(), vec![int(-1)]);
        // Any double operand makes the result a double.
        assert_eq!(
            arith(ArithOp::Add, &[int(1)], &[Item::Double(0.5)]).unwrap(),
            vec![Item::Double(1.5)]
        );
        // Integer/decimal mix stays exact.
        assert_eq!(arith(ArithOp::Mul, &[int(2)], &[dec("0.1")]).unwrap(), vec![dec("0.2")]);
    }

    #[test]
    fn result_type_is_commutative() {
        let samples = [int(2), dec("1.5"), Item::Double(2.5)];
        for a in &samples {
            for b in &samples {
                for op in [ArithOp::Add, ArithOp::Mul] {
                    let ab = arith_items(op, a, b).unwrap();
                    let ba = arith_items(op, b, a).unwrap();
                    assert_eq!(ab.type_name(), ba.type_name());
                    assert_eq!(ab, ba);
                }
            }
        }
    }

    #[test]
    fn exact_division_by_zero_errors() {
        for op in [ArithOp::Div, ArithOp::IntDiv, ArithOp::Mod] {
            let err = arith(op, &[int(1)], &[int(0)]).unwrap_err();
            assert_eq!(err.code, ErrorCode::DivByZero, "{op:?}");
        }
        let err = arith(ArithOp::Div, &[dec("1.0")], &[dec("0.0")]).unwrap_err();
        assert_eq!(err.code, ErrorCode::DivByZero);
        // Double division by zero follows IEEE instead.
        assert_eq!(
            arith(ArithOp::Div, &[Item::Double(1.0)], &[Item::Double(0.0)]).unwrap(),
            vec![Item::Double(f64::INFINITY)]
        );
        let nan = arith(ArithOp::Div, &[Item::Double(0.0)], &[Item::Double(0.0)]).unwrap();
        assert!(matches!(nan[0], Item::Double(d) if d.is_nan()));
    }

    #[test]
    fn non_numeric_operands_error() {
        let err = arith(ArithOp::Add, &[Item::string("1")], &[int(1)]).unwrap_err();
        assert_eq!(err.code, ErrorCode::Type);
        let err = arith(ArithOp::Add, &[Item::Null], &[int(1)]).unwrap_err();
        assert_eq!(err.code, ErrorCode::Type);
        let err = arith(ArithOp::Add, &[int(1), int(2)], &[int(1)]).unwrap_err();
        assert_eq!(err.code, ErrorCode::Type);
    }

    #[test]
    fn decimal_scale_is_bounded() {
        let third = arith(ArithOp::Div, &[int(1)], &[int(3)]).unwrap();
        match &third[0] {
            Item::Decimal(d) => {
                assert!(d.as_bigint_and_exponent().1 <= MAX_DECIMAL_SCALE);
            }
            other => panic!("expected decimal, got {other:?}"),
        }
    }

    #[test]
    fn sum_accumulator_is_partition_independent() {
        let items = vec![int(1), dec("2.5"), Item::Double(0.1), Item::Double(0.2), int(4)];
        let mut whole = SumAccumulator::new();
        for it in &items {
            whole.add(it, "sum").unwrap();
        }
        // Split at every point and compare merged partials with the whole.
        for split in 0..=items.len() {
            let mut left = SumAccumulator::new();
            for it in &items[..split] {
                left.add(it, "sum").unwrap();
            }
            let mut right = SumAccumulator::new();
            for it in &items[split..] {
                right.add(it, "sum").unwrap();
            }
            left.merge(&right);
            assert_eq!(left.finish_sum(), whole.finish_sum());
            assert_eq!(left.finish_avg(), whole.finish_avg());
        }
    }

    #[test]
    fn sum_accumulator_types() {
        let mut acc = SumAccumulator::new();
        assert_eq!(acc.finish_sum(), int(0));
        assert_eq!(acc.finish_avg(), None);
        acc.add(&int(1), "sum").unwrap();
        acc.add(&int(2), "sum").unwrap();
        assert_eq!(acc.finish_sum(), int(3));
        assert_eq!(acc.finish_avg(), Some(dec("1.5")));
        acc.add(&Item::Double(0.5), "sum").unwrap();
        assert_eq!(acc.finish_sum(), Item::Double(3.5));
        let err = acc.add(&Item::string("x"), "sum").unwrap_err();
        assert_eq!(err.code, ErrorCode::Type);
    }
}
