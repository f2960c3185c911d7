//! Tuple rows and the grouping/ordering kernels shared by the local and
//! partitioned FLWOR implementations. Keeping one kernel for both modes
//! pins down identical group order, sort order, and error selection.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, ErrorCode, Result};
use crate::exec::context::DynamicContext;
use crate::jdm::{
    compare_atomics, shred_group_key, shred_order_key, CmpOp, Item, NullOrder, Sequence,
    ShreddedKey, SumAccumulator, TypeClass,
};
use crate::planner::{AggKind, GroupAction, NonGroupSpec, OrderKeySpec};

/// One tuple of the stream: one materialized cell per column of the
/// schema, shared cheaply between tuples.
pub type Row = Vec<Arc<Sequence>>;

pub type Schema = Arc<Vec<Arc<str>>>;

/// Context for evaluating a closure under one tuple.
pub fn row_context(base: &DynamicContext, schema: &Schema, row: &Row) -> DynamicContext {
    debug_assert_eq!(schema.len(), row.len());
    base.bind_all(schema.iter().cloned().zip(row.iter().cloned()).collect())
}

pub fn column_index(schema: &Schema, name: &str) -> Result<usize> {
    schema
        .iter()
        .position(|c| c.as_ref() == name)
        .ok_or_else(|| super::internal_error(format!("unknown tuple column ${name}")))
}

/// Splice a (re)bound column into a row: the old column of the same name
/// is dropped and the new value appended, matching how the planner
/// threads column sets.
pub fn rebind_row(row: &Row, replace: Option<usize>, value: Arc<Sequence>) -> Row {
    let mut out = Vec::with_capacity(row.len() + 1);
    for (i, cell) in row.iter().enumerate() {
        if Some(i) != replace {
            out.push(cell.clone());
        }
    }
    out.push(value);
    out
}

// ---------------------------------------------------------------------------
// Group-by
// ---------------------------------------------------------------------------

enum AggState {
    Count(u64),
    Sum(SumAccumulator),
    Avg(SumAccumulator),
    Min(Option<Item>),
    Max(Option<Item>),
}

impl AggState {
    fn new(kind: AggKind) -> AggState {
        match kind {
            AggKind::Count => AggState::Count(0),
            AggKind::Sum => AggState::Sum(SumAccumulator::new()),
            AggKind::Avg => AggState::Avg(SumAccumulator::new()),
            AggKind::Min => AggState::Min(None),
            AggKind::Max => AggState::Max(None),
        }
    }

    fn add_cell(&mut self, cell: &[Item]) -> Result<()> {
        match self {
            AggState::Count(n) => *n += cell.len() as u64,
            AggState::Sum(acc) => {
                for item in cell {
                    acc.add(item, "sum")?;
                }
            }
            AggState::Avg(acc) => {
                for item in cell {
                    acc.add(item, "avg")?;
                }
            }
            AggState::Min(best) => {
                for item in cell {
                    fold_min_max(best, item, CmpOp::Lt)?;
                }
            }
            AggState::Max(best) => {
                for item in cell {
                    fold_min_max(best, item, CmpOp::Gt)?;
                }
            }
        }
        Ok(())
    }

    fn merge(&mut self, other: AggState) -> Result<()> {
        match (self, other) {
            (AggState::Count(a), AggState::Count(b)) => *a += b,
            (AggState::Sum(a), AggState::Sum(b)) | (AggState::Avg(a), AggState::Avg(b)) => {
                a.merge(&b)
            }
            (AggState::Min(a), AggState::Min(Some(b))) => fold_min_max(a, &b, CmpOp::Lt)?,
            (AggState::Max(a), AggState::Max(Some(b))) => fold_min_max(a, &b, CmpOp::Gt)?,
            (AggState::Min(_), AggState::Min(None)) | (AggState::Max(_), AggState::Max(None)) => {}
            _ => return Err(super::internal_error("mismatched aggregate states")),
        }
        Ok(())
    }

    fn finish(&self) -> Sequence {
        match self {
            AggState::Count(n) => vec![Item::integer(*n)],
            AggState::Sum(acc) => vec![acc.finish_sum()],
            AggState::Avg(acc) => acc.finish_avg().into_iter().collect(),
            AggState::Min(best) | AggState::Max(best) => best.clone().into_iter().collect(),
        }
    }
}

/// Streaming fold step for min()/max(). Ties keep the earlier item; NaN
/// makes the result NaN.
pub fn fold_min_max(best: &mut Option<Item>, item: &Item, op: CmpOp) -> Result<()> {
    match best {
        None => *best = Some(item.clone()),
        Some(current) => {
            if matches!(current, Item::Double(d) if d.is_nan()) {
                return Ok(());
            }
            if matches!(item, Item::Double(d) if d.is_nan()) {
                *best = Some(item.clone());
                return Ok(());
            }
            if compare_atomics(item, current, op)? {
                *best = Some(item.clone());
            }
        }
    }
    Ok(())
}

struct GroupState {
    shredded: Vec<ShreddedKey>,
    /// Original key cells, recovered from the first tuple of the group.
    key_cells: Vec<Arc<Sequence>>,
    /// One accumulator per non-grouping spec (parallel to `specs`).
    collected: Vec<Sequence>,
    aggs: Vec<Vec<AggState>>,
}

/// Grouping accumulator. Build one per input stream (or per partition),
/// feed rows in order, merge accumulators in partition order, then
/// `finish()` to get the groups as rows in shredded-key order.
pub struct GroupTable {
    key_idx: Vec<usize>,
    specs: Vec<(usize, GroupAction)>,
    null_order: NullOrder,
    map: HashMap<Vec<ShreddedKey>, usize>,
    groups: Vec<GroupState>,
}

impl GroupTable {
    pub fn new(
        in_schema: &Schema,
        keys: &[Arc<str>],
        specs: &[NonGroupSpec],
        null_order: NullOrder,
    ) -> Result<GroupTable> {
        let key_idx = keys
            .iter()
            .map(|k| column_index(in_schema, k))
            .collect::<Result<Vec<_>>>()?;
        let specs = specs
            .iter()
            .map(|s| Ok((column_index(in_schema, &s.var)?, s.action.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(GroupTable { key_idx, specs, null_order, map: HashMap::new(), groups: Vec::new() })
    }

    pub fn add_row(&mut self, row: &Row) -> Result<()> {
        let shredded = self
            .key_idx
            .iter()
            .map(|&i| shred_group_key(&row[i], self.null_order))
            .collect::<Result<Vec<_>>>()?;
        let group_idx = match self.map.get(&shredded) {
            Some(&idx) => idx,
            None => {
                let idx = self.groups.len();
                self.map.insert(shredded.clone(), idx);
                self.groups.push(GroupState {
                    shredded,
                    key_cells: self.key_idx.iter().map(|&i| row[i].clone()).collect(),
                    collected: self
                        .specs
                        .iter()
                        .map(|(_, action)| {
                            let _ = action;
                            Vec::new()
                        })
                        .collect(),
                    aggs: self
                        .specs
                        .iter()
                        .map(|(_, action)| match action {
                            GroupAction::Aggregate(aggs) => {
                                aggs.iter().map(|(kind, _)| AggState::new(*kind)).collect()
                            }
                            _ => Vec::new(),
                        })
                        .collect(),
                });
                idx
            }
        };
        let group = &mut self.groups[group_idx];
        for (spec_no, (col, action)) in self.specs.iter().enumerate() {
            match action {
                GroupAction::Collect => {
                    group.collected[spec_no].extend(row[*col].iter().cloned());
                }
                GroupAction::Drop => {}
                GroupAction::Aggregate(_) => {
                    for agg in &mut group.aggs[spec_no] {
                        agg.add_cell(&row[*col])?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Merge a later partition's groups into this accumulator, preserving
    /// input order of collected lists.
    pub fn merge(&mut self, other: GroupTable) -> Result<()> {
        for group in other.groups {
            match self.map.get(&group.shredded) {
                Some(&idx) => {
                    let target = &mut self.groups[idx];
                    for (spec_no, collected) in group.collected.into_iter().enumerate() {
                        target.collected[spec_no].extend(collected);
                    }
                    for (spec_no, aggs) in group.aggs.into_iter().enumerate() {
                        for (mine, theirs) in target.aggs[spec_no].iter_mut().zip(aggs) {
                            mine.merge(theirs)?;
                        }
                    }
                }
                None => {
                    self.map.insert(group.shredded.clone(), self.groups.len());
                    self.groups.push(group);
                }
            }
        }
        Ok(())
    }

    /// Groups as output rows, sorted by their shredded key tuples.
    /// Column order: key columns, then per-spec collected/aggregate
    /// columns, matching the planner's group output columns.
    pub fn finish(mut self) -> Vec<Row> {
        self.groups.sort_by(|a, b| a.shredded.cmp(&b.shredded));
        self.groups
            .into_iter()
            .map(|group| {
                let mut row: Row = group.key_cells;
                for (spec_no, (_, action)) in self.specs.iter().enumerate() {
                    match action {
                        GroupAction::Collect => {
                            row.push(Arc::new(group.collected[spec_no].clone()))
                        }
                        GroupAction::Drop => {}
                        GroupAction::Aggregate(_) => {
                            for agg in &group.aggs[spec_no] {
                                row.push(Arc::new(agg.finish()));
                            }
                        }
                    }
                }
                row
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Order-by
// ---------------------------------------------------------------------------

/// First pass of order-by: every key cell must hold at most one atomic
/// item, and all non-null items of one key column must share a type class.
pub fn check_order_types<'a>(
    rows: impl Iterator<Item = &'a Row>,
    specs: &[OrderKeySpec],
    idx: &[usize],
) -> Result<()> {
    let mut witness: Vec<Option<TypeClass>> = vec![None; specs.len()];
    for row in rows {
        for (k, &col) in idx.iter().enumerate() {
            let cell = &row[col];
            if cell.len() > 1 {
                return Err(Error::new(
                    ErrorCode::OrderIncomparable,
                    format!("sort key {} has a cell with {} items", k + 1, cell.len()),
                ));
            }
            let Some(item) = cell.first() else { continue };
            let Some(class) = TypeClass::of(item) else {
                return Err(Error::new(
                    ErrorCode::OrderIncomparable,
                    format!("sort key {} is not atomic: got {}", k + 1, item.type_name()),
                ));
            };
            if class == TypeClass::Null {
                continue;
            }
            match witness[k] {
                None => witness[k] = Some(class),
                Some(seen) if seen == class => {}
                Some(seen) => {
                    return Err(Error::new(
                        ErrorCode::OrderIncomparable,
                        format!(
                            "sort key {} mixes incomparable types {} and {}",
                            k + 1,
                            seen.name(),
                            class.name()
                        ),
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Second pass: shredded sort key for one row.
pub fn order_key(row: &Row, specs: &[OrderKeySpec], idx: &[usize]) -> Result<Vec<ShreddedKey>> {
    specs
        .iter()
        .zip(idx)
        .map(|(spec, &col)| shred_order_key(&row[col], spec.empty_greatest))
        .collect()
}

/// Comparator over shredded key tuples honoring per-key direction.
pub fn compare_order_keys(
    a: &[ShreddedKey],
    b: &[ShreddedKey],
    specs: &[OrderKeySpec],
) -> std::cmp::Ordering {
    for ((ka, kb), spec) in a.iter().zip(b).zip(specs) {
        let mut ord = ka.cmp(kb);
        if spec.descending {
            ord = ord.reverse();
        }
        if ord != std::cmp::Ordering::Equal {
            return ord;
        }
    }
    std::cmp::Ordering::Equal
}

/// Drop the given column positions from an owned row.
pub fn strip_columns_owned(row: Row, drop_idx: &[usize]) -> Row {
    row.into_iter()
        .enumerate()
        .filter(|(i, _)| !drop_idx.contains(i))
        .map(|(_, cell)| cell)
        .collect()
}

/// Exclusive prefix sum of partition sizes: the global id offset of each
/// partition for the count clause.
pub fn count_offsets(sizes: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut total = 0usize;
    for &n in sizes {
        offsets.push(total);
        total += n;
    }
    offsets
}
