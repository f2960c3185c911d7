//! Partitioned execution: the higher interfaces of partition-capable
//! iterators, driven by the worker pool.
//!
//! A partitioned result is a list of lazy per-partition tasks; transforms
//! wrap the tasks, so chains of partition-wise operators fuse into one pass
//! per partition. Blocking operators (group-by, order-by, count clause,
//! positional predicates) materialize, coordinate, and re-emit in-memory
//! partitions. Closure plans always run through per-worker local cursors.

use rayon::prelude::*;
use std::sync::Arc;

use crate::error::{Error, ErrorCode, Result};
use crate::exec::context::DynamicContext;
use crate::exec::local::{
    line_to_item, predicate_keeps, ItemIter, LocalCursor, LocalEvaluator, RowIter,
};
use crate::exec::relational::{
    check_order_types, column_index, compare_order_keys, count_offsets, order_key, rebind_row,
    row_context, strip_columns_owned, GroupTable, Row, Schema,
};
use crate::exec::{internal_error, EngineCore, Output};
use crate::jdm::{Item, Object, Sequence};
use crate::planner::{
    AggKind, ClauseOp, ClausePlan, ExecutionMode, FlworPlan, PlanKind, PlanNode,
};

pub type ItemTask = Box<dyn FnOnce() -> ItemIter + Send>;
pub type RowTask = Box<dyn FnOnce() -> RowIter + Send>;

/// A partitioned sequence: ordered lazy partitions of items.
pub struct ItemParts {
    pub parts: Vec<ItemTask>,
}

impl ItemParts {
    fn from_vecs(vecs: Vec<Vec<Item>>) -> ItemParts {
        ItemParts {
            parts: vecs
                .into_iter()
                .map(|items| -> ItemTask { Box::new(move || Box::new(items.into_iter().map(Ok))) })
                .collect(),
        }
    }

    fn single(seq: Sequence) -> ItemParts {
        ItemParts::from_vecs(vec![seq])
    }
}

/// A tuple frame: ordered lazy partitions of rows plus the statically
/// known column set.
pub struct RowParts {
    pub schema: Schema,
    pub parts: Vec<RowTask>,
}

pub(crate) enum EvalOutput {
    Local(Sequence),
    Items(ItemParts),
    Rows(RowParts),
}

fn once_err_iter(e: Error) -> ItemIter {
    Box::new(std::iter::once(Err(e)))
}

// ---------------------------------------------------------------------------
// Pool driving
// ---------------------------------------------------------------------------

fn run_tasks<T: Send>(core: &Arc<EngineCore>, tasks: Vec<Box<dyn FnOnce() -> T + Send>>) -> Vec<T> {
    if tasks.len() <= 1 {
        return tasks.into_iter().map(|t| t()).collect();
    }
    core.pool.install(|| tasks.into_par_iter().map(|t| t()).collect())
}

/// First error wins by (partition index, item index); within a partition
/// iteration stops at the first error, so partition order is enough.
fn first_error<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(results.len());
    let mut error = None;
    for result in results {
        match result {
            Ok(v) => out.push(v),
            Err(e) => {
                error.get_or_insert(e);
            }
        }
    }
    match error {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn collect_item_parts(core: &Arc<EngineCore>, parts: ItemParts) -> Result<Vec<Vec<Item>>> {
    let tasks: Vec<Box<dyn FnOnce() -> Result<Vec<Item>> + Send>> = parts
        .parts
        .into_iter()
        .map(|task| -> Box<dyn FnOnce() -> Result<Vec<Item>> + Send> {
            Box::new(move || task().collect())
        })
        .collect();
    first_error(run_tasks(core, tasks))
}

fn collect_row_parts(core: &Arc<EngineCore>, parts: Vec<RowTask>) -> Result<Vec<Vec<Row>>> {
    let tasks: Vec<Box<dyn FnOnce() -> Result<Vec<Row>> + Send>> = parts
        .into_iter()
        .map(|task| -> Box<dyn FnOnce() -> Result<Vec<Row>> + Send> {
            Box::new(move || task().collect())
        })
        .collect();
    first_error(run_tasks(core, tasks))
}

/// Split a materialized sequence into `n` contiguous chunks (some possibly
/// empty), sized like `parallelize` does.
pub(crate) fn split_evenly<T>(mut items: Vec<T>, n: usize) -> Vec<Vec<T>> {
    let n = n.max(1);
    let total = items.len();
    let mut out = Vec::with_capacity(n);
    let mut taken = 0;
    for i in 0..n {
        let end = (i + 1) * total / n;
        let chunk: Vec<T> = items.drain(..end - taken).collect();
        taken = end;
        out.push(chunk);
    }
    out
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

pub(crate) fn eval_root(
    core: &Arc<EngineCore>,
    plan: &Arc<PlanNode>,
    ctx: &DynamicContext,
) -> Result<Output> {
    match eval(core, plan, ctx)? {
        EvalOutput::Local(seq) => Ok(Output { partitions: vec![seq] }),
        EvalOutput::Items(parts) => {
            Ok(Output { partitions: collect_item_parts(core, parts)? })
        }
        EvalOutput::Rows(rows) => {
            let parts = collect_item_parts(core, rows_to_objects(rows))?;
            Ok(Output { partitions: parts })
        }
    }
}

/// Evaluate a node through its assigned (highest) execution mode.
pub(crate) fn eval(
    core: &Arc<EngineCore>,
    plan: &Arc<PlanNode>,
    ctx: &DynamicContext,
) -> Result<EvalOutput> {
    match plan.mode {
        ExecutionMode::Local => {
            let seq = LocalEvaluator::pooled(core.clone()).eval_sequence(plan, ctx)?;
            Ok(EvalOutput::Local(seq))
        }
        ExecutionMode::Partitioned | ExecutionMode::Frame => eval_upper(core, plan, ctx),
    }
}

/// Materialize any node into ordered partitions of items (the partitioned
/// → local lowering).
pub(crate) fn materialize_items(
    core: &Arc<EngineCore>,
    plan: &Arc<PlanNode>,
    ctx: &DynamicContext,
) -> Result<Vec<Vec<Item>>> {
    match eval(core, plan, ctx)? {
        EvalOutput::Local(seq) => Ok(vec![seq]),
        EvalOutput::Items(parts) => collect_item_parts(core, parts),
        EvalOutput::Rows(rows) => collect_item_parts(core, rows_to_objects(rows)),
    }
}

fn as_item_parts(output: EvalOutput) -> ItemParts {
    match output {
        EvalOutput::Local(seq) => ItemParts::single(seq),
        EvalOutput::Items(parts) => parts,
        EvalOutput::Rows(rows) => rows_to_objects(rows),
    }
}

/// Lower a frame to a sequence of one object per row: absent cells are
/// omitted, singleton cells inline their item, longer cells become arrays.
fn rows_to_objects(rows: RowParts) -> ItemParts {
    let schema = rows.schema;
    ItemParts {
        parts: rows
            .parts
            .into_iter()
            .map(|task| -> ItemTask {
                let schema = schema.clone();
                Box::new(move || {
                    Box::new(task().map(move |row| {
                        let row = row?;
                        let mut object = Object::with_capacity(row.len());
                        for (name, cell) in schema.iter().zip(row) {
                            let value = match cell.len() {
                                0 => continue,
                                1 => cell[0].clone(),
                                _ => Item::array(cell.as_ref().clone()),
                            };
                            object.insert(name.clone(), value)?;
                        }
                        Ok(Item::object(object))
                    }))
                })
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Partitioned kinds
// ---------------------------------------------------------------------------

fn eval_upper(
    core: &Arc<EngineCore>,
    plan: &Arc<PlanNode>,
    ctx: &DynamicContext,
) -> Result<EvalOutput> {
    let local = LocalEvaluator::pooled(core.clone());
    match &plan.kind {
        PlanKind::JsonFile { pattern, partitions } | PlanKind::TextFile { pattern, partitions } => {
            let parse_json = matches!(plan.kind, PlanKind::JsonFile { .. });
            let hint = local.partition_hint(partitions, ctx)?;
            let paths = local.source_paths_for(pattern, ctx)?;
            let splits = crate::io::compute_splits(&paths, hint)?;
            let parts = splits
                .into_iter()
                .map(|split| -> ItemTask {
                    let core = core.clone();
                    Box::new(move || match crate::io::SplitLines::open(&split, Some(&core.stats)) {
                        Err(e) => once_err_iter(e),
                        Ok(lines) => {
                            let path = split.path.clone();
                            Box::new(lines.filter_map(move |line| match line {
                                Err(e) => Some(Err(e)),
                                Ok((offset, text)) => {
                                    line_to_item(&text, offset, &path, parse_json, &core)
                                        .transpose()
                                }
                            }))
                        }
                    })
                })
                .collect();
            Ok(EvalOutput::Items(ItemParts { parts }))
        }
        PlanKind::Parallelize { input, partitions } => {
            let hint = local.partition_hint(partitions, ctx)?;
            let items: Vec<Item> =
                materialize_items(core, input, ctx)?.into_iter().flatten().collect();
            Ok(EvalOutput::Items(ItemParts::from_vecs(split_evenly(items, hint))))
        }
        PlanKind::Concat(children) => {
            let mut parts: Vec<ItemTask> = Vec::new();
            for child in children {
                parts.extend(as_item_parts(eval(core, child, ctx)?).parts);
            }
            Ok(EvalOutput::Items(ItemParts { parts }))
        }
        PlanKind::ObjectLookup { input, key } => {
            let key = match local.resolve_plan_key(key, ctx)? {
                Some(k) => k,
                None => return Ok(EvalOutput::Items(ItemParts { parts: Vec::new() })),
            };
            let input = as_item_parts(eval(core, input, ctx)?);
            Ok(EvalOutput::Items(map_parts(input, move |iter| {
                let key = key.clone();
                Box::new(iter.filter_map(move |item| match item {
                    Err(e) => Some(Err(e)),
                    Ok(Item::Object(obj)) => obj.get(&key).cloned().map(Ok),
                    Ok(_) => None,
                }))
            })))
        }
        PlanKind::ArrayUnbox(input) => {
            let input = as_item_parts(eval(core, input, ctx)?);
            Ok(EvalOutput::Items(map_parts(input, |iter| {
                Box::new(iter.flat_map(|item| -> ItemIter {
                    match item {
                        Err(e) => once_err_iter(e),
                        Ok(Item::Array(values)) => {
                            Box::new((0..values.len()).map(move |i| Ok(values[i].clone())))
                        }
                        Ok(_) => Box::new(std::iter::empty()),
                    }
                }))
            })))
        }
        PlanKind::ArrayAccess { input, index } => {
            let index = local.array_index(index, ctx)?;
            let input = as_item_parts(eval(core, input, ctx)?);
            Ok(EvalOutput::Items(map_parts(input, move |iter| {
                let index = index.clone();
                Box::new(iter.filter_map(move |item| match item {
                    Err(e) => Some(Err(e)),
                    Ok(Item::Array(values)) => {
                        let i = index.as_ref()?.clone();
                        use num_traits::ToPrimitive;
                        let i = i.to_usize()?;
                        (i >= 1 && i <= values.len()).then(|| Ok(values[i - 1].clone()))
                    }
                    Ok(_) => None,
                }))
            })))
        }
        PlanKind::SimpleMap { input, mapper } => {
            let input = as_item_parts(eval(core, input, ctx)?);
            let mapper = mapper.clone();
            let base = ctx.clone();
            let core2 = core.clone();
            Ok(EvalOutput::Items(map_parts(input, move |iter| {
                Box::new(ClosureFlatMap::new(
                    iter,
                    LocalEvaluator::sequential(core2.clone()),
                    mapper.clone(),
                    base.clone(),
                ))
            })))
        }
        PlanKind::Treat { expr, ty } => {
            let input = as_item_parts(eval(core, expr, ctx)?);
            let ty = *ty;
            Ok(EvalOutput::Items(map_parts(input, move |iter| {
                Box::new(iter.map(move |item| {
                    let item = item?;
                    if crate::jdm::item_matches(&item, ty.item) {
                        Ok(item)
                    } else {
                        Err(Error::new(
                            ErrorCode::Treat,
                            format!("item of type {} does not match {ty}", item.type_name()),
                        ))
                    }
                }))
            })))
        }
        PlanKind::Predicate { input, pred } => eval_predicate(core, input, pred, ctx),
        PlanKind::If { cond, then, els } => {
            // The condition is evaluated eagerly through the local
            // interface (which may itself run a parallel job); only the
            // branch that is taken is ever evaluated.
            let branch = if local.ebv(cond, ctx)? { then } else { els };
            Ok(EvalOutput::Items(as_item_parts(eval(core, branch, ctx)?)))
        }
        PlanKind::Switch { input, cases, default } => {
            let branch = local.switch_branch(input, cases, default, ctx)?;
            Ok(EvalOutput::Items(as_item_parts(eval(core, &branch, ctx)?)))
        }
        PlanKind::TypeSwitch { input, cases, default } => {
            let seq = local.eval_sequence(input, ctx)?;
            let branch = cases
                .iter()
                .find(|(ty, _)| crate::jdm::instance_of(&seq, *ty))
                .map(|(_, body)| body)
                .unwrap_or(default);
            Ok(EvalOutput::Items(as_item_parts(eval(core, branch, ctx)?)))
        }
        PlanKind::Annotate { input, schema } => {
            let schema = local.resolve_schema(schema, ctx)?;
            let item_parts = collect_item_parts(core, as_item_parts(eval(core, input, ctx)?))?;
            let offsets = count_offsets(
                &item_parts.iter().map(|p| p.len()).collect::<Vec<_>>(),
            );
            let columns: Schema =
                Arc::new(schema.fields.iter().map(|f| f.name.clone()).collect());
            let parts = item_parts
                .into_iter()
                .zip(offsets)
                .map(|(items, offset)| -> RowTask {
                    let schema = schema.clone();
                    Box::new(move || {
                        Box::new(items.into_iter().enumerate().map(move |(i, item)| {
                            crate::io::schema::annotate_object(&item, &schema, offset + i)
                                .map(|cells| cells.into_iter().map(Arc::new).collect())
                        }))
                    })
                })
                .collect();
            Ok(EvalOutput::Rows(RowParts { schema: columns, parts }))
        }
        PlanKind::Flwor(flwor) => eval_flwor(core, flwor, ctx),
        other => Err(internal_error(format!(
            "kind {:?} does not implement a partitioned interface",
            std::mem::discriminant(other)
        ))),
    }
}

fn map_parts(
    input: ItemParts,
    f: impl Fn(ItemIter) -> ItemIter + Clone + Send + 'static,
) -> ItemParts {
    ItemParts {
        parts: input
            .parts
            .into_iter()
            .map(|task| -> ItemTask {
                let f = f.clone();
                Box::new(move || f(task()))
            })
            .collect(),
    }
}

/// Per-worker flat-map through a closure plan, driven by one cursor that is
/// reset for every input item.
struct ClosureFlatMap {
    input: ItemIter,
    cursor: LocalCursor,
    base: DynamicContext,
    opened: bool,
    active: bool,
}

impl ClosureFlatMap {
    fn new(
        input: ItemIter,
        eval: LocalEvaluator,
        plan: Arc<PlanNode>,
        base: DynamicContext,
    ) -> ClosureFlatMap {
        ClosureFlatMap {
            input,
            cursor: LocalCursor::new(eval, plan),
            base,
            opened: false,
            active: false,
        }
    }

    fn rebind(&mut self, ctx: &DynamicContext) -> Result<()> {
        if self.opened {
            self.cursor.reset(ctx)
        } else {
            self.opened = true;
            self.cursor.open(ctx)
        }
    }
}

impl Iterator for ClosureFlatMap {
    type Item = Result<Item>;
    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.active {
                match self.cursor.has_next() {
                    Err(e) => return Some(Err(e)),
                    Ok(true) => return Some(self.cursor.next()),
                    Ok(false) => self.active = false,
                }
            }
            match self.input.next()? {
                Err(e) => return Some(Err(e)),
                Ok(item) => {
                    let ctx = self.base.with_context_item(item);
                    if let Err(e) = self.rebind(&ctx) {
                        return Some(Err(e));
                    }
                    self.active = true;
                }
            }
        }
    }
}

fn eval_predicate(
    core: &Arc<EngineCore>,
    input: &Arc<PlanNode>,
    pred: &Arc<PlanNode>,
    ctx: &DynamicContext,
) -> Result<EvalOutput> {
    let input_parts = as_item_parts(eval(core, input, ctx)?);
    if predicate_is_boolean(pred) {
        // No numeric result possible: a pure streaming filter.
        let pred = pred.clone();
        let base = ctx.clone();
        let core2 = core.clone();
        return Ok(EvalOutput::Items(map_parts(input_parts, move |iter| {
            Box::new(PredicateFilter {
                input: iter,
                cursor: LocalCursor::new(LocalEvaluator::sequential(core2.clone()), pred.clone()),
                base: base.clone(),
                opened: false,
                pos: 0,
                positional: false,
            })
        })));
    }
    // The predicate may be positional, so items need their global
    // positions: materialize, compute offsets, then filter per partition.
    let item_parts = collect_item_parts(core, input_parts)?;
    let offsets = count_offsets(&item_parts.iter().map(|p| p.len()).collect::<Vec<_>>());
    let pred = pred.clone();
    let base = ctx.clone();
    let core2 = core.clone();
    let parts = item_parts
        .into_iter()
        .zip(offsets)
        .map(|(items, offset)| -> ItemTask {
            let pred = pred.clone();
            let base = base.clone();
            let core = core2.clone();
            Box::new(move || {
                let mut filter = PredicateFilter {
                    input: Box::new(items.into_iter().map(Ok)),
                    cursor: LocalCursor::new(LocalEvaluator::sequential(core), pred),
                    base,
                    opened: false,
                    pos: offset as u64,
                    positional: true,
                };
                let _ = &mut filter;
                Box::new(filter)
            })
        })
        .collect();
    Ok(EvalOutput::Items(ItemParts { parts }))
}

/// Conservative check that a predicate plan can never produce a number,
/// which licenses streaming filtering without global positions.
fn predicate_is_boolean(pred: &PlanNode) -> bool {
    use crate::planner::ScalarFn;
    match &pred.kind {
        PlanKind::Compare { .. }
        | PlanKind::And(..)
        | PlanKind::Or(..)
        | PlanKind::Not(_)
        | PlanKind::Castable { .. }
        | PlanKind::InstanceOf { .. }
        | PlanKind::Some { .. }
        | PlanKind::EmptySeq => true,
        PlanKind::Literal(item) => !item.is_numeric(),
        PlanKind::ScalarCall { func, .. } => matches!(
            func,
            ScalarFn::Boolean | ScalarFn::Not | ScalarFn::Contains | ScalarFn::StartsWith
        ),
        _ => false,
    }
}

struct PredicateFilter {
    input: ItemIter,
    cursor: LocalCursor,
    base: DynamicContext,
    opened: bool,
    pos: u64,
    positional: bool,
}

impl PredicateFilter {
    fn keep(&mut self, item: &Item) -> Result<bool> {
        let ctx = self.base.with_context_item(item.clone());
        if self.opened {
            self.cursor.reset(&ctx)?;
        } else {
            self.cursor.open(&ctx)?;
            self.opened = true;
        }
        let (values, more) = self.cursor.take_up_to(2)?;
        if self.positional {
            predicate_keeps(&values, more, self.pos)
        } else {
            crate::jdm::effective_boolean_value(&values)
        }
    }
}

impl Iterator for PredicateFilter {
    type Item = Result<Item>;
    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.input.next()? {
                Err(e) => return Some(Err(e)),
                Ok(item) => {
                    self.pos += 1;
                    match self.keep(&item) {
                        Err(e) => return Some(Err(e)),
                        Ok(true) => return Some(Ok(item)),
                        Ok(false) => {}
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Aggregates over partitioned input
// ---------------------------------------------------------------------------

enum AggPartial {
    Count(u64),
    Sum(crate::jdm::SumAccumulator),
    MinMax(Option<Item>),
}

pub(crate) fn fold_aggregate(
    core: &Arc<EngineCore>,
    agg: AggKind,
    input: &Arc<PlanNode>,
    ctx: &DynamicContext,
) -> Result<Sequence> {
    let parts = as_item_parts(eval(core, input, ctx)?);
    let tasks: Vec<Box<dyn FnOnce() -> Result<AggPartial> + Send>> = parts
        .parts
        .into_iter()
        .map(|task| -> Box<dyn FnOnce() -> Result<AggPartial> + Send> {
            Box::new(move || {
                let mut iter = task();
                match agg {
                    AggKind::Count => {
                        let mut n = 0u64;
                        while let Some(item) = iter.next() {
                            item?;
                            n += 1;
                        }
                        Ok(AggPartial::Count(n))
                    }
                    AggKind::Sum | AggKind::Avg => {
                        let mut acc = crate::jdm::SumAccumulator::new();
                        while let Some(item) = iter.next() {
                            acc.add(&item?, agg.name())?;
                        }
                        Ok(AggPartial::Sum(acc))
                    }
                    AggKind::Min | AggKind::Max => {
                        let op = if agg == AggKind::Min {
                            crate::jdm::CmpOp::Lt
                        } else {
                            crate::jdm::CmpOp::Gt
                        };
                        let mut best = None;
                        while let Some(item) = iter.next() {
                            crate::exec::relational::fold_min_max(&mut best, &item?, op)?;
                        }
                        Ok(AggPartial::MinMax(best))
                    }
                }
            })
        })
        .collect();
    let partials = first_error(run_tasks(core, tasks))?;

    match agg {
        AggKind::Count => {
            let mut total: u64 = 0;
            for partial in partials {
                let AggPartial::Count(n) = partial else { unreachable!() };
                total += n;
            }
            Ok(vec![Item::integer(total)])
        }
        AggKind::Sum | AggKind::Avg => {
            let mut acc = crate::jdm::SumAccumulator::new();
            for partial in partials {
                let AggPartial::Sum(p) = partial else { unreachable!() };
                acc.merge(&p);
            }
            Ok(match agg {
                AggKind::Sum => vec![acc.finish_sum()],
                _ => acc.finish_avg().into_iter().collect(),
            })
        }
        AggKind::Min | AggKind::Max => {
            let op =
                if agg == AggKind::Min { crate::jdm::CmpOp::Lt } else { crate::jdm::CmpOp::Gt };
            let mut best: Option<Item> = None;
            for partial in partials {
                let AggPartial::MinMax(Some(candidate)) = partial else { continue };
                crate::exec::relational::fold_min_max(&mut best, &candidate, op)?;
            }
            Ok(best.into_iter().collect())
        }
    }
}

// ---------------------------------------------------------------------------
// FLWOR over frames
// ---------------------------------------------------------------------------

fn eval_flwor(
    core: &Arc<EngineCore>,
    flwor: &FlworPlan,
    ctx: &DynamicContext,
) -> Result<EvalOutput> {
    let local = LocalEvaluator::pooled(core.clone());
    let mut lead_bindings: Vec<(Arc<str>, Arc<Sequence>)> = Vec::new();
    let mut frame: Option<RowParts> = None;
    let mut schema: Schema = Arc::new(Vec::new());

    for clause in &flwor.clauses {
        match &mut frame {
            None => match &clause.op {
                // Leading lets bind once, into the single implicit tuple.
                ClauseOp::Let { var, expr, .. } => {
                    let lead_ctx = ctx.bind_all(lead_bindings.clone());
                    let value = Arc::new(local.eval_sequence(expr, &lead_ctx)?);
                    lead_bindings.retain(|(n, _)| n != var);
                    lead_bindings.push((var.clone(), value));
                    schema = clause.out_columns.clone();
                }
                ClauseOp::For { expr, initial: true, .. } => {
                    let lead_ctx = ctx.bind_all(lead_bindings.clone());
                    let source = as_item_parts(eval(core, expr, &lead_ctx)?);
                    let lead_cells: Vec<Arc<Sequence>> = clause
                        .out_columns
                        .iter()
                        .take(clause.out_columns.len() - 1)
                        .map(|name| {
                            lead_bindings
                                .iter()
                                .find(|(n, _)| n == name)
                                .map(|(_, v)| v.clone())
                                .ok_or_else(|| {
                                    internal_error(format!("missing leading binding ${name}"))
                                })
                        })
                        .collect::<Result<_>>()?;
                    let parts = source
                        .parts
                        .into_iter()
                        .map(|task| -> RowTask {
                            let lead_cells = lead_cells.clone();
                            Box::new(move || {
                                Box::new(task().map(move |item| {
                                    let item = item?;
                                    let mut row = lead_cells.clone();
                                    row.push(Arc::new(vec![item]));
                                    Ok(row)
                                }))
                            })
                        })
                        .collect();
                    schema = clause.out_columns.clone();
                    frame = Some(RowParts { schema: schema.clone(), parts });
                }
                _ => {
                    return Err(internal_error(
                        "tuple stream not lifted at the first non-let clause",
                    ))
                }
            },
            Some(_) => {
                let current = frame.take().expect("frame present");
                let next = apply_clause(core, clause, schema.clone(), current, ctx)?;
                schema = clause.out_columns.clone();
                frame = Some(next);
            }
        }
    }

    let frame = frame.ok_or_else(|| internal_error("partitioned FLWOR without a lifted stream"))?;

    // Return clause: evaluate per tuple, concatenate in tuple order.
    let expr = flwor.return_expr.clone();
    let base = ctx.clone();
    let core2 = core.clone();
    let out_schema = schema;
    let parts = frame
        .parts
        .into_iter()
        .map(|task| -> ItemTask {
            let expr = expr.clone();
            let base = base.clone();
            let core = core2.clone();
            let schema = out_schema.clone();
            Box::new(move || {
                Box::new(ReturnFlatMap {
                    rows: task(),
                    cursor: LocalCursor::new(LocalEvaluator::sequential(core), expr),
                    base,
                    schema,
                    opened: false,
                    active: false,
                })
            })
        })
        .collect();
    Ok(EvalOutput::Items(ItemParts { parts }))
}

struct ReturnFlatMap {
    rows: RowIter,
    cursor: LocalCursor,
    base: DynamicContext,
    schema: Schema,
    opened: bool,
    active: bool,
}

impl Iterator for ReturnFlatMap {
    type Item = Result<Item>;
    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.active {
                match self.cursor.has_next() {
                    Err(e) => return Some(Err(e)),
                    Ok(true) => return Some(self.cursor.next()),
                    Ok(false) => self.active = false,
                }
            }
            match self.rows.next()? {
                Err(e) => return Some(Err(e)),
                Ok(row) => {
                    let ctx = row_context(&self.base, &self.schema, &row);
                    let result =
                        if self.opened { self.cursor.reset(&ctx) } else { self.cursor.open(&ctx) };
                    self.opened = true;
                    if let Err(e) = result {
                        return Some(Err(e));
                    }
                    self.active = true;
                }
            }
        }
    }
}

fn apply_clause(
    core: &Arc<EngineCore>,
    clause: &ClausePlan,
    in_schema: Schema,
    frame: RowParts,
    ctx: &DynamicContext,
) -> Result<RowParts> {
    match &clause.op {
        // Streaming clauses reuse the local pipeline per partition, with a
        // sequential evaluator on each worker.
        ClauseOp::For { .. } | ClauseOp::Let { .. } | ClauseOp::Where(_) => {
            let clause = clause.clone();
            let base = ctx.clone();
            let core2 = core.clone();
            let out_schema = clause.out_columns.clone();
            let parts = frame
                .parts
                .into_iter()
                .map(|task| -> RowTask {
                    let clause = clause.clone();
                    let in_schema = in_schema.clone();
                    let base = base.clone();
                    let core = core2.clone();
                    Box::new(move || {
                        let eval = LocalEvaluator::sequential(core);
                        match eval.clause_iter(&clause, in_schema, task(), &base) {
                            Ok(rows) => rows,
                            Err(e) => Box::new(std::iter::once(Err(e))),
                        }
                    })
                })
                .collect();
            Ok(RowParts { schema: out_schema, parts })
        }
        ClauseOp::GroupBy { keys, nongroup } => {
            let row_parts = collect_row_parts(core, frame.parts)?;
            // Pre-aggregate each partition, then merge in partition order.
            let tasks: Vec<Box<dyn FnOnce() -> Result<GroupTable> + Send>> = row_parts
                .into_iter()
                .map(|rows| -> Box<dyn FnOnce() -> Result<GroupTable> + Send> {
                    let in_schema = in_schema.clone();
                    let keys = keys.clone();
                    let nongroup = nongroup.clone();
                    let null_order = core.config.null_order;
                    Box::new(move || {
                        let mut table = GroupTable::new(&in_schema, &keys, &nongroup, null_order)?;
                        for row in &rows {
                            table.add_row(row)?;
                        }
                        Ok(table)
                    })
                })
                .collect();
            let tables = first_error(run_tasks(core, tasks))?;
            let mut merged: Option<GroupTable> = None;
            for table in tables {
                match &mut merged {
                    None => merged = Some(table),
                    Some(m) => m.merge(table)?,
                }
            }
            let rows = match merged {
                Some(table) => table.finish(),
                None => Vec::new(),
            };
            Ok(rows_to_parts(rows, clause.out_columns.clone(), core.config.default_partitions))
        }
        ClauseOp::OrderBy { specs, drop } => {
            let idx = specs
                .iter()
                .map(|s| column_index(&in_schema, &s.var))
                .collect::<Result<Vec<_>>>()?;
            let row_parts = collect_row_parts(core, frame.parts)?;
            // Pass 1: discover the types, in global row order.
            check_order_types(row_parts.iter().flatten(), specs, &idx)
                .map_err(|e| e.or_span(clause.span))?;
            // Pass 2: shred and pre-sort each partition, then one k-way
            // merge. Per-partition sorts are stable, and ties across
            // partitions resolve by partition order, so the merge equals a
            // stable global sort.
            let sort_tasks: Vec<Box<dyn FnOnce() -> Result<Vec<(Vec<crate::jdm::ShreddedKey>, Row)>> + Send>> =
                row_parts
                    .into_iter()
                    .map(|rows| -> Box<dyn FnOnce() -> Result<Vec<(Vec<crate::jdm::ShreddedKey>, Row)>> + Send> {
                        let specs = specs.to_vec();
                        let idx = idx.clone();
                        Box::new(move || {
                            let mut keyed = rows
                                .into_iter()
                                .map(|row| Ok((order_key(&row, &specs, &idx)?, row)))
                                .collect::<Result<Vec<_>>>()?;
                            keyed.sort_by(|(a, _), (b, _)| compare_order_keys(a, b, &specs));
                            Ok(keyed)
                        })
                    })
                    .collect();
            let sorted_parts =
                first_error(run_tasks(core, sort_tasks)).map_err(|e| e.or_span(clause.span))?;
            let drop_idx: Vec<usize> = in_schema
                .iter()
                .enumerate()
                .filter(|(_, c)| drop.contains(c))
                .map(|(i, _)| i)
                .collect();
            let merged = merge_sorted_partitions(sorted_parts, specs);
            let rows: Vec<Row> = merged
                .into_iter()
                .map(|row| strip_columns_owned(row, &drop_idx))
                .collect();
            Ok(rows_to_parts(rows, clause.out_columns.clone(), core.config.default_partitions))
        }
        ClauseOp::Count(var) => {
            // Enumerate within each partition, then add the exclusive
            // prefix sum of partition sizes; the tuple data itself is not
            // repartitioned.
            let row_parts = collect_row_parts(core, frame.parts)?;
            let offsets = count_offsets(&row_parts.iter().map(|p| p.len()).collect::<Vec<_>>());
            let replace = in_schema.iter().position(|c| c == var);
            let parts = row_parts
                .into_iter()
                .zip(offsets)
                .map(|(rows, offset)| -> RowTask {
                    Box::new(move || {
                        Box::new(rows.into_iter().enumerate().map(move |(i, row)| {
                            let id = Item::integer((offset + i + 1) as u64);
                            Ok(rebind_row(&row, replace, Arc::new(vec![id])))
                        }))
                    })
                })
                .collect();
            Ok(RowParts { schema: clause.out_columns.clone(), parts })
        }
    }
}

fn rows_to_parts(rows: Vec<Row>, schema: Schema, partitions: usize) -> RowParts {
    let parts = split_evenly(rows, partitions)
        .into_iter()
        .map(|chunk| -> RowTask { Box::new(move || Box::new(chunk.into_iter().map(Ok))) })
        .collect();
    RowParts { schema, parts }
}

/// K-way merge of per-partition sorted runs. A strictly smaller key wins;
/// on ties the earlier partition goes first, which together with stable
/// per-partition sorts yields a stable global sort.
fn merge_sorted_partitions(
    parts: Vec<Vec<(Vec<crate::jdm::ShreddedKey>, Row)>>,
    specs: &[crate::planner::OrderKeySpec],
) -> Vec<Row> {
    let total: usize = parts.iter().map(|p| p.len()).sum();
    let mut runs: Vec<std::vec::IntoIter<(Vec<crate::jdm::ShreddedKey>, Row)>> =
        parts.into_iter().map(|p| p.into_iter()).collect();
    let mut heads: Vec<Option<(Vec<crate::jdm::ShreddedKey>, Row)>> =
        runs.iter_mut().map(|run| run.next()).collect();
    let mut out = Vec::with_capacity(total);
    loop {
        let mut best: Option<usize> = None;
        for i in 0..heads.len() {
            let Some((key, _)) = &heads[i] else { continue };
            best = match best {
                None => Some(i),
                Some(b) => {
                    let (best_key, _) = heads[b].as_ref().expect("best head present");
                    if compare_order_keys(key, best_key, specs) == std::cmp::Ordering::Less {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        let Some(b) = best else { break };
        let (_, row) = heads[b].take().expect("best head present");
        heads[b] = runs[b].next();
        out.push(row);
    }
    out
}
