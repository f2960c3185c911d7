//! Local pull execution: every iterator kind has a single-threaded
//! streaming implementation here. This is the universal fallback mode, the
//! engine for closure plans inside parallel operators, and the whole story
//! under `--force-local`.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::ToPrimitive;

use crate::error::{Error, ErrorCode, Result, Span};
use crate::exec::context::DynamicContext;
use crate::exec::relational::{
    check_order_types, column_index, compare_order_keys, order_key, rebind_row, row_context,
    GroupTable, Row, Schema,
};
use crate::exec::{internal_error, is_partitioned, parallel, EngineCore};
use crate::io::{self, schema::Schema as IoSchema, OnBadLine};
use crate::jdm::{
    arith, atomic_to_string, cast_item, castable, compare_atomics, effective_boolean_value,
    instance_of, negate, treat, CmpOp, Item, Occurrence, Sequence, SumAccumulator,
};
use crate::planner::{
    AggKind, ClauseOp, ClausePlan, ExecutionMode, FlworPlan, PlanKey, PlanKind, PlanNode,
    ScalarFn,
};

pub type ItemIter = Box<dyn Iterator<Item = Result<Item>> + Send>;
pub(crate) type RowIter = Box<dyn Iterator<Item = Result<Row>> + Send>;

/// Evaluates plans through the local interface.
///
/// In `pooled` form (automatic mode), partitioned children are consumed
/// through their parallel interface and lowered by materialization; in
/// `sequential` form (forced local and closure plans inside workers),
/// everything runs as pull iterators on the calling thread.
#[derive(Clone)]
pub struct LocalEvaluator {
    core: Arc<EngineCore>,
    use_pool: bool,
}

fn empty_iter() -> ItemIter {
    Box::new(std::iter::empty())
}

fn once_err(e: Error) -> ItemIter {
    Box::new(std::iter::once(Err(e)))
}

fn seq_iter(seq: Sequence) -> ItemIter {
    Box::new(seq.into_iter().map(Ok))
}

fn result_iter(result: Result<Sequence>) -> ItemIter {
    match result {
        Ok(seq) => seq_iter(seq),
        Err(e) => once_err(e),
    }
}

/// Iterate a shared sequence without cloning it up front.
struct SharedSeqIter {
    seq: Arc<Sequence>,
    pos: usize,
}

impl Iterator for SharedSeqIter {
    type Item = Result<Item>;
    fn next(&mut self) -> Option<Self::Item> {
        let item = self.seq.get(self.pos)?.clone();
        self.pos += 1;
        Some(Ok(item))
    }
}

impl LocalEvaluator {
    pub(crate) fn sequential(core: Arc<EngineCore>) -> LocalEvaluator {
        LocalEvaluator { core, use_pool: false }
    }

    pub(crate) fn pooled(core: Arc<EngineCore>) -> LocalEvaluator {
        LocalEvaluator { core, use_pool: true }
    }

    pub fn eval_sequence(&self, node: &Arc<PlanNode>, ctx: &DynamicContext) -> Result<Sequence> {
        self.iter(node, ctx).collect()
    }

    /// Pull at most `n` items; the flag reports whether more were pending.
    pub fn eval_bounded(
        &self,
        node: &Arc<PlanNode>,
        ctx: &DynamicContext,
        n: usize,
    ) -> Result<(Vec<Item>, bool)> {
        let mut iter = self.iter(node, ctx);
        let mut items = Vec::with_capacity(n.min(8));
        for _ in 0..n {
            match iter.next() {
                Some(item) => items.push(item?),
                None => return Ok((items, false)),
            }
        }
        match iter.next() {
            Some(item) => {
                item?;
                Ok((items, true))
            }
            None => Ok((items, false)),
        }
    }

    /// Effective boolean value of a plan's result, looking at most at the
    /// first two items.
    pub fn ebv(&self, node: &Arc<PlanNode>, ctx: &DynamicContext) -> Result<bool> {
        let (items, _) = self.eval_bounded(node, ctx, 2)?;
        effective_boolean_value(&items).map_err(|e| e.or_span(node.span))
    }

    /// Operand of an arithmetic/comparison-style expression: at most one
    /// item.
    fn singleton_operand(
        &self,
        node: &Arc<PlanNode>,
        ctx: &DynamicContext,
        what: &str,
    ) -> Result<Option<Item>> {
        let (items, more) = self.eval_bounded(node, ctx, 1)?;
        if more {
            return Err(Error::new(
                ErrorCode::Type,
                format!("{what} must have at most one item"),
            )
            .with_span(node.span));
        }
        Ok(items.into_iter().next())
    }

    /// The local pull interface of a plan node.
    pub fn iter(&self, node: &Arc<PlanNode>, ctx: &DynamicContext) -> ItemIter {
        let span = node.span;
        let with_span = move |iter: ItemIter| -> ItemIter {
            Box::new(SpannedIter { inner: iter, span })
        };
        with_span(self.iter_inner(node, ctx))
    }

    /// Consume a child node: pull locally, or materialize a partitioned
    /// child through the pool when running in automatic mode.
    fn input_iter(&self, child: &Arc<PlanNode>, ctx: &DynamicContext) -> ItemIter {
        if self.use_pool && is_partitioned(child.mode) {
            match parallel::materialize_items(&self.core, child, ctx) {
                Ok(parts) => Box::new(parts.into_iter().flatten().map(Ok)),
                Err(e) => once_err(e),
            }
        } else {
            self.iter(child, ctx)
        }
    }

    fn iter_inner(&self, node: &Arc<PlanNode>, ctx: &DynamicContext) -> ItemIter {
        match &node.kind {
            PlanKind::Literal(item) => {
                let item = item.clone();
                Box::new(std::iter::once(Ok(item)))
            }
            PlanKind::EmptySeq => empty_iter(),
            PlanKind::VarRef(name) => match ctx.lookup(name) {
                Some(seq) => Box::new(SharedSeqIter { seq: seq.clone(), pos: 0 }),
                None => once_err(internal_error(format!("unbound variable ${name}"))),
            },
            PlanKind::ContextItem => match ctx.context_item() {
                Some(item) => Box::new(std::iter::once(Ok(item.clone()))),
                None => once_err(internal_error("context item is not bound")),
            },
            PlanKind::Concat(children) => Box::new(ConcatIter {
                eval: self.clone(),
                ctx: ctx.clone(),
                pending: children.iter().cloned().collect(),
                current: None,
            }),
            PlanKind::ObjectCtor(pairs) => result_iter(self.object_ctor(pairs, ctx)),
            PlanKind::ArrayCtor(inner) => result_iter((|| {
                let items = match inner {
                    Some(inner) => self.input_iter(inner, ctx).collect::<Result<Vec<_>>>()?,
                    None => Vec::new(),
                };
                Ok(vec![Item::array(items)])
            })()),
            PlanKind::Arith { op, lhs, rhs } => result_iter((|| {
                let (a, _) = self.eval_bounded(lhs, ctx, 2)?;
                let (b, _) = self.eval_bounded(rhs, ctx, 2)?;
                arith(*op, &a, &b)
            })()),
            PlanKind::UnaryMinus(expr) => result_iter((|| {
                let (a, _) = self.eval_bounded(expr, ctx, 2)?;
                negate(&a)
            })()),
            PlanKind::Compare { op, lhs, rhs } => result_iter((|| {
                let a = self.singleton_operand(lhs, ctx, "comparison operand")?;
                let b = self.singleton_operand(rhs, ctx, "comparison operand")?;
                match (a, b) {
                    (Some(a), Some(b)) => {
                        Ok(vec![Item::Boolean(compare_atomics(&a, &b, *op)?)])
                    }
                    _ => Ok(Vec::new()),
                }
            })()),
            PlanKind::And(lhs, rhs) => result_iter((|| {
                let value = self.ebv(lhs, ctx)? && self.ebv(rhs, ctx)?;
                Ok(vec![Item::Boolean(value)])
            })()),
            PlanKind::Or(lhs, rhs) => result_iter((|| {
                let value = self.ebv(lhs, ctx)? || self.ebv(rhs, ctx)?;
                Ok(vec![Item::Boolean(value)])
            })()),
            PlanKind::Not(expr) => result_iter((|| {
                Ok(vec![Item::Boolean(!self.ebv(expr, ctx)?)])
            })()),
            PlanKind::StringConcat(lhs, rhs) => result_iter((|| {
                let a = self.string_operand(lhs, ctx)?;
                let b = self.string_operand(rhs, ctx)?;
                Ok(vec![Item::string(format!("{a}{b}"))])
            })()),
            PlanKind::Range(lhs, rhs) => match self.range_bounds(lhs, rhs, ctx) {
                Err(e) => once_err(e),
                Ok(None) => empty_iter(),
                Ok(Some((lo, hi))) => Box::new(RangeIter { next: lo, hi }),
            },
            PlanKind::ScalarCall { func, args } => {
                result_iter(self.scalar_call(*func, args, ctx))
            }
            PlanKind::Aggregate { agg, input } => result_iter(self.aggregate(*agg, input, ctx)),
            PlanKind::JsonFile { pattern, partitions } => {
                match self.source_paths(pattern, partitions, ctx) {
                    Err(e) => once_err(e),
                    Ok(paths) => Box::new(FileLinesIter::new(
                        paths,
                        true,
                        self.core.clone(),
                    )),
                }
            }
            PlanKind::TextFile { pattern, partitions } => {
                match self.source_paths(pattern, partitions, ctx) {
                    Err(e) => once_err(e),
                    Ok(paths) => Box::new(FileLinesIter::new(
                        paths,
                        false,
                        self.core.clone(),
                    )),
                }
            }
            PlanKind::Parallelize { input, partitions } => {
                if let Err(e) = self.partition_hint(partitions, ctx) {
                    return once_err(e);
                }
                // Semantically the identity function.
                self.input_iter(input, ctx)
            }
            PlanKind::Annotate { input, schema } => {
                let io_schema = match self.resolve_schema(schema, ctx) {
                    Ok(s) => s,
                    Err(e) => return once_err(e),
                };
                let input = self.input_iter(input, ctx);
                Box::new(AnnotateIter { input, schema: io_schema, index: 0 })
            }
            PlanKind::If { cond, then, els } => match self.ebv(cond, ctx) {
                Err(e) => once_err(e),
                Ok(true) => self.input_iter(then, ctx),
                Ok(false) => self.input_iter(els, ctx),
            },
            PlanKind::Switch { input, cases, default } => {
                match self.switch_branch(input, cases, default, ctx) {
                    Err(e) => once_err(e),
                    Ok(branch) => self.input_iter(&branch, ctx),
                }
            }
            PlanKind::TypeSwitch { input, cases, default } => {
                match self.eval_sequence(input, ctx) {
                    Err(e) => once_err(e),
                    Ok(seq) => {
                        let branch = cases
                            .iter()
                            .find(|(ty, _)| instance_of(&seq, *ty))
                            .map(|(_, body)| body)
                            .unwrap_or(default);
                        self.input_iter(branch, ctx)
                    }
                }
            }
            PlanKind::TryCatch { body, catches } => {
                match self.eval_sequence(body, ctx) {
                    Ok(seq) => seq_iter(seq),
                    Err(e) if e.is_catchable() => {
                        match catches.iter().find(|(filter, _)| filter.matches(e.code)) {
                            Some((_, handler)) => self.input_iter(handler, ctx),
                            None => once_err(e),
                        }
                    }
                    Err(e) => once_err(e),
                }
            }
            PlanKind::Cast { expr, ty } => result_iter((|| {
                let (items, more) = self.eval_bounded(expr, ctx, 1)?;
                if more {
                    return Err(Error::new(
                        ErrorCode::Type,
                        "cast applies to at most one item",
                    ));
                }
                match items.into_iter().next() {
                    None => {
                        if ty.occurrence == Occurrence::Optional {
                            Ok(Vec::new())
                        } else {
                            Err(Error::new(
                                ErrorCode::Cast,
                                format!("cannot cast the empty sequence to {}", ty.item.name()),
                            ))
                        }
                    }
                    Some(item) => Ok(vec![cast_item(&item, ty.item)?]),
                }
            })()),
            PlanKind::Castable { expr, ty } => result_iter((|| {
                let (items, more) = self.eval_bounded(expr, ctx, 1)?;
                let value = if more {
                    false
                } else {
                    match items.first() {
                        None => ty.occurrence == Occurrence::Optional,
                        Some(item) => item.is_atomic() && castable(item, ty.item),
                    }
                };
                Ok(vec![Item::Boolean(value)])
            })()),
            PlanKind::InstanceOf { expr, ty } => result_iter((|| {
                let seq = self.input_iter(expr, ctx).collect::<Result<Vec<_>>>()?;
                Ok(vec![Item::Boolean(instance_of(&seq, *ty))])
            })()),
            PlanKind::Treat { expr, ty } => {
                if ty.occurrence == Occurrence::Star {
                    // Pure per-item check: stream.
                    let ty = *ty;
                    Box::new(self.input_iter(expr, ctx).map(move |item| {
                        let item = item?;
                        if crate::jdm::item_matches(&item, ty.item) {
                            Ok(item)
                        } else {
                            Err(Error::new(
                                ErrorCode::Treat,
                                format!(
                                    "item of type {} does not match {ty}",
                                    item.type_name()
                                ),
                            ))
                        }
                    }))
                } else {
                    result_iter((|| {
                        let seq = self.input_iter(expr, ctx).collect::<Result<Vec<_>>>()?;
                        treat(seq, *ty)
                    })())
                }
            }
            PlanKind::Some { var, source, pred } => result_iter((|| {
                let mut found = false;
                let mut items = self.input_iter(source, ctx);
                while let Some(item) = items.next() {
                    let item = item?;
                    let bound = ctx.bind(var.clone(), Arc::new(vec![item]));
                    if self.ebv(pred, &bound)? {
                        found = true;
                        break;
                    }
                }
                Ok(vec![Item::Boolean(found)])
            })()),
            PlanKind::Predicate { input, pred } => {
                // Fast path for a literal positional predicate like [1].
                if let PlanKind::Literal(Item::Integer(n)) = &pred.kind {
                    return Box::new(NthIter {
                        input: self.input_iter(input, ctx),
                        remaining: n.to_u64(),
                    });
                }
                Box::new(PredicateIter {
                    eval: self.clone(),
                    base: ctx.clone(),
                    input: self.input_iter(input, ctx),
                    pred: pred.clone(),
                    pos: 0,
                })
            }
            PlanKind::ArrayUnbox(input) => {
                Box::new(self.input_iter(input, ctx).flat_map(|item| -> ItemIter {
                    match item {
                        Err(e) => once_err(e),
                        Ok(Item::Array(values)) => {
                            Box::new(SharedSeqIter { seq: values, pos: 0 })
                        }
                        Ok(_) => empty_iter(),
                    }
                }))
            }
            PlanKind::ArrayAccess { input, index } => {
                let index = match self.array_index(index, ctx) {
                    Err(e) => return once_err(e),
                    Ok(None) => return empty_iter(),
                    Ok(Some(i)) => i,
                };
                Box::new(self.input_iter(input, ctx).filter_map(move |item| match item {
                    Err(e) => Some(Err(e)),
                    Ok(Item::Array(values)) => {
                        let i = index.to_usize()?;
                        if i >= 1 && i <= values.len() {
                            Some(Ok(values[i - 1].clone()))
                        } else {
                            None
                        }
                    }
                    Ok(_) => None,
                }))
            }
            PlanKind::ObjectLookup { input, key } => {
                let key = match self.resolve_plan_key(key, ctx) {
                    Err(e) => return once_err(e),
                    Ok(None) => return empty_iter(),
                    Ok(Some(k)) => k,
                };
                Box::new(self.input_iter(input, ctx).filter_map(move |item| match item {
                    Err(e) => Some(Err(e)),
                    Ok(Item::Object(obj)) => obj.get(&key).cloned().map(Ok),
                    Ok(_) => None,
                }))
            }
            PlanKind::SimpleMap { input, mapper } => Box::new(SimpleMapIter {
                eval: self.clone(),
                base: ctx.clone(),
                input: self.input_iter(input, ctx),
                mapper: mapper.clone(),
                current: None,
            }),
            PlanKind::Flwor(flwor) => {
                if self.use_pool && node.mode == ExecutionMode::Partitioned {
                    match parallel::materialize_items(&self.core, node, ctx) {
                        Ok(parts) => Box::new(parts.into_iter().flatten().map(Ok)),
                        Err(e) => once_err(e),
                    }
                } else {
                    self.flwor_iter(flwor, ctx)
                }
            }
        }
    }

    fn string_operand(&self, node: &Arc<PlanNode>, ctx: &DynamicContext) -> Result<String> {
        match self.singleton_operand(node, ctx, "string concatenation operand")? {
            None => Ok(String::new()),
            Some(item) => atomic_to_string(&item).map_err(|e| e.or_span(node.span)),
        }
    }

    fn range_bounds(
        &self,
        lhs: &Arc<PlanNode>,
        rhs: &Arc<PlanNode>,
        ctx: &DynamicContext,
    ) -> Result<Option<(BigInt, BigInt)>> {
        let bound = |node: &Arc<PlanNode>| -> Result<Option<BigInt>> {
            match self.singleton_operand(node, ctx, "range operand")? {
                None => Ok(None),
                Some(Item::Integer(i)) => Ok(Some((*i).clone())),
                Some(other) => Err(Error::new(
                    ErrorCode::Type,
                    format!("range bounds must be integers, got {}", other.type_name()),
                )
                .with_span(node.span)),
            }
        };
        match (bound(lhs)?, bound(rhs)?) {
            (Some(lo), Some(hi)) => Ok(Some((lo, hi))),
            _ => Ok(None),
        }
    }

    fn object_ctor(
        &self,
        pairs: &[(PlanKey, Arc<PlanNode>)],
        ctx: &DynamicContext,
    ) -> Result<Sequence> {
        let mut object = crate::jdm::Object::with_capacity(pairs.len());
        for (key, value_plan) in pairs {
            let key = self.resolve_plan_key(key, ctx)?.ok_or_else(|| {
                Error::new(ErrorCode::Type, "object key must be a single atomic value")
            })?;
            let mut values = self.input_iter(value_plan, ctx);
            let value = match values.next().transpose()? {
                None => Item::Null,
                Some(first) => {
                    if values.next().transpose()?.is_some() {
                        return Err(Error::new(
                            ErrorCode::Type,
                            format!("value of object key \"{key}\" has more than one item"),
                        )
                        .with_span(value_plan.span));
                    }
                    first
                }
            };
            object.insert(key, value)?;
        }
        Ok(vec![Item::object(object)])
    }

    /// Resolve an object key: literal, or a computed expression yielding at
    /// most one atomic item (empty means "no key", which makes lookups
    /// yield nothing).
    pub(crate) fn resolve_plan_key(
        &self,
        key: &PlanKey,
        ctx: &DynamicContext,
    ) -> Result<Option<Arc<str>>> {
        match key {
            PlanKey::Literal(k) => Ok(Some(k.clone())),
            PlanKey::Computed(plan) => {
                match self.singleton_operand(plan, ctx, "lookup key")? {
                    None => Ok(None),
                    Some(item) => {
                        let s = atomic_to_string(&item).map_err(|e| e.or_span(plan.span))?;
                        Ok(Some(Arc::from(s)))
                    }
                }
            }
        }
    }

    pub(crate) fn switch_branch(
        &self,
        input: &Arc<PlanNode>,
        cases: &[(Arc<PlanNode>, Arc<PlanNode>)],
        default: &Arc<PlanNode>,
        ctx: &DynamicContext,
    ) -> Result<Arc<PlanNode>> {
        let operand = self.switch_operand(input, ctx)?;
        for (case, body) in cases {
            let case_value = self.switch_operand(case, ctx)?;
            let matched = match (&operand, &case_value) {
                (None, None) => true,
                (Some(a), Some(b)) => {
                    matches!(compare_atomics(a, b, CmpOp::Eq), Ok(true))
                }
                _ => false,
            };
            if matched {
                return Ok(body.clone());
            }
        }
        Ok(default.clone())
    }

    fn switch_operand(
        &self,
        node: &Arc<PlanNode>,
        ctx: &DynamicContext,
    ) -> Result<Option<Item>> {
        match self.singleton_operand(node, ctx, "switch operand")? {
            Some(item) if !item.is_atomic() => Err(Error::new(
                ErrorCode::Type,
                format!("switch operand must be atomic, got {}", item.type_name()),
            )
            .with_span(node.span)),
            other => Ok(other),
        }
    }

    // -- aggregates ----------------------------------------------------------

    fn aggregate(
        &self,
        agg: AggKind,
        input: &Arc<PlanNode>,
        ctx: &DynamicContext,
    ) -> Result<Sequence> {
        if self.use_pool && is_partitioned(input.mode) {
            return parallel::fold_aggregate(&self.core, agg, input, ctx);
        }
        let items = self.iter(input, ctx);
        fold_aggregate_iter(agg, items)
    }

    // -- sources ---------------------------------------------------------------

    fn source_paths(
        &self,
        pattern: &Arc<PlanNode>,
        partitions: &Option<Arc<PlanNode>>,
        ctx: &DynamicContext,
    ) -> Result<Vec<PathBuf>> {
        self.partition_hint(partitions, ctx)?;
        self.source_paths_for(pattern, ctx)
    }

    /// Resolve a source's file pattern argument and expand the glob.
    pub(crate) fn source_paths_for(
        &self,
        pattern: &Arc<PlanNode>,
        ctx: &DynamicContext,
    ) -> Result<Vec<PathBuf>> {
        let pattern = match self.singleton_operand(pattern, ctx, "file pattern")? {
            Some(Item::String(s)) => s,
            other => {
                return Err(Error::new(
                    ErrorCode::Type,
                    format!(
                        "file pattern must be a string, got {}",
                        other.map(|i| i.type_name()).unwrap_or("empty sequence")
                    ),
                ))
            }
        };
        io::glob_files(&pattern)
    }

    /// Resolve an array-access index: `None` when the index expression is
    /// empty (which makes every access yield nothing).
    pub(crate) fn array_index(
        &self,
        index: &Arc<PlanNode>,
        ctx: &DynamicContext,
    ) -> Result<Option<BigInt>> {
        match self.singleton_operand(index, ctx, "array index")? {
            None => Ok(None),
            Some(item) => match item.integral_value() {
                Some(i) => Ok(Some(i)),
                None => Err(Error::new(
                    ErrorCode::Type,
                    format!("array index must be an integer, got {}", item.type_name()),
                )
                .with_span(index.span)),
            },
        }
    }

    /// Validate an optional partition-count argument; the value itself only
    /// matters for partitioned execution.
    pub(crate) fn partition_hint(
        &self,
        partitions: &Option<Arc<PlanNode>>,
        ctx: &DynamicContext,
    ) -> Result<usize> {
        let Some(plan) = partitions else {
            return Ok(self.core.config.default_partitions);
        };
        let item = self.singleton_operand(plan, ctx, "partition count")?;
        let value = item
            .as_ref()
            .and_then(Item::integral_value)
            .and_then(|i| i.to_usize())
            .ok_or_else(|| {
                Error::new(ErrorCode::InvalidArgument, "partition count must be an integer")
                    .with_span(plan.span)
            })?;
        if value < 1 {
            return Err(Error::new(
                ErrorCode::InvalidArgument,
                "partition count must be at least 1",
            )
            .with_span(plan.span));
        }
        Ok(value)
    }

    pub(crate) fn resolve_schema(
        &self,
        schema: &Arc<PlanNode>,
        ctx: &DynamicContext,
    ) -> Result<Arc<io::schema::ObjectSchema>> {
        let item = self
            .singleton_operand(schema, ctx, "schema")?
            .ok_or_else(|| {
                Error::new(ErrorCode::InvalidArgument, "annotate() schema must be an object")
                    .with_span(schema.span)
            })?;
        let parsed = IoSchema::from_item(&item).map_err(|e| e.or_span(schema.span))?;
        match parsed {
            IoSchema::Object(obj) => Ok(Arc::new(obj)),
            _ => Err(Error::new(
                ErrorCode::InvalidArgument,
                "annotate() requires an object schema at the top level",
            )
            .with_span(schema.span)),
        }
    }

    // -- scalar built-ins -------------------------------------------------------

    fn scalar_call(
        &self,
        func: ScalarFn,
        args: &[Arc<PlanNode>],
        ctx: &DynamicContext,
    ) -> Result<Sequence> {
        let string_arg = |node: &Arc<PlanNode>| -> Result<String> {
            match self.singleton_operand(node, ctx, "string argument")? {
                None => Ok(String::new()),
                Some(Item::String(s)) => Ok(s.to_string()),
                Some(other) => Err(Error::new(
                    ErrorCode::Type,
                    format!("expected a string argument, got {}", other.type_name()),
                )
                .with_span(node.span)),
            }
        };
        let numeric_arg = |node: &Arc<PlanNode>| -> Result<Option<Item>> {
            match self.singleton_operand(node, ctx, "numeric argument")? {
                None => Ok(None),
                Some(item) if item.is_numeric() => Ok(Some(item)),
                Some(other) => Err(Error::new(
                    ErrorCode::Type,
                    format!("expected a numeric argument, got {}", other.type_name()),
                )
                .with_span(node.span)),
            }
        };
        match func {
            ScalarFn::Boolean => Ok(vec![Item::Boolean(self.ebv(&args[0], ctx)?)]),
            ScalarFn::Not => Ok(vec![Item::Boolean(!self.ebv(&args[0], ctx)?)]),
            ScalarFn::String => {
                match self.singleton_operand(&args[0], ctx, "string() argument")? {
                    None => Ok(vec![Item::string("")]),
                    Some(item) => Ok(vec![Item::string(
                        atomic_to_string(&item).map_err(|e| e.or_span(args[0].span))?,
                    )]),
                }
            }
            ScalarFn::Concat => {
                let mut out = String::new();
                for arg in args {
                    if let Some(item) = self.singleton_operand(arg, ctx, "concat() argument")? {
                        out.push_str(&atomic_to_string(&item).map_err(|e| e.or_span(arg.span))?);
                    }
                }
                Ok(vec![Item::string(out)])
            }
            ScalarFn::Substring => {
                let s = string_arg(&args[0])?;
                let start = match numeric_arg(&args[1])? {
                    None => return Ok(vec![Item::string("")]),
                    Some(item) => crate::jdm::arith_items(
                        crate::jdm::ArithOp::Add,
                        &item,
                        &Item::Double(0.0),
                    )?,
                };
                let start = match start {
                    Item::Double(d) => d,
                    _ => unreachable!("promoted to double"),
                };
                let len = match args.get(2) {
                    None => None,
                    Some(arg) => match numeric_arg(arg)? {
                        None => return Ok(vec![Item::string("")]),
                        Some(item) => {
                            match crate::jdm::arith_items(
                                crate::jdm::ArithOp::Add,
                                &item,
                                &Item::Double(0.0),
                            )? {
                                Item::Double(d) => Some(d),
                                _ => unreachable!(),
                            }
                        }
                    },
                };
                let start_r = round_half_up(start);
                let end_r = len.map(|l| start_r + round_half_up(l));
                let out: String = s
                    .chars()
                    .enumerate()
                    .filter(|(i, _)| {
                        let p = (*i + 1) as f64;
                        p >= start_r && end_r.map_or(true, |e| p < e)
                    })
                    .map(|(_, c)| c)
                    .collect();
                Ok(vec![Item::string(out)])
            }
            ScalarFn::StringLength => {
                let s = string_arg(&args[0])?;
                Ok(vec![Item::integer(s.chars().count() as i64)])
            }
            ScalarFn::Contains => {
                let a = string_arg(&args[0])?;
                let b = string_arg(&args[1])?;
                Ok(vec![Item::Boolean(a.contains(&b))])
            }
            ScalarFn::StartsWith => {
                let a = string_arg(&args[0])?;
                let b = string_arg(&args[1])?;
                Ok(vec![Item::Boolean(a.starts_with(&b))])
            }
            ScalarFn::LowerCase => Ok(vec![Item::string(string_arg(&args[0])?.to_lowercase())]),
            ScalarFn::UpperCase => Ok(vec![Item::string(string_arg(&args[0])?.to_uppercase())]),
            ScalarFn::Size => {
                match self.singleton_operand(&args[0], ctx, "size() argument")? {
                    None => Ok(Vec::new()),
                    Some(Item::Array(values)) => Ok(vec![Item::integer(values.len() as i64)]),
                    Some(other) => Err(Error::new(
                        ErrorCode::Type,
                        format!("size() requires an array, got {}", other.type_name()),
                    )
                    .with_span(args[0].span)),
                }
            }
            ScalarFn::Keys => {
                let mut out: Sequence = Vec::new();
                let mut push_unique = |item: Item| {
                    if !out.contains(&item) {
                        out.push(item);
                    }
                };
                let mut items = self.input_iter(&args[0], ctx);
                while let Some(item) = items.next() {
                    match item? {
                        Item::Object(obj) => {
                            for key in obj.keys() {
                                push_unique(Item::String(key.clone()));
                            }
                        }
                        Item::Array(values) => {
                            for i in 1..=values.len() {
                                push_unique(Item::integer(i as i64));
                            }
                        }
                        _ => {}
                    }
                }
                Ok(out)
            }
            ScalarFn::Values => {
                let mut out = Vec::new();
                let mut items = self.input_iter(&args[0], ctx);
                while let Some(item) = items.next() {
                    match item? {
                        Item::Object(obj) => out.extend(obj.values().cloned()),
                        Item::Array(values) => out.extend(values.iter().cloned()),
                        _ => {}
                    }
                }
                Ok(out)
            }
            ScalarFn::Abs => match numeric_arg(&args[0])? {
                None => Ok(Vec::new()),
                Some(Item::Integer(i)) => {
                    Ok(vec![Item::integer(num_traits::Signed::abs(&*i))])
                }
                Some(Item::Decimal(d)) => Ok(vec![Item::decimal(d.abs())]),
                Some(Item::Double(d)) => Ok(vec![Item::Double(d.abs())]),
                Some(_) => unreachable!("numeric_arg filters"),
            },
            ScalarFn::Round => match numeric_arg(&args[0])? {
                None => Ok(Vec::new()),
                Some(item @ Item::Integer(_)) => Ok(vec![item]),
                Some(Item::Decimal(d)) => {
                    // Round halves toward positive infinity: floor(x + 0.5).
                    let shifted = (*d).clone() + bigdecimal::BigDecimal::from_str("0.5").unwrap();
                    Ok(vec![Item::decimal(
                        shifted.with_scale_round(0, bigdecimal::RoundingMode::Floor),
                    )])
                }
                Some(Item::Double(d)) => Ok(vec![Item::Double((d + 0.5).floor())]),
                Some(_) => unreachable!(),
            },
        }
    }

    // -- FLWOR -------------------------------------------------------------------

    fn flwor_iter(&self, flwor: &FlworPlan, ctx: &DynamicContext) -> ItemIter {
        let mut rows: RowIter = Box::new(std::iter::once(Ok(Vec::new())));
        let mut schema: Schema = Arc::new(Vec::new());
        for clause in &flwor.clauses {
            rows = match self.clause_iter(clause, schema.clone(), rows, ctx) {
                Ok(rows) => rows,
                Err(e) => return once_err(e),
            };
            schema = clause.out_columns.clone();
        }
        Box::new(ReturnIter {
            eval: self.clone(),
            base: ctx.clone(),
            schema,
            expr: flwor.return_expr.clone(),
            rows,
            current: None,
        })
    }

    pub(crate) fn clause_iter(
        &self,
        clause: &ClausePlan,
        in_schema: Schema,
        input: RowIter,
        ctx: &DynamicContext,
    ) -> Result<RowIter> {
        match &clause.op {
            ClauseOp::For { var, expr, initial, independent } => Ok(Box::new(ForIter {
                eval: self.clone(),
                base: ctx.clone(),
                replace: in_schema.iter().position(|c| c == var),
                in_schema,
                expr: expr.clone(),
                memoize: *independent && !*initial,
                memo: None,
                input,
                current: None,
            })),
            ClauseOp::Let { var, expr, independent } => {
                let eval = self.clone();
                let base = ctx.clone();
                let replace = in_schema.iter().position(|c| c == var);
                let expr = expr.clone();
                let memoize = *independent;
                let mut memo: Option<Arc<Sequence>> = None;
                Ok(Box::new(input.map(move |row| {
                    let row = row?;
                    let value = if memoize {
                        match &memo {
                            Some(v) => v.clone(),
                            None => {
                                let v = Arc::new(eval.eval_sequence(&expr, &base)?);
                                memo = Some(v.clone());
                                v
                            }
                        }
                    } else {
                        let row_ctx = row_context(&base, &in_schema, &row);
                        Arc::new(eval.eval_sequence(&expr, &row_ctx)?)
                    };
                    Ok(rebind_row(&row, replace, value))
                })))
            }
            ClauseOp::Where(pred) => {
                let eval = self.clone();
                let base = ctx.clone();
                let pred = pred.clone();
                Ok(Box::new(input.filter_map(move |row| match row {
                    Err(e) => Some(Err(e)),
                    Ok(row) => {
                        let row_ctx = row_context(&base, &in_schema, &row);
                        match eval.ebv(&pred, &row_ctx) {
                            Err(e) => Some(Err(e)),
                            Ok(true) => Some(Ok(row)),
                            Ok(false) => None,
                        }
                    }
                })))
            }
            ClauseOp::GroupBy { keys, nongroup } => {
                let mut table =
                    GroupTable::new(&in_schema, keys, nongroup, self.core.config.null_order)?;
                for row in input {
                    table.add_row(&row?).map_err(|e| e.or_span(clause.span))?;
                }
                Ok(Box::new(table.finish().into_iter().map(Ok)))
            }
            ClauseOp::OrderBy { specs, drop } => {
                let idx = specs
                    .iter()
                    .map(|s| column_index(&in_schema, &s.var))
                    .collect::<Result<Vec<_>>>()?;
                let rows = input.collect::<Result<Vec<_>>>()?;
                check_order_types(rows.iter(), specs, &idx)
                    .map_err(|e| e.or_span(clause.span))?;
                let mut keyed = rows
                    .into_iter()
                    .map(|row| Ok((order_key(&row, specs, &idx)?, row)))
                    .collect::<Result<Vec<_>>>()?;
                let specs = specs.clone();
                keyed.sort_by(|(a, _), (b, _)| compare_order_keys(a, b, &specs));
                let drop_idx: Vec<usize> = in_schema
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| drop.contains(c))
                    .map(|(i, _)| i)
                    .collect();
                Ok(Box::new(keyed.into_iter().map(move |(_, row)| {
                    Ok(strip_columns(&row, &drop_idx))
                })))
            }
            ClauseOp::Count(var) => {
                let replace = in_schema.iter().position(|c| c == var);
                let mut n: u64 = 0;
                Ok(Box::new(input.map(move |row| {
                    let row = row?;
                    n += 1;
                    Ok(rebind_row(&row, replace, Arc::new(vec![Item::integer(n)])))
                })))
            }
        }
    }
}

pub(crate) fn strip_columns(row: &Row, drop_idx: &[usize]) -> Row {
    row.iter()
        .enumerate()
        .filter(|(i, _)| !drop_idx.contains(i))
        .map(|(_, cell)| cell.clone())
        .collect()
}

/// XQuery-style rounding for substring arithmetic: round halves up.
fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Streaming aggregate fold over an item iterator.
pub(crate) fn fold_aggregate_iter(agg: AggKind, mut items: ItemIter) -> Result<Sequence> {
    match agg {
        AggKind::Count => {
            let mut n: u64 = 0;
            while let Some(item) = items.next() {
                item?;
                n += 1;
            }
            Ok(vec![Item::integer(n)])
        }
        AggKind::Sum | AggKind::Avg => {
            let mut acc = SumAccumulator::new();
            while let Some(item) = items.next() {
                acc.add(&item?, agg.name())?;
            }
            Ok(match agg {
                AggKind::Sum => vec![acc.finish_sum()],
                _ => acc.finish_avg().into_iter().collect(),
            })
        }
        AggKind::Min | AggKind::Max => {
            let op = if agg == AggKind::Min { CmpOp::Lt } else { CmpOp::Gt };
            let mut best: Option<Item> = None;
            while let Some(item) = items.next() {
                crate::exec::relational::fold_min_max(&mut best, &item?, op)?;
            }
            Ok(best.into_iter().collect())
        }
    }
}

// ---------------------------------------------------------------------------
// Iterator state machines
// ---------------------------------------------------------------------------

/// Attaches the node's source span to errors flowing out of it.
struct SpannedIter {
    inner: ItemIter,
    span: Span,
}

impl Iterator for SpannedIter {
    type Item = Result<Item>;
    fn next(&mut self) -> Option<Self::Item> {
        match self.inner.next() {
            Some(Err(e)) => Some(Err(e.or_span(self.span))),
            other => other,
        }
    }
}

struct ConcatIter {
    eval: LocalEvaluator,
    ctx: DynamicContext,
    pending: VecDeque<Arc<PlanNode>>,
    current: Option<ItemIter>,
}

impl Iterator for ConcatIter {
    type Item = Result<Item>;
    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(iter) = &mut self.current {
                if let Some(item) = iter.next() {
                    return Some(item);
                }
                self.current = None;
            }
            let next_plan = self.pending.pop_front()?;
            self.current = Some(self.eval.input_iter(&next_plan, &self.ctx));
        }
    }
}

struct RangeIter {
    next: BigInt,
    hi: BigInt,
}

impl Iterator for RangeIter {
    type Item = Result<Item>;
    fn next(&mut self) -> Option<Self::Item> {
        if self.next > self.hi {
            return None;
        }
        let value = self.next.clone();
        self.next += 1;
        Some(Ok(Item::integer(value)))
    }
}

struct NthIter {
    input: ItemIter,
    remaining: Option<u64>,
}

impl Iterator for NthIter {
    type Item = Result<Item>;
    fn next(&mut self) -> Option<Self::Item> {
        let mut n = self.remaining?;
        if n == 0 {
            return None; // positions are 1-based; [0] selects nothing
        }
        loop {
            match self.input.next()? {
                Err(e) => return Some(Err(e)),
                Ok(item) => {
                    n -= 1;
                    if n == 0 {
                        self.remaining = None;
                        return Some(Ok(item));
                    }
                }
            }
        }
    }
}

struct PredicateIter {
    eval: LocalEvaluator,
    base: DynamicContext,
    input: ItemIter,
    pred: Arc<PlanNode>,
    pos: u64,
}

impl PredicateIter {
    fn keep(&self, item: &Item, pos: u64) -> Result<bool> {
        let ctx = self.base.with_context_item(item.clone());
        let (values, more) = self.eval.eval_bounded(&self.pred, &ctx, 2)?;
        predicate_keeps(&values, more, pos)
    }
}

/// Positional-or-boolean predicate decision: a singleton numeric result
/// keeps the item iff it equals the 1-based position, anything else goes
/// through the effective boolean value.
pub(crate) fn predicate_keeps(values: &[Item], more: bool, pos: u64) -> Result<bool> {
    if !more && values.len() == 1 && values[0].is_numeric() {
        return compare_atomics(&values[0], &Item::integer(pos), CmpOp::Eq);
    }
    effective_boolean_value(values)
}

impl Iterator for PredicateIter {
    type Item = Result<Item>;
    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.input.next()? {
                Err(e) => return Some(Err(e)),
                Ok(item) => {
                    self.pos += 1;
                    match self.keep(&item, self.pos) {
                        Err(e) => return Some(Err(e)),
                        Ok(true) => return Some(Ok(item)),
                        Ok(false) => {}
                    }
                }
            }
        }
    }
}

struct SimpleMapIter {
    eval: LocalEvaluator,
    base: DynamicContext,
    input: ItemIter,
    mapper: Arc<PlanNode>,
    current: Option<ItemIter>,
}

impl Iterator for SimpleMapIter {
    type Item = Result<Item>;
    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(iter) = &mut self.current {
                if let Some(item) = iter.next() {
                    return Some(item);
                }
                self.current = None;
            }
            match self.input.next()? {
                Err(e) => return Some(Err(e)),
                Ok(item) => {
                    let ctx = self.base.with_context_item(item);
                    self.current = Some(self.eval.iter(&self.mapper, &ctx));
                }
            }
        }
    }
}

struct AnnotateIter {
    input: ItemIter,
    schema: Arc<io::schema::ObjectSchema>,
    index: usize,
}

impl Iterator for AnnotateIter {
    type Item = Result<Item>;
    fn next(&mut self) -> Option<Self::Item> {
        match self.input.next()? {
            Err(e) => Some(Err(e)),
            Ok(item) => {
                let result = io::schema::annotate_object(&item, &self.schema, self.index)
                    .map(|cells| io::schema::row_to_object(&cells, &self.schema));
                self.index += 1;
                Some(result)
            }
        }
    }
}

enum BindSource {
    Stream(ItemIter),
    Shared(Arc<Sequence>, usize),
}

impl BindSource {
    fn next(&mut self) -> Option<Result<Item>> {
        match self {
            BindSource::Stream(iter) => iter.next(),
            BindSource::Shared(seq, pos) => {
                let item = seq.get(*pos)?.clone();
                *pos += 1;
                Some(Ok(item))
            }
        }
    }
}

struct ForIter {
    eval: LocalEvaluator,
    base: DynamicContext,
    in_schema: Schema,
    expr: Arc<PlanNode>,
    replace: Option<usize>,
    memoize: bool,
    memo: Option<Arc<Sequence>>,
    input: RowIter,
    current: Option<(Row, BindSource)>,
}

impl Iterator for ForIter {
    type Item = Result<Row>;
    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some((row, source)) = &mut self.current {
                match source.next() {
                    Some(Err(e)) => return Some(Err(e)),
                    Some(Ok(item)) => {
                        let out = rebind_row(row, self.replace, Arc::new(vec![item]));
                        return Some(Ok(out));
                    }
                    None => self.current = None,
                }
            }
            match self.input.next()? {
                Err(e) => return Some(Err(e)),
                Ok(row) => {
                    let source = if self.memoize {
                        let memo = match &self.memo {
                            Some(m) => m.clone(),
                            None => match self.eval.eval_sequence(&self.expr, &self.base) {
                                Ok(seq) => {
                                    let m = Arc::new(seq);
                                    self.memo = Some(m.clone());
                                    m
                                }
                                Err(e) => return Some(Err(e)),
                            },
                        };
                        BindSource::Shared(memo, 0)
                    } else {
                        let ctx = row_context(&self.base, &self.in_schema, &row);
                        BindSource::Stream(self.eval.iter(&self.expr, &ctx))
                    };
                    self.current = Some((row, source));
                }
            }
        }
    }
}

struct ReturnIter {
    eval: LocalEvaluator,
    base: DynamicContext,
    schema: Schema,
    expr: Arc<PlanNode>,
    rows: RowIter,
    current: Option<ItemIter>,
}

impl Iterator for ReturnIter {
    type Item = Result<Item>;
    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(iter) = &mut self.current {
                if let Some(item) = iter.next() {
                    return Some(item);
                }
                self.current = None;
            }
            match self.rows.next()? {
                Err(e) => return Some(Err(e)),
                Ok(row) => {
                    let ctx = row_context(&self.base, &self.schema, &row);
                    self.current = Some(self.eval.iter(&self.expr, &ctx));
                }
            }
        }
    }
}

/// Lines of a list of files read sequentially, parsed as JSON items or
/// passed through as strings.
struct FileLinesIter {
    paths: VecDeque<PathBuf>,
    current: Option<io::SplitLines>,
    parse_json: bool,
    core: Arc<EngineCore>,
}

impl FileLinesIter {
    fn new(paths: Vec<PathBuf>, parse_json: bool, core: Arc<EngineCore>) -> FileLinesIter {
        FileLinesIter { paths: paths.into(), current: None, parse_json, core }
    }
}

impl Iterator for FileLinesIter {
    type Item = Result<Item>;
    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(lines) = &mut self.current {
                match lines.next() {
                    Some(Err(e)) => return Some(Err(e)),
                    Some(Ok((offset, line))) => {
                        match line_to_item(
                            &line,
                            offset,
                            lines.path(),
                            self.parse_json,
                            &self.core,
                        ) {
                            Ok(Some(item)) => return Some(Ok(item)),
                            Ok(None) => continue,
                            Err(e) => return Some(Err(e)),
                        }
                    }
                    None => self.current = None,
                }
            }
            let path = self.paths.pop_front()?;
            let size = match std::fs::metadata(&path) {
                Ok(m) => m.len(),
                Err(e) => {
                    return Some(Err(Error::new(
                        ErrorCode::Io,
                        format!("{}: {}", path.display(), e),
                    )))
                }
            };
            if size == 0 {
                continue;
            }
            let split = io::FileSplit { path, start: 0, end: size };
            match io::SplitLines::open(&split, Some(&self.core.stats)) {
                Ok(lines) => self.current = Some(lines),
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Shared line → item conversion honoring the malformed-line policy.
/// `Ok(None)` means the line was skipped (blank, or bad under `Skip`).
pub(crate) fn line_to_item(
    line: &str,
    offset: u64,
    path: &std::path::Path,
    parse_json: bool,
    core: &EngineCore,
) -> Result<Option<Item>> {
    if !parse_json {
        return Ok(Some(Item::string(line)));
    }
    if line.trim().is_empty() {
        return Ok(None);
    }
    match crate::parser::parse_json_line(line) {
        Ok(item) => Ok(Some(item)),
        Err(e) => match core.config.on_bad_line {
            OnBadLine::Skip => {
                core.stats.lines_skipped.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                Ok(None)
            }
            OnBadLine::Fail => Err(Error::new(
                ErrorCode::JsonParse,
                format!(
                    "{}:{}: {}",
                    path.display(),
                    io::line_number_at(path, offset),
                    e.message
                ),
            )),
        },
    }
}

// ---------------------------------------------------------------------------
// LocalCursor: the pull protocol
// ---------------------------------------------------------------------------

/// Volcano-style cursor over a plan: `open → (has_next/next)* → close`,
/// with `reset` allowed while open to re-run the plan under a new dynamic
/// context. This is how closure plans are driven inside parallel
/// operators: one cursor instance per worker, reset per tuple.
pub struct LocalCursor {
    eval: LocalEvaluator,
    plan: Arc<PlanNode>,
    state: CursorState,
}

enum CursorState {
    Closed,
    Open(std::iter::Peekable<ItemIter>),
}

impl LocalCursor {
    pub(crate) fn new(eval: LocalEvaluator, plan: Arc<PlanNode>) -> LocalCursor {
        LocalCursor { eval, plan, state: CursorState::Closed }
    }

    /// Open the cursor, binding the dynamic context.
    pub fn open(&mut self, ctx: &DynamicContext) -> Result<()> {
        match self.state {
            CursorState::Closed => {
                self.state = CursorState::Open(self.eval.iter(&self.plan, ctx).peekable());
                Ok(())
            }
            CursorState::Open(_) => Err(internal_error("open() on an already open cursor")),
        }
    }

    /// Re-run the plan under a new dynamic context; the cursor must be
    /// open.
    pub fn reset(&mut self, ctx: &DynamicContext) -> Result<()> {
        match self.state {
            CursorState::Open(_) => {
                self.state = CursorState::Open(self.eval.iter(&self.plan, ctx).peekable());
                Ok(())
            }
            CursorState::Closed => Err(internal_error("reset() on a closed cursor")),
        }
    }

    pub fn has_next(&mut self) -> Result<bool> {
        match &mut self.state {
            CursorState::Open(iter) => Ok(iter.peek().is_some()),
            CursorState::Closed => Err(internal_error("has_next() on a closed cursor")),
        }
    }

    /// The next item; calling past exhaustion is a protocol error.
    pub fn next(&mut self) -> Result<Item> {
        match &mut self.state {
            CursorState::Open(iter) => match iter.next() {
                Some(item) => item,
                None => Err(internal_error("next() past the end of the cursor")),
            },
            CursorState::Closed => Err(internal_error("next() on a closed cursor")),
        }
    }

    pub fn close(&mut self) {
        self.state = CursorState::Closed;
    }

    /// Drain all remaining items.
    pub fn drain(&mut self) -> Result<Sequence> {
        let mut out = Vec::new();
        while self.has_next()? {
            out.push(self.next()?);
        }
        Ok(out)
    }

    /// Pull at most `n` items, reporting whether more remain.
    pub fn take_up_to(&mut self, n: usize) -> Result<(Vec<Item>, bool)> {
        let mut out = Vec::with_capacity(n.min(8));
        while out.len() < n {
            if !self.has_next()? {
                return Ok((out, false));
            }
            out.push(self.next()?);
        }
        Ok((out, self.has_next()?))
    }
}
