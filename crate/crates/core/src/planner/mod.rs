//! AST → physical plan: iterator selection, execution-mode assignment, and
//! the aggregate-pushdown rewrite.

mod plan;
mod rewrite;

pub use plan::{
    AggKind, ClauseOp, ClausePlan, ExecutionMode, FlworPlan, GroupAction, NonGroupSpec,
    OrderKeySpec, PlanKey, PlanKind, PlanNode, ScalarFn,
};
pub use rewrite::rewrite_aggregate_pushdown;

use std::collections::HashSet;
use std::sync::Arc;

use crate::error::{Error, ErrorCode, Result, Span};
use crate::jdm::Occurrence;
use crate::parser::{self, Ast, AstKind, Clause, ClauseKind, KeyExpr};

/// A parsed, translated, mode-assigned, rewritten query.
#[derive(Debug, Clone)]
pub struct CompiledQuery {
    pub plan: Arc<PlanNode>,
}

impl CompiledQuery {
    pub fn render_plan(&self) -> String {
        self.plan.render()
    }
}

/// Full compilation pipeline.
pub fn compile(text: &str, aggregate_pushdown: bool) -> Result<CompiledQuery> {
    let ast = parser::parse_query(text)?;
    let mut plan = translate(&ast)?;
    assign_modes(&mut plan);
    if aggregate_pushdown {
        plan = rewrite_aggregate_pushdown(&plan);
    }
    Ok(CompiledQuery { plan })
}

/// Translate the AST into a plan tree. Modes start out `Local`;
/// [`assign_modes`] fills them in bottom-up.
pub fn translate(ast: &Ast) -> Result<Arc<PlanNode>> {
    let mut translator = Translator { hidden: 0 };
    translator.expr(ast)
}

struct Translator {
    hidden: u32,
}

impl Translator {
    fn gensym(&mut self, prefix: &str) -> Arc<str> {
        self.hidden += 1;
        Arc::from(format!("#{prefix}{}", self.hidden))
    }

    fn node(&self, kind: PlanKind, span: Span) -> Arc<PlanNode> {
        Arc::new(PlanNode { kind, mode: ExecutionMode::Local, span })
    }

    fn expr(&mut self, ast: &Ast) -> Result<Arc<PlanNode>> {
        let span = ast.span;
        let kind = match &ast.kind {
            AstKind::Literal(item) => PlanKind::Literal(item.clone()),
            AstKind::EmptySequence => PlanKind::EmptySeq,
            AstKind::Concat(items) => {
                PlanKind::Concat(items.iter().map(|a| self.expr(a)).collect::<Result<_>>()?)
            }
            AstKind::ObjectCtor(pairs) => PlanKind::ObjectCtor(
                pairs
                    .iter()
                    .map(|(k, v)| Ok((self.key(k)?, self.expr(v)?)))
                    .collect::<Result<_>>()?,
            ),
            AstKind::ArrayCtor(inner) => {
                PlanKind::ArrayCtor(inner.as_ref().map(|a| self.expr(a)).transpose()?)
            }
            AstKind::ContextItem => PlanKind::ContextItem,
            AstKind::VarRef(name) => PlanKind::VarRef(name.clone()),
            AstKind::Arith { op, lhs, rhs } => {
                PlanKind::Arith { op: *op, lhs: self.expr(lhs)?, rhs: self.expr(rhs)? }
            }
            AstKind::UnaryMinus(e) => PlanKind::UnaryMinus(self.expr(e)?),
            AstKind::Compare { op, lhs, rhs } => {
                PlanKind::Compare { op: *op, lhs: self.expr(lhs)?, rhs: self.expr(rhs)? }
            }
            AstKind::And(l, r) => PlanKind::And(self.expr(l)?, self.expr(r)?),
            AstKind::Or(l, r) => PlanKind::Or(self.expr(l)?, self.expr(r)?),
            AstKind::Not(e) => PlanKind::Not(self.expr(e)?),
            AstKind::StringConcat(l, r) => PlanKind::StringConcat(self.expr(l)?, self.expr(r)?),
            AstKind::Range(l, r) => PlanKind::Range(self.expr(l)?, self.expr(r)?),
            AstKind::FunctionCall { name, args } => return self.function_call(name, args, span),
            AstKind::If { cond, then, els } => PlanKind::If {
                cond: self.expr(cond)?,
                then: self.expr(then)?,
                els: self.expr(els)?,
            },
            AstKind::Switch { input, cases, default } => PlanKind::Switch {
                input: self.expr(input)?,
                cases: cases
                    .iter()
                    .map(|(op, body)| Ok((self.expr(op)?, self.expr(body)?)))
                    .collect::<Result<_>>()?,
                default: self.expr(default)?,
            },
            AstKind::TypeSwitch { input, cases, default } => PlanKind::TypeSwitch {
                input: self.expr(input)?,
                cases: cases
                    .iter()
                    .map(|(ty, body)| Ok((*ty, self.expr(body)?)))
                    .collect::<Result<_>>()?,
                default: self.expr(default)?,
            },
            AstKind::TryCatch { body, catches } => PlanKind::TryCatch {
                body: self.expr(body)?,
                catches: catches
                    .iter()
                    .map(|(filter, handler)| Ok((filter.clone(), self.expr(handler)?)))
                    .collect::<Result<_>>()?,
            },
            AstKind::Cast { expr, ty } => PlanKind::Cast { expr: self.expr(expr)?, ty: *ty },
            AstKind::Castable { expr, ty } => {
                PlanKind::Castable { expr: self.expr(expr)?, ty: *ty }
            }
            AstKind::InstanceOf { expr, ty } => {
                PlanKind::InstanceOf { expr: self.expr(expr)?, ty: *ty }
            }
            AstKind::Treat { expr, ty } => PlanKind::Treat { expr: self.expr(expr)?, ty: *ty },
            AstKind::Some { var, source, pred } => PlanKind::Some {
                var: var.clone(),
                source: self.expr(source)?,
                pred: self.expr(pred)?,
            },
            AstKind::Predicate { input, pred } => {
                PlanKind::Predicate { input: self.expr(input)?, pred: self.expr(pred)? }
            }
            AstKind::ArrayUnbox(input) => PlanKind::ArrayUnbox(self.expr(input)?),
            AstKind::ArrayAccess { input, index } => {
                PlanKind::ArrayAccess { input: self.expr(input)?, index: self.expr(index)? }
            }
            AstKind::ObjectLookup { input, key } => {
                PlanKind::ObjectLookup { input: self.expr(input)?, key: self.key(key)? }
            }
            AstKind::SimpleMap { input, mapper } => {
                PlanKind::SimpleMap { input: self.expr(input)?, mapper: self.expr(mapper)? }
            }
            AstKind::Flwor { clauses, return_expr } => {
                self.flwor(clauses, return_expr)?
            }
        };
        Ok(self.node(kind, span))
    }

    fn key(&mut self, key: &KeyExpr) -> Result<PlanKey> {
        Ok(match key {
            KeyExpr::Literal(k) => PlanKey::Literal(k.clone()),
            KeyExpr::Computed(e) => PlanKey::Computed(self.expr(e)?),
        })
    }

    fn function_call(&mut self, name: &str, args: &[Ast], span: Span) -> Result<Arc<PlanNode>> {
        let argc = args.len();
        let mut plans = Vec::with_capacity(argc);
        for arg in args {
            plans.push(self.expr(arg)?);
        }
        let unsupported = |msg: String| Err(Error::new(ErrorCode::Unsupported, msg).with_span(span));
        let arity = |ok: bool, expected: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::new(
                    ErrorCode::Unsupported,
                    format!("function {name}() expects {expected} argument(s), got {argc}"),
                )
                .with_span(span))
            }
        };

        let agg = match name {
            "count" => Some(AggKind::Count),
            "sum" => Some(AggKind::Sum),
            "avg" => Some(AggKind::Avg),
            "min" => Some(AggKind::Min),
            "max" => Some(AggKind::Max),
            _ => None,
        };
        if let Some(agg) = agg {
            arity(argc == 1, "1")?;
            return Ok(self.node(
                PlanKind::Aggregate { agg, input: plans.pop().unwrap() },
                span,
            ));
        }

        let kind = match name {
            "json-file" | "text-file" => {
                arity(argc == 1 || argc == 2, "1 or 2")?;
                let partitions = if argc == 2 { Some(plans.pop().unwrap()) } else { None };
                let pattern = plans.pop().unwrap();
                if name == "json-file" {
                    PlanKind::JsonFile { pattern, partitions }
                } else {
                    PlanKind::TextFile { pattern, partitions }
                }
            }
            "parallelize" => {
                arity(argc == 1 || argc == 2, "1 or 2")?;
                let partitions = if argc == 2 { Some(plans.pop().unwrap()) } else { None };
                PlanKind::Parallelize { input: plans.pop().unwrap(), partitions }
            }
            "annotate" => {
                arity(argc == 2, "2")?;
                let schema = plans.pop().unwrap();
                PlanKind::Annotate { input: plans.pop().unwrap(), schema }
            }
            "boolean" => {
                arity(argc == 1, "1")?;
                PlanKind::ScalarCall { func: ScalarFn::Boolean, args: plans }
            }
            "not" => {
                arity(argc == 1, "1")?;
                PlanKind::Not(plans.pop().unwrap())
            }
            "string" => {
                arity(argc == 1, "1")?;
                PlanKind::ScalarCall { func: ScalarFn::String, args: plans }
            }
            "concat" => {
                arity(argc >= 1, "at least 1")?;
                PlanKind::ScalarCall { func: ScalarFn::Concat, args: plans }
            }
            "substring" => {
                arity(argc == 2 || argc == 3, "2 or 3")?;
                PlanKind::ScalarCall { func: ScalarFn::Substring, args: plans }
            }
            "string-length" => {
                arity(argc == 1, "1")?;
                PlanKind::ScalarCall { func: ScalarFn::StringLength, args: plans }
            }
            "contains" => {
                arity(argc == 2, "2")?;
                PlanKind::ScalarCall { func: ScalarFn::Contains, args: plans }
            }
            "starts-with" => {
                arity(argc == 2, "2")?;
                PlanKind::ScalarCall { func: ScalarFn::StartsWith, args: plans }
            }
            "lower-case" => {
                arity(argc == 1, "1")?;
                PlanKind::ScalarCall { func: ScalarFn::LowerCase, args: plans }
            }
            "upper-case" => {
                arity(argc == 1, "1")?;
                PlanKind::ScalarCall { func: ScalarFn::UpperCase, args: plans }
            }
            "size" => {
                arity(argc == 1, "1")?;
                PlanKind::ScalarCall { func: ScalarFn::Size, args: plans }
            }
            "keys" => {
                arity(argc == 1, "1")?;
                PlanKind::ScalarCall { func: ScalarFn::Keys, args: plans }
            }
            "values" => {
                arity(argc == 1, "1")?;
                PlanKind::ScalarCall { func: ScalarFn::Values, args: plans }
            }
            "abs" => {
                arity(argc == 1, "1")?;
                PlanKind::ScalarCall { func: ScalarFn::Abs, args: plans }
            }
            "round" => {
                arity(argc == 1, "1")?;
                PlanKind::ScalarCall { func: ScalarFn::Round, args: plans }
            }
            _ => return unsupported(format!("unknown function {name}()")),
        };
        Ok(self.node(kind, span))
    }

    fn flwor(&mut self, clauses: &[Clause], return_expr: &Ast) -> Result<PlanKind> {
        let mut out: Vec<ClausePlan> = Vec::new();
        let mut cols: Vec<Arc<str>> = Vec::new();
        let mut only_lets_so_far = true;

        let push_binding =
            |out: &mut Vec<ClausePlan>, cols: &mut Vec<Arc<str>>, op: ClauseOp, span: Span| {
                let var = match &op {
                    ClauseOp::For { var, .. } | ClauseOp::Let { var, .. } | ClauseOp::Count(var) => {
                        var.clone()
                    }
                    _ => unreachable!("push_binding on non-binding clause"),
                };
                // Rebinding an existing name drops the old column.
                cols.retain(|c| *c != var);
                cols.push(var);
                out.push(ClausePlan {
                    op,
                    span,
                    mode: ExecutionMode::Local,
                    out_columns: Arc::new(cols.clone()),
                });
            };

        for clause in clauses {
            let span = clause.span;
            match &clause.kind {
                ClauseKind::For { var, expr } => {
                    let plan = self.expr(expr)?;
                    let fv = free_vars(&plan);
                    let independent = cols.iter().all(|c| !fv.contains(c));
                    let op = ClauseOp::For {
                        var: var.clone(),
                        expr: plan,
                        initial: only_lets_so_far,
                        independent,
                    };
                    push_binding(&mut out, &mut cols, op, span);
                    only_lets_so_far = false;
                }
                ClauseKind::Let { var, expr } => {
                    let plan = self.expr(expr)?;
                    let fv = free_vars(&plan);
                    let independent = cols.iter().all(|c| !fv.contains(c));
                    let op = ClauseOp::Let { var: var.clone(), expr: plan, independent };
                    push_binding(&mut out, &mut cols, op, span);
                }
                ClauseKind::Where(pred) => {
                    let plan = self.expr(pred)?;
                    out.push(ClausePlan {
                        op: ClauseOp::Where(plan),
                        span,
                        mode: ExecutionMode::Local,
                        out_columns: Arc::new(cols.clone()),
                    });
                    only_lets_so_far = false;
                }
                ClauseKind::GroupBy(keys) => {
                    let mut key_names = Vec::with_capacity(keys.len());
                    for key in keys {
                        match (&key.var, &key.expr) {
                            // group by $existing
                            (Some(var), None) if cols.contains(var) => {
                                key_names.push(var.clone());
                            }
                            // group by $y := expr, or a reference to a
                            // variable outside this tuple stream: bind a
                            // column first.
                            (var, expr) => {
                                let name = var
                                    .clone()
                                    .unwrap_or_else(|| self.gensym("key"));
                                let expr_plan = match expr {
                                    Some(e) => self.expr(e)?,
                                    None => self.node(
                                        PlanKind::VarRef(var.clone().unwrap()),
                                        key.span,
                                    ),
                                };
                                let fv = free_vars(&expr_plan);
                                let independent = cols.iter().all(|c| !fv.contains(c));
                                let op = ClauseOp::Let {
                                    var: name.clone(),
                                    expr: expr_plan,
                                    independent,
                                };
                                push_binding(&mut out, &mut cols, op, key.span);
                                key_names.push(name);
                            }
                        }
                    }
                    let nongroup: Vec<NonGroupSpec> = cols
                        .iter()
                        .filter(|c| !key_names.contains(c))
                        .map(|c| NonGroupSpec { var: c.clone(), action: GroupAction::Collect })
                        .collect();
                    cols = group_output_columns(&key_names, &nongroup);
                    out.push(ClausePlan {
                        op: ClauseOp::GroupBy { keys: key_names, nongroup },
                        span,
                        mode: ExecutionMode::Local,
                        out_columns: Arc::new(cols.clone()),
                    });
                    only_lets_so_far = false;
                }
                ClauseKind::OrderBy { specs, stable: _stable } => {
                    // Sorting is always stable here.
                    let mut key_specs = Vec::with_capacity(specs.len());
                    let mut drop = Vec::new();
                    for spec in specs {
                        let var = match &spec.expr.kind {
                            AstKind::VarRef(name) if cols.contains(name) => name.clone(),
                            _ => {
                                let name = self.gensym("sort");
                                let expr_plan = self.expr(&spec.expr)?;
                                let fv = free_vars(&expr_plan);
                                let independent = cols.iter().all(|c| !fv.contains(c));
                                let op = ClauseOp::Let {
                                    var: name.clone(),
                                    expr: expr_plan,
                                    independent,
                                };
                                push_binding(&mut out, &mut cols, op, spec.expr.span);
                                drop.push(name.clone());
                                name
                            }
                        };
                        key_specs.push(OrderKeySpec {
                            var,
                            descending: spec.descending,
                            empty_greatest: spec.empty_greatest,
                        });
                    }
                    cols.retain(|c| !drop.contains(c));
                    out.push(ClausePlan {
                        op: ClauseOp::OrderBy { specs: key_specs, drop },
                        span,
                        mode: ExecutionMode::Local,
                        out_columns: Arc::new(cols.clone()),
                    });
                    only_lets_so_far = false;
                }
                ClauseKind::Count(var) => {
                    let op = ClauseOp::Count(var.clone());
                    push_binding(&mut out, &mut cols, op, span);
                    only_lets_so_far = false;
                }
            }
        }

        let return_plan = self.expr(return_expr)?;
        Ok(PlanKind::Flwor(FlworPlan {
            clauses: out,
            return_expr: return_plan,
            return_mode: ExecutionMode::Local,
        }))
    }
}

pub(crate) fn group_output_columns(
    keys: &[Arc<str>],
    nongroup: &[NonGroupSpec],
) -> Vec<Arc<str>> {
    let mut cols: Vec<Arc<str>> = keys.to_vec();
    for spec in nongroup {
        match &spec.action {
            GroupAction::Collect => cols.push(spec.var.clone()),
            GroupAction::Drop => {}
            GroupAction::Aggregate(aggs) => {
                for (_, col) in aggs {
                    cols.push(col.clone());
                }
            }
        }
    }
    cols
}

// ---------------------------------------------------------------------------
// Mode assignment
// ---------------------------------------------------------------------------

/// Bottom-up mode assignment. Source functions are partitioned regardless
/// of their (local) argument children; annotate produces a frame;
/// sequence-transforming iterators inherit partitioned inputs; the first
/// for clause over a partitioned sequence lifts the tuple stream to a
/// frame; local-only iterators stay local.
pub fn assign_modes(plan: &mut Arc<PlanNode>) {
    let node = Arc::get_mut(plan).expect("plan tree is uniquely owned during mode assignment");
    assign(node);
}

fn assign(node: &mut PlanNode) {
    for_each_child_mut(&mut node.kind, &mut |child| {
        let child = Arc::get_mut(child).expect("plan tree is uniquely owned");
        assign(child);
    });
    node.mode = derive_mode(&mut node.kind);
}

fn derive_mode(kind: &mut PlanKind) -> ExecutionMode {
    use ExecutionMode::*;
    match kind {
        PlanKind::JsonFile { .. } | PlanKind::TextFile { .. } | PlanKind::Parallelize { .. } => {
            Partitioned
        }
        PlanKind::Annotate { .. } => Frame,
        PlanKind::Concat(items) => {
            if items.iter().any(|i| i.mode >= Partitioned) {
                Partitioned
            } else {
                Local
            }
        }
        PlanKind::Predicate { input, .. }
        | PlanKind::ArrayUnbox(input)
        | PlanKind::ArrayAccess { input, .. }
        | PlanKind::ObjectLookup { input, .. }
        | PlanKind::SimpleMap { input, .. } => {
            if input.mode >= Partitioned {
                Partitioned
            } else {
                Local
            }
        }
        PlanKind::Treat { expr, ty } => {
            // A per-item check streams; occurrence bounds need counting.
            if ty.occurrence == Occurrence::Star && expr.mode >= Partitioned {
                Partitioned
            } else {
                Local
            }
        }
        PlanKind::If { then, els, .. } => then.mode.max(els.mode),
        PlanKind::Switch { cases, default, .. } => cases
            .iter()
            .map(|(_, body)| body.mode)
            .chain([default.mode])
            .max()
            .unwrap_or(Local),
        PlanKind::TypeSwitch { cases, default, .. } => cases
            .iter()
            .map(|(_, body)| body.mode)
            .chain([default.mode])
            .max()
            .unwrap_or(Local),
        PlanKind::Flwor(flwor) => {
            let mut stream = Local;
            for clause in &mut flwor.clauses {
                if let ClauseOp::For { expr, initial, .. } = &clause.op {
                    if *initial && expr.mode >= Partitioned {
                        stream = Frame;
                    }
                }
                clause.mode = stream;
            }
            flwor.return_mode = stream;
            if stream == Frame {
                Partitioned
            } else {
                Local
            }
        }
        _ => Local,
    }
}

/// Visit every direct child plan of a node.
pub(crate) fn for_each_child_mut(kind: &mut PlanKind, f: &mut impl FnMut(&mut Arc<PlanNode>)) {
    match kind {
        PlanKind::Literal(_)
        | PlanKind::EmptySeq
        | PlanKind::ContextItem
        | PlanKind::VarRef(_) => {}
        PlanKind::Concat(items) => items.iter_mut().for_each(f),
        PlanKind::ObjectCtor(pairs) => {
            for (key, value) in pairs {
                if let PlanKey::Computed(k) = key {
                    f(k);
                }
                f(value);
            }
        }
        PlanKind::ArrayCtor(inner) => {
            if let Some(inner) = inner {
                f(inner);
            }
        }
        PlanKind::Arith { lhs, rhs, .. } | PlanKind::Compare { lhs, rhs, .. } => {
            f(lhs);
            f(rhs);
        }
        PlanKind::And(l, r)
        | PlanKind::Or(l, r)
        | PlanKind::StringConcat(l, r)
        | PlanKind::Range(l, r) => {
            f(l);
            f(r);
        }
        PlanKind::UnaryMinus(e) | PlanKind::Not(e) | PlanKind::ArrayUnbox(e) => f(e),
        PlanKind::ScalarCall { args, .. } => args.iter_mut().for_each(f),
        PlanKind::Aggregate { input, .. } => f(input),
        PlanKind::JsonFile { pattern, partitions } | PlanKind::TextFile { pattern, partitions } => {
            f(pattern);
            if let Some(p) = partitions {
                f(p);
            }
        }
        PlanKind::Parallelize { input, partitions } => {
            f(input);
            if let Some(p) = partitions {
                f(p);
            }
        }
        PlanKind::Annotate { input, schema } => {
            f(input);
            f(schema);
        }
        PlanKind::If { cond, then, els } => {
            f(cond);
            f(then);
            f(els);
        }
        PlanKind::Switch { input, cases, default } => {
            f(input);
            for (operand, body) in cases {
                f(operand);
                f(body);
            }
            f(default);
        }
        PlanKind::TypeSwitch { input, cases, default } => {
            f(input);
            for (_, body) in cases {
                f(body);
            }
            f(default);
        }
        PlanKind::TryCatch { body, catches } => {
            f(body);
            for (_, handler) in catches {
                f(handler);
            }
        }
        PlanKind::Cast { expr, .. }
        | PlanKind::Castable { expr, .. }
        | PlanKind::InstanceOf { expr, .. }
        | PlanKind::Treat { expr, .. } => f(expr),
        PlanKind::Some { source, pred, .. } => {
            f(source);
            f(pred);
        }
        PlanKind::Predicate { input, pred } => {
            f(input);
            f(pred);
        }
        PlanKind::ArrayAccess { input, index } => {
            f(input);
            f(index);
        }
        PlanKind::ObjectLookup { input, key } => {
            f(input);
            if let PlanKey::Computed(k) = key {
                f(k);
            }
        }
        PlanKind::SimpleMap { input, mapper } => {
            f(input);
            f(mapper);
        }
        PlanKind::Flwor(flwor) => {
            for clause in &mut flwor.clauses {
                match &mut clause.op {
                    ClauseOp::For { expr, .. } | ClauseOp::Let { expr, .. } => f(expr),
                    ClauseOp::Where(pred) => f(pred),
                    ClauseOp::GroupBy { .. } | ClauseOp::OrderBy { .. } | ClauseOp::Count(_) => {}
                }
            }
            f(&mut flwor.return_expr);
        }
    }
}

/// Visit every direct child plan of a node (shared references).
pub(crate) fn for_each_child<'a>(kind: &'a PlanKind, f: &mut impl FnMut(&'a Arc<PlanNode>)) {
    match kind {
        PlanKind::Literal(_)
        | PlanKind::EmptySeq
        | PlanKind::ContextItem
        | PlanKind::VarRef(_) => {}
        PlanKind::Concat(items) => items.iter().for_each(f),
        PlanKind::ObjectCtor(pairs) => {
            for (key, value) in pairs {
                if let PlanKey::Computed(k) = key {
                    f(k);
                }
                f(value);
            }
        }
        PlanKind::ArrayCtor(inner) => {
            if let Some(inner) = inner {
                f(inner);
            }
        }
        PlanKind::Arith { lhs, rhs, .. } | PlanKind::Compare { lhs, rhs, .. } => {
            f(lhs);
            f(rhs);
        }
        PlanKind::And(l, r)
        | PlanKind::Or(l, r)
        | PlanKind::StringConcat(l, r)
        | PlanKind::Range(l, r) => {
            f(l);
            f(r);
        }
        PlanKind::UnaryMinus(e) | PlanKind::Not(e) | PlanKind::ArrayUnbox(e) => f(e),
        PlanKind::ScalarCall { args, .. } => args.iter().for_each(f),
        PlanKind::Aggregate { input, .. } => f(input),
        PlanKind::JsonFile { pattern, partitions } | PlanKind::TextFile { pattern, partitions } => {
            f(pattern);
            if let Some(p) = partitions {
                f(p);
            }
        }
        PlanKind::Parallelize { input, partitions } => {
            f(input);
            if let Some(p) = partitions {
                f(p);
            }
        }
        PlanKind::Annotate { input, schema } => {
            f(input);
            f(schema);
        }
        PlanKind::If { cond, then, els } => {
            f(cond);
            f(then);
            f(els);
        }
        PlanKind::Switch { input, cases, default } => {
            f(input);
            for (operand, body) in cases {
                f(operand);
                f(body);
            }
            f(default);
        }
        PlanKind::TypeSwitch { input, cases, default } => {
            f(input);
            for (_, body) in cases {
                f(body);
            }
            f(default);
        }
        PlanKind::TryCatch { body, catches } => {
            f(body);
            for (_, handler) in catches {
                f(handler);
            }
        }
        PlanKind::Cast { expr, .. }
        | PlanKind::Castable { expr, .. }
        | PlanKind::InstanceOf { expr, .. }
        | PlanKind::Treat { expr, .. } => f(expr),
        PlanKind::Some { source, pred, .. } => {
            f(source);
            f(pred);
        }
        PlanKind::Predicate { input, pred } => {
            f(input);
            f(pred);
        }
        PlanKind::ArrayAccess { input, index } => {
            f(input);
            f(index);
        }
        PlanKind::ObjectLookup { input, key } => {
            f(input);
            if let PlanKey::Computed(k) = key {
                f(k);
            }
        }
        PlanKind::SimpleMap { input, mapper } => {
            f(input);
            f(mapper);
        }
        PlanKind::Flwor(flwor) => {
            for clause in &flwor.clauses {
                match &clause.op {
                    ClauseOp::For { expr, .. } | ClauseOp::Let { expr, .. } => f(expr),
                    ClauseOp::Where(pred) => f(pred),
                    ClauseOp::GroupBy { .. } | ClauseOp::OrderBy { .. } | ClauseOp::Count(_) => {}
                }
            }
            f(&flwor.return_expr);
        }
    }
}

// ---------------------------------------------------------------------------
// Free variables
// ---------------------------------------------------------------------------

/// Variable names a plan reads from its environment.
pub fn free_vars(plan: &PlanNode) -> HashSet<Arc<str>> {
    let mut out = HashSet::new();
    let mut bound: Vec<Arc<str>> = Vec::new();
    collect_free(plan, &mut bound, &mut out);
    out
}

fn collect_free(node: &PlanNode, bound: &mut Vec<Arc<str>>, out: &mut HashSet<Arc<str>>) {
    match &node.kind {
        PlanKind::VarRef(name) => {
            if !bound.iter().any(|b| b == name) {
                out.insert(name.clone());
            }
        }
        PlanKind::Some { var, source, pred } => {
            collect_free(source, bound, out);
            bound.push(var.clone());
            collect_free(pred, bound, out);
            bound.pop();
        }
        PlanKind::Flwor(flwor) => {
            let depth = bound.len();
            for clause in &flwor.clauses {
                match &clause.op {
                    ClauseOp::For { var, expr, .. } | ClauseOp::Let { var, expr, .. } => {
                        collect_free(expr, bound, out);
                        bound.push(var.clone());
                    }
                    ClauseOp::Where(pred) => collect_free(pred, bound, out),
                    ClauseOp::GroupBy { nongroup, .. } => {
                        for spec in nongroup {
                            if let GroupAction::Aggregate(aggs) = &spec.action {
                                for (_, col) in aggs {
                                    bound.push(col.clone());
                                }
                            }
                        }
                    }
                    ClauseOp::OrderBy { .. } => {}
                    ClauseOp::Count(var) => bound.push(var.clone()),
                }
            }
            collect_free(&flwor.return_expr, bound, out);
            bound.truncate(depth);
        }
        kind => {
            for_each_child(kind, &mut |child| collect_free(child, bound, out));
        }
    }
}
