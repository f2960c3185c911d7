//! Physical plan: a tree of runtime iterator descriptions.

use std::sync::Arc;

use crate::error::Span;
use crate::jdm::{ArithOp, CmpOp, Item, SequenceType};
use crate::parser::CatchFilter;

/// Execution mode of an iterator, ordered lowest to highest. A consumer
/// reads each child through the child's highest mode; every mode can be
/// lowered to `Local` by materializing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExecutionMode {
    Local,
    Partitioned,
    Frame,
}

impl ExecutionMode {
    pub fn name(self) -> &'static str {
        match self {
            ExecutionMode::Local => "local",
            ExecutionMode::Partitioned => "partitioned",
            ExecutionMode::Frame => "frame",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AggKind {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggKind {
    pub fn name(self) -> &'static str {
        match self {
            AggKind::Count => "count",
            AggKind::Sum => "sum",
            AggKind::Avg => "avg",
            AggKind::Min => "min",
            AggKind::Max => "max",
        }
    }
}

/// Built-in functions that always run locally on materialized arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarFn {
    String,
    Concat,
    Substring,
    StringLength,
    Contains,
    StartsWith,
    LowerCase,
    UpperCase,
    Size,
    Keys,
    Values,
    Boolean,
    Not,
    Abs,
    Round,
}

impl ScalarFn {
    pub fn name(self) -> &'static str {
        match self {
            ScalarFn::String => "string",
            ScalarFn::Concat => "concat",
            ScalarFn::Substring => "substring",
            ScalarFn::StringLength => "string-length",
            ScalarFn::Contains => "contains",
            ScalarFn::StartsWith => "starts-with",
            ScalarFn::LowerCase => "lower-case",
            ScalarFn::UpperCase => "upper-case",
            ScalarFn::Size => "size",
            ScalarFn::Keys => "keys",
            ScalarFn::Values => "values",
            ScalarFn::Boolean => "boolean",
            ScalarFn::Not => "not",
            ScalarFn::Abs => "abs",
            ScalarFn::Round => "round",
        }
    }
}

#[derive(Debug, Clone)]
pub enum PlanKey {
    Literal(Arc<str>),
    Computed(Arc<PlanNode>),
}

#[derive(Debug, Clone)]
pub struct PlanNode {
    pub kind: PlanKind,
    pub mode: ExecutionMode,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum PlanKind {
    Literal(Item),
    EmptySeq,
    Concat(Vec<Arc<PlanNode>>),
    ObjectCtor(Vec<(PlanKey, Arc<PlanNode>)>),
    ArrayCtor(Option<Arc<PlanNode>>),
    ContextItem,
    VarRef(Arc<str>),
    Arith { op: ArithOp, lhs: Arc<PlanNode>, rhs: Arc<PlanNode> },
    UnaryMinus(Arc<PlanNode>),
    Compare { op: CmpOp, lhs: Arc<PlanNode>, rhs: Arc<PlanNode> },
    And(Arc<PlanNode>, Arc<PlanNode>),
    Or(Arc<PlanNode>, Arc<PlanNode>),
    Not(Arc<PlanNode>),
    StringConcat(Arc<PlanNode>, Arc<PlanNode>),
    Range(Arc<PlanNode>, Arc<PlanNode>),
    ScalarCall { func: ScalarFn, args: Vec<Arc<PlanNode>> },
    Aggregate { agg: AggKind, input: Arc<PlanNode> },
    JsonFile { pattern: Arc<PlanNode>, partitions: Option<Arc<PlanNode>> },
    TextFile { pattern: Arc<PlanNode>, partitions: Option<Arc<PlanNode>> },
    Parallelize { input: Arc<PlanNode>, partitions: Option<Arc<PlanNode>> },
    Annotate { input: Arc<PlanNode>, schema: Arc<PlanNode> },
    If { cond: Arc<PlanNode>, then: Arc<PlanNode>, els: Arc<PlanNode> },
    Switch { input: Arc<PlanNode>, cases: Vec<(Arc<PlanNode>, Arc<PlanNode>)>, default: Arc<PlanNode> },
    TypeSwitch { input: Arc<PlanNode>, cases: Vec<(SequenceType, Arc<PlanNode>)>, default: Arc<PlanNode> },
    TryCatch { body: Arc<PlanNode>, catches: Vec<(CatchFilter, Arc<PlanNode>)> },
    Cast { expr: Arc<PlanNode>, ty: SequenceType },
    Castable { expr: Arc<PlanNode>, ty: SequenceType },
    InstanceOf { expr: Arc<PlanNode>, ty: SequenceType },
    Treat { expr: Arc<PlanNode>, ty: SequenceType },
    Some { var: Arc<str>, source: Arc<PlanNode>, pred: Arc<PlanNode> },
    Predicate { input: Arc<PlanNode>, pred: Arc<PlanNode> },
    ArrayUnbox(Arc<PlanNode>),
    ArrayAccess { input: Arc<PlanNode>, index: Arc<PlanNode> },
    ObjectLookup { input: Arc<PlanNode>, key: PlanKey },
    SimpleMap { input: Arc<PlanNode>, mapper: Arc<PlanNode> },
    Flwor(FlworPlan),
}

#[derive(Debug, Clone)]
pub struct FlworPlan {
    pub clauses: Vec<ClausePlan>,
    pub return_expr: Arc<PlanNode>,
    /// Tuple stream mode at the return clause.
    pub return_mode: ExecutionMode,
}

#[derive(Debug, Clone)]
pub struct ClausePlan {
    pub op: ClauseOp,
    pub span: Span,
    /// Tuple stream mode after this clause (`Local` or `Frame`).
    pub mode: ExecutionMode,
    /// Variables bound in the tuple stream after this clause, in binding
    /// order. Derived statically from the query.
    pub out_columns: Arc<Vec<Arc<str>>>,
}

#[derive(Debug, Clone)]
pub enum ClauseOp {
    For {
        var: Arc<str>,
        expr: Arc<PlanNode>,
        /// Only let clauses (or nothing) precede: the binding sequence is
        /// evaluated once and forwarded, lifting the stream when the
        /// sequence is partitioned.
        initial: bool,
        /// The expression uses no tuple columns, so it can be evaluated
        /// once and its result reused for every input tuple.
        independent: bool,
    },
    Let {
        var: Arc<str>,
        expr: Arc<PlanNode>,
        independent: bool,
    },
    Where(Arc<PlanNode>),
    GroupBy {
        keys: Vec<Arc<str>>,
        nongroup: Vec<NonGroupSpec>,
    },
    OrderBy {
        specs: Vec<OrderKeySpec>,
        /// Hidden sort-key columns to drop after sorting.
        drop: Vec<Arc<str>>,
    },
    Count(Arc<str>),
}

#[derive(Debug, Clone)]
pub struct OrderKeySpec {
    pub var: Arc<str>,
    pub descending: bool,
    pub empty_greatest: bool,
}

#[derive(Debug, Clone)]
pub struct NonGroupSpec {
    pub var: Arc<str>,
    pub action: GroupAction,
}

/// What the group-by clause does with one non-grouping variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupAction {
    /// Concatenate the cells of the group's tuples in input order.
    Collect,
    /// Never referenced later; materialize nothing.
    Drop,
    /// Referenced only inside aggregate functions; compute those per group
    /// into hidden columns instead of collecting.
    Aggregate(Vec<(AggKind, Arc<str>)>),
}

impl PlanNode {
    /// Indented one-node-per-line rendering: kind, mode, variables.
    pub fn render(&self) -> String {
        let mut out = String::new();
        render_node(self, 0, &mut out);
        out
    }
}

fn pad(indent: usize, out: &mut String) {
    for _ in 0..indent {
        out.push_str("  ");
    }
}

fn render_node(node: &PlanNode, indent: usize, out: &mut String) {
    pad(indent, out);
    let mode = node.mode.name();
    match &node.kind {
        PlanKind::Literal(item) => {
            let mut s = String::new();
            crate::io::serialize_item(item, &mut s);
            if s.len() > 40 {
                s.truncate(40);
                s.push('…');
            }
            out.push_str(&format!("literal {s} [{mode}]\n"));
        }
        PlanKind::EmptySeq => out.push_str(&format!("empty-sequence [{mode}]\n")),
        PlanKind::Concat(items) => {
            out.push_str(&format!("concat [{mode}]\n"));
            for item in items {
                render_node(item, indent + 1, out);
            }
        }
        PlanKind::ObjectCtor(pairs) => {
            out.push_str(&format!("object-constructor [{mode}]\n"));
            for (key, value) in pairs {
                if let PlanKey::Computed(k) = key {
                    render_node(k, indent + 1, out);
                }
                render_node(value, indent + 1, out);
            }
        }
        PlanKind::ArrayCtor(inner) => {
            out.push_str(&format!("array-constructor [{mode}]\n"));
            if let Some(inner) = inner {
                render_node(inner, indent + 1, out);
            }
        }
        PlanKind::ContextItem => out.push_str(&format!("context-item [{mode}]\n")),
        PlanKind::VarRef(name) => out.push_str(&format!("var ${name} [{mode}]\n")),
        PlanKind::Arith { op, lhs, rhs } => {
            out.push_str(&format!("arith {} [{mode}]\n", op.name()));
            render_node(lhs, indent + 1, out);
            render_node(rhs, indent + 1, out);
        }
        PlanKind::UnaryMinus(e) => {
            out.push_str(&format!("unary-minus [{mode}]\n"));
            render_node(e, indent + 1, out);
        }
        PlanKind::Compare { op, lhs, rhs } => {
            out.push_str(&format!("compare {} [{mode}]\n", op.name()));
            render_node(lhs, indent + 1, out);
            render_node(rhs, indent + 1, out);
        }
        PlanKind::And(l, r) => {
            out.push_str(&format!("and [{mode}]\n"));
            render_node(l, indent + 1, out);
            render_node(r, indent + 1, out);
        }
        PlanKind::Or(l, r) => {
            out.push_str(&format!("or [{mode}]\n"));
            render_node(l, indent + 1, out);
            render_node(r, indent + 1, out);
        }
        PlanKind::Not(e) => {
            out.push_str(&format!("not [{mode}]\n"));
            render_node(e, indent + 1, out);
        }
        PlanKind::StringConcat(l, r) => {
            out.push_str(&format!("string-concat [{mode}]\n"));
            render_node(l, indent + 1, out);
            render_node(r, indent + 1, out);
        }
        PlanKind::Range(l, r) => {
            out.push_str(&format!("range [{mode}]\n"));
            render_node(l, indent + 1, out);
            render_node(r, indent + 1, out);
        }
        PlanKind::ScalarCall { func, args } => {
            out.push_str(&format!("call {} [{mode}]\n", func.name()));
            for arg in args {
                render_node(arg, indent + 1, out);
            }
        }
        PlanKind::Aggregate { agg, input } => {
            out.push_str(&format!("aggregate {} [{mode}]\n", agg.name()));
            render_node(input, indent + 1, out);
        }
        PlanKind::JsonFile { pattern, partitions } => {
            out.push_str(&format!("json-file [{mode}]\n"));
            render_node(pattern, indent + 1, out);
            if let Some(p) = partitions {
                render_node(p, indent + 1, out);
            }
        }
        PlanKind::TextFile { pattern, partitions } => {
            out.push_str(&format!("text-file [{mode}]\n"));
            render_node(pattern, indent + 1, out);
            if let Some(p) = partitions {
                render_node(p, indent + 1, out);
            }
        }
        PlanKind::Parallelize { input, partitions } => {
            out.push_str(&format!("parallelize [{mode}]\n"));
            render_node(input, indent + 1, out);
            if let Some(p) = partitions {
                render_node(p, indent + 1, out);
            }
        }
        PlanKind::Annotate { input, schema } => {
            out.push_str(&format!("annotate [{mode}]\n"));
            render_node(input, indent + 1, out);
            render_node(schema, indent + 1, out);
        }
        PlanKind::If { cond, then, els } => {
            out.push_str(&format!("if [{mode}]\n"));
            render_node(cond, indent + 1, out);
            render_node(then, indent + 1, out);
            render_node(els, indent + 1, out);
        }
        PlanKind::Switch { input, cases, default } => {
            out.push_str(&format!("switch [{mode}]\n"));
            render_node(input, indent + 1, out);
            for (operand, body) in cases {
                render_node(operand, indent + 1, out);
                render_node(body, indent + 1, out);
            }
            render_node(default, indent + 1, out);
        }
        PlanKind::TypeSwitch { input, cases, default } => {
            out.push_str(&format!("typeswitch [{mode}]\n"));
            render_node(input, indent + 1, out);
            for (ty, body) in cases {
                pad(indent + 1, out);
                out.push_str(&format!("case {ty}\n"));
                render_node(body, indent + 2, out);
            }
            render_node(default, indent + 1, out);
        }
        PlanKind::TryCatch { body, catches } => {
            out.push_str(&format!("try-catch [{mode}]\n"));
            render_node(body, indent + 1, out);
            for (_, handler) in catches {
                render_node(handler, indent + 1, out);
            }
        }
        PlanKind::Cast { expr, ty } => {
            out.push_str(&format!("cast as {ty} [{mode}]\n"));
            render_node(expr, indent + 1, out);
        }
        PlanKind::Castable { expr, ty } => {
            out.push_str(&format!("castable as {ty} [{mode}]\n"));
            render_node(expr, indent + 1, out);
        }
        PlanKind::InstanceOf { expr, ty } => {
            out.push_str(&format!("instance of {ty} [{mode}]\n"));
            render_node(expr, indent + 1, out);
        }
        PlanKind::Treat { expr, ty } => {
            out.push_str(&format!("treat as {ty} [{mode}]\n"));
            render_node(expr, indent + 1, out);
        }
        PlanKind::Some { var, source, pred } => {
            out.push_str(&format!("some ${var} [{mode}]\n"));
            render_node(source, indent + 1, out);
            render_node(pred, indent + 1, out);
        }
        PlanKind::Predicate { input, pred } => {
            out.push_str(&format!("predicate [{mode}]\n"));
            render_node(input, indent + 1, out);
            render_node(pred, indent + 1, out);
        }
        PlanKind::ArrayUnbox(input) => {
            out.push_str(&format!("array-unbox [{mode}]\n"));
            render_node(input, indent + 1, out);
        }
        PlanKind::ArrayAccess { input, index } => {
            out.push_str(&format!("array-access [{mode}]\n"));
            render_node(input, indent + 1, out);
            render_node(index, indent + 1, out);
        }
        PlanKind::ObjectLookup { input, key } => {
            match key {
                PlanKey::Literal(k) => out.push_str(&format!("lookup .{k} [{mode}]\n")),
                PlanKey::Computed(_) => out.push_str(&format!("lookup .(…) [{mode}]\n")),
            }
            render_node(input, indent + 1, out);
            if let PlanKey::Computed(k) = key {
                render_node(k, indent + 1, out);
            }
        }
        PlanKind::SimpleMap { input, mapper } => {
            out.push_str(&format!("simple-map [{mode}]\n"));
            render_node(input, indent + 1, out);
            render_node(mapper, indent + 1, out);
        }
        PlanKind::Flwor(flwor) => {
            out.push_str(&format!("flwor [{mode}]\n"));
            for clause in &flwor.clauses {
                render_clause(clause, indent + 1, out);
            }
            pad(indent + 1, out);
            out.push_str(&format!("return [{}]\n", flwor.return_mode.name()));
            render_node(&flwor.return_expr, indent + 2, out);
        }
    }
}

fn render_clause(clause: &ClausePlan, indent: usize, out: &mut String) {
    pad(indent, out);
    let mode = clause.mode.name();
    let vars = clause
        .out_columns
        .iter()
        .map(|v| format!("${v}"))
        .collect::<Vec<_>>()
        .join(", ");
    match &clause.op {
        ClauseOp::For { var, expr, initial, .. } => {
            let marker = if *initial { " (initial)" } else { "" };
            out.push_str(&format!("for ${var}{marker} [{mode}] ({vars})\n"));
            render_node(expr, indent + 1, out);
        }
        ClauseOp::Let { var, expr, .. } => {
            out.push_str(&format!("let ${var} [{mode}] ({vars})\n"));
            render_node(expr, indent + 1, out);
        }
        ClauseOp::Where(pred) => {
            out.push_str(&format!("where [{mode}] ({vars})\n"));
            render_node(pred, indent + 1, out);
        }
        ClauseOp::GroupBy { keys, nongroup } => {
            let keys = keys.iter().map(|k| format!("${k}")).collect::<Vec<_>>().join(", ");
            let mut actions = Vec::new();
            for spec in nongroup {
                match &spec.action {
                    GroupAction::Collect => actions.push(format!("collect ${}", spec.var)),
                    GroupAction::Drop => actions.push(format!("drop ${}", spec.var)),
                    GroupAction::Aggregate(aggs) => {
                        for (agg, col) in aggs {
                            actions.push(format!("{} ${} -> ${col}", agg.name(), spec.var));
                        }
                    }
                }
            }
            out.push_str(&format!(
                "group-by {keys} [{mode}] ({vars}){}{}\n",
                if actions.is_empty() { "" } else { " " },
                actions.join(", ")
            ));
        }
        ClauseOp::OrderBy { specs, .. } => {
            let keys = specs
                .iter()
                .map(|s| {
                    format!(
                        "${}{}{}",
                        s.var,
                        if s.descending { " descending" } else { "" },
                        if s.empty_greatest { " empty greatest" } else { "" }
                    )
                })
                .collect::<Vec<_>>()
                .join(", ");
            out.push_str(&format!("order-by {keys} [{mode}] ({vars})\n"));
        }
        ClauseOp::Count(var) => {
            out.push_str(&format!("count ${var} [{mode}] ({vars})\n"));
        }
    }
}
