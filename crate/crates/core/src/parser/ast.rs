//! Abstract syntax tree with source spans.

use std::sync::Arc;

use crate::error::Span;
use crate::jdm::{ArithOp, CmpOp, Item, SequenceType};

#[derive(Debug, Clone)]
pub struct Ast {
    pub kind: AstKind,
    pub span: Span,
}

impl Ast {
    pub fn new(kind: AstKind, span: Span) -> Ast {
        Ast { kind, span }
    }
}

/// Key of an object constructor pair or an object lookup.
#[derive(Debug, Clone)]
pub enum KeyExpr {
    Literal(Arc<str>),
    Computed(Box<Ast>),
}

#[derive(Debug, Clone)]
pub enum AstKind {
    Literal(Item),
    EmptySequence,
    /// Comma operator; two or more members.
    Concat(Vec<Ast>),
    ObjectCtor(Vec<(KeyExpr, Ast)>),
    ArrayCtor(Option<Box<Ast>>),
    ContextItem,
    VarRef(Arc<str>),
    Arith { op: ArithOp, lhs: Box<Ast>, rhs: Box<Ast> },
    UnaryMinus(Box<Ast>),
    Compare { op: CmpOp, lhs: Box<Ast>, rhs: Box<Ast> },
    And(Box<Ast>, Box<Ast>),
    Or(Box<Ast>, Box<Ast>),
    Not(Box<Ast>),
    StringConcat(Box<Ast>, Box<Ast>),
    Range(Box<Ast>, Box<Ast>),
    FunctionCall { name: String, args: Vec<Ast> },
    If { cond: Box<Ast>, then: Box<Ast>, els: Box<Ast> },
    Switch { input: Box<Ast>, cases: Vec<(Ast, Ast)>, default: Box<Ast> },
    TypeSwitch { input: Box<Ast>, cases: Vec<(SequenceType, Ast)>, default: Box<Ast> },
    TryCatch { body: Box<Ast>, catches: Vec<(CatchFilter, Ast)> },
    Cast { expr: Box<Ast>, ty: SequenceType },
    Castable { expr: Box<Ast>, ty: SequenceType },
    InstanceOf { expr: Box<Ast>, ty: SequenceType },
    Treat { expr: Box<Ast>, ty: SequenceType },
    /// `some $var in source satisfies pred`
    Some { var: Arc<str>, source: Box<Ast>, pred: Box<Ast> },
    Predicate { input: Box<Ast>, pred: Box<Ast> },
    ArrayUnbox(Box<Ast>),
    ArrayAccess { input: Box<Ast>, index: Box<Ast> },
    ObjectLookup { input: Box<Ast>, key: KeyExpr },
    SimpleMap { input: Box<Ast>, mapper: Box<Ast> },
    Flwor { clauses: Vec<Clause>, return_expr: Box<Ast> },
}

#[derive(Debug, Clone)]
pub struct Clause {
    pub kind: ClauseKind,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum ClauseKind {
    For { var: Arc<str>, expr: Ast },
    Let { var: Arc<str>, expr: Ast },
    Where(Ast),
    GroupBy(Vec<GroupKey>),
    OrderBy { specs: Vec<OrderSpec>, stable: bool },
    Count(Arc<str>),
}

/// `group by $var`, `group by $var := expr`, or the expression shorthand
/// `group by expr` which groups without binding a visible name.
#[derive(Debug, Clone)]
pub struct GroupKey {
    pub var: Option<Arc<str>>,
    pub expr: Option<Ast>,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct OrderSpec {
    pub expr: Ast,
    pub descending: bool,
    pub empty_greatest: bool,
}

#[derive(Debug, Clone)]
pub enum CatchFilter {
    All,
    Codes(Vec<String>),
}

impl CatchFilter {
    pub fn matches(&self, code: crate::error::ErrorCode) -> bool {
        match self {
            CatchFilter::All => true,
            CatchFilter::Codes(codes) => codes.iter().any(|c| c == code.name()),
        }
    }
}

/// Walk every node of the tree, parents before children.
pub fn visit(ast: &Ast, f: &mut impl FnMut(&Ast)) {
    f(ast);
    let each = |list: &[Ast], f: &mut dyn FnMut(&Ast)| {
        for a in list {
            visit_dyn(a, f);
        }
    };
    match &ast.kind {
        AstKind::Literal(_)
        | AstKind::EmptySequence
        | AstKind::ContextItem
        | AstKind::VarRef(_) => {}
        AstKind::Concat(items) => each(items, f),
        AstKind::ObjectCtor(pairs) => {
            for (k, v) in pairs {
                if let KeyExpr::Computed(k) = k {
                    visit_dyn(k, f);
                }
                visit_dyn(v, f);
            }
        }
        AstKind::ArrayCtor(inner) => {
            if let Some(inner) = inner {
                visit_dyn(inner, f);
            }
        }
        AstKind::Arith { lhs, rhs, .. }
        | AstKind::Compare { lhs, rhs, .. }
        | AstKind::And(lhs, rhs)
        | AstKind::Or(lhs, rhs)
        | AstKind::StringConcat(lhs, rhs)
        | AstKind::Range(lhs, rhs) => {
            visit_dyn(lhs, f);
            visit_dyn(rhs, f);
        }
        AstKind::UnaryMinus(e) | AstKind::Not(e) | AstKind::ArrayUnbox(e) => visit_dyn(e, f),
        AstKind::FunctionCall { args, .. } => each(args, f),
        AstKind::If { cond, then, els } => {
            visit_dyn(cond, f);
            visit_dyn(then, f);
            visit_dyn(els, f);
        }
        AstKind::Switch { input, cases, default } => {
            visit_dyn(input, f);
            for (operand, body) in cases {
                visit_dyn(operand, f);
                visit_dyn(body, f);
            }
            visit_dyn(default, f);
        }
        AstKind::TypeSwitch { input, cases, default } => {
            visit_dyn(input, f);
            for (_, body) in cases {
                visit_dyn(body, f);
            }
            visit_dyn(default, f);
        }
        AstKind::TryCatch { body, catches } => {
            visit_dyn(body, f);
            for (_, handler) in catches {
                visit_dyn(handler, f);
            }
        }
        AstKind::Cast { expr, .. }
        | AstKind::Castable { expr, .. }
        | AstKind::InstanceOf { expr, .. }
        | AstKind::Treat { expr, .. } => visit_dyn(expr, f),
        AstKind::Some { source, pred, .. } => {
            visit_dyn(source, f);
            visit_dyn(pred, f);
        }
        AstKind::Predicate { input, pred } => {
            visit_dyn(input, f);
            visit_dyn(pred, f);
        }
        AstKind::ArrayAccess { input, index } => {
            visit_dyn(input, f);
            visit_dyn(index, f);
        }
        AstKind::ObjectLookup { input, key } => {
            visit_dyn(input, f);
            if let KeyExpr::Computed(k) = key {
                visit_dyn(k, f);
            }
        }
        AstKind::SimpleMap { input, mapper } => {
            visit_dyn(input, f);
            visit_dyn(mapper, f);
        }
        AstKind::Flwor { clauses, return_expr } => {
            for clause in clauses {
                match &clause.kind {
                    ClauseKind::For { expr, .. } | ClauseKind::Let { expr, .. } => {
                        visit_dyn(expr, f)
                    }
                    ClauseKind::Where(expr) => visit_dyn(expr, f),
                    ClauseKind::GroupBy(keys) => {
                        for key in keys {
                            if let Some(expr) = &key.expr {
                                visit_dyn(expr, f);
                            }
                        }
                    }
                    ClauseKind::OrderBy { specs, .. } => {
                        for spec in specs {
                            visit_dyn(&spec.expr, f);
                        }
                    }
                    ClauseKind::Count(_) => {}
                }
            }
            visit_dyn(return_expr, f);
        }
    }
}

fn visit_dyn(ast: &Ast, f: &mut dyn FnMut(&Ast)) {
    visit(ast, &mut |a| f(a));
}
