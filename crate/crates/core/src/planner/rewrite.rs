//! Aggregate pushdown for group-by clauses.
//!
//! After a group-by, a non-grouping variable normally holds the
//! concatenation of its cells across the group. When every later reference
//! to that variable is `count($v)`/`sum($v)`/`avg($v)`/`min($v)`/`max($v)`,
//! the group-by computes those scalars per group instead of materializing
//! the list, and the call sites become reads of hidden aggregate columns.
//! Variables never referenced again are dropped outright. Skipping this
//! rewrite is always correct; applying it never changes results.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::plan::*;
use super::{for_each_child, for_each_child_mut, group_output_columns};

pub fn rewrite_aggregate_pushdown(plan: &Arc<PlanNode>) -> Arc<PlanNode> {
    let mut kind = plan.kind.clone();
    match &mut kind {
        PlanKind::Flwor(flwor) => rewrite_flwor(flwor),
        other => {
            for_each_child_mut(other, &mut |child| *child = rewrite_aggregate_pushdown(child));
        }
    }
    Arc::new(PlanNode { kind, mode: plan.mode, span: plan.span })
}

fn rewrite_flwor(flwor: &mut FlworPlan) {
    // Nested plans first, so inner FLWORs are already in pushed-down form.
    for clause in &mut flwor.clauses {
        match &mut clause.op {
            ClauseOp::For { expr, .. } | ClauseOp::Let { expr, .. } => {
                *expr = rewrite_aggregate_pushdown(expr);
            }
            ClauseOp::Where(pred) => *pred = rewrite_aggregate_pushdown(pred),
            ClauseOp::GroupBy { .. } | ClauseOp::OrderBy { .. } | ClauseOp::Count(_) => {}
        }
    }
    flwor.return_expr = rewrite_aggregate_pushdown(&flwor.return_expr);

    // Right to left, so a later group-by's drop decisions are visible when
    // an earlier one asks whether a variable is still used.
    for g in (0..flwor.clauses.len()).rev() {
        let ClauseOp::GroupBy { keys, nongroup } = &flwor.clauses[g].op else { continue };
        let keys = keys.clone();
        let mut new_specs = Vec::with_capacity(nongroup.len());
        let mut pending_subst: Vec<(Arc<str>, BTreeMap<AggKind, Arc<str>>)> = Vec::new();
        for spec in nongroup.clone() {
            let (tail, ret) = (&flwor.clauses[g + 1..], &flwor.return_expr);
            let usage = usage_in_tail(&spec.var, tail, ret);
            let action = match usage {
                Usage::Unused => GroupAction::Drop,
                Usage::Raw => GroupAction::Collect,
                Usage::AggOnly(kinds) => {
                    let mapping: BTreeMap<AggKind, Arc<str>> = kinds
                        .into_iter()
                        .map(|k| (k, Arc::from(format!("#{}_{}", k.name(), spec.var))))
                        .collect();
                    pending_subst.push((spec.var.clone(), mapping.clone()));
                    GroupAction::Aggregate(mapping.into_iter().collect())
                }
            };
            new_specs.push(NonGroupSpec { var: spec.var, action });
        }
        for (var, mapping) in pending_subst {
            let (_, tail) = flwor.clauses.split_at_mut(g + 1);
            substitute_in_tail(&var, &mapping, tail, &mut flwor.return_expr);
        }
        flwor.clauses[g].op = ClauseOp::GroupBy { keys, nongroup: new_specs };
    }

    rethread_columns(&mut flwor.clauses);
}

/// Recompute the statically known column set after each clause.
fn rethread_columns(clauses: &mut [ClausePlan]) {
    let mut cols: Vec<Arc<str>> = Vec::new();
    for clause in clauses {
        match &clause.op {
            ClauseOp::For { var, .. } | ClauseOp::Let { var, .. } | ClauseOp::Count(var) => {
                cols.retain(|c| c != var);
                cols.push(var.clone());
            }
            ClauseOp::Where(_) => {}
            ClauseOp::GroupBy { keys, nongroup } => {
                cols = group_output_columns(keys, nongroup);
            }
            ClauseOp::OrderBy { drop, .. } => {
                cols.retain(|c| !drop.contains(c));
            }
        }
        clause.out_columns = Arc::new(cols.clone());
    }
}

// ---------------------------------------------------------------------------
// Usage analysis
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Usage {
    Unused,
    AggOnly(std::collections::BTreeSet<AggKind>),
    Raw,
}

impl Usage {
    fn merge(self, other: Usage) -> Usage {
        use Usage::*;
        match (self, other) {
            (Raw, _) | (_, Raw) => Raw,
            (Unused, u) | (u, Unused) => u,
            (AggOnly(mut a), AggOnly(b)) => {
                a.extend(b);
                AggOnly(a)
            }
        }
    }
}

/// How `var` is used in the clauses after a group-by and the return
/// expression, honoring shadowing: a for/let rebinding the name ends its
/// visibility (references inside the rebinding expression still count).
fn usage_in_tail(var: &str, clauses: &[ClausePlan], ret: &Arc<PlanNode>) -> Usage {
    let mut usage = Usage::Unused;
    for clause in clauses {
        match &clause.op {
            ClauseOp::For { var: v, expr, .. } | ClauseOp::Let { var: v, expr, .. } => {
                usage = usage.merge(usage_in_plan(var, expr));
                if v.as_ref() == var {
                    return usage; // shadowed from here on
                }
            }
            ClauseOp::Where(pred) => usage = usage.merge(usage_in_plan(var, pred)),
            ClauseOp::GroupBy { keys, nongroup } => {
                if keys.iter().any(|k| k.as_ref() == var) {
                    return Usage::Raw;
                }
                if let Some(spec) = nongroup.iter().find(|s| s.var.as_ref() == var) {
                    // A later group-by that still collects or aggregates the
                    // variable needs the actual items.
                    return match spec.action {
                        GroupAction::Drop => usage,
                        _ => Usage::Raw,
                    };
                }
            }
            ClauseOp::OrderBy { specs, .. } => {
                if specs.iter().any(|s| s.var.as_ref() == var) {
                    return Usage::Raw;
                }
            }
            ClauseOp::Count(v) => {
                if v.as_ref() == var {
                    return usage;
                }
            }
        }
    }
    usage.merge(usage_in_plan(var, ret))
}

fn usage_in_plan(var: &str, node: &Arc<PlanNode>) -> Usage {
    match &node.kind {
        PlanKind::VarRef(name) => {
            if name.as_ref() == var {
                Usage::Raw
            } else {
                Usage::Unused
            }
        }
        PlanKind::Aggregate { agg, input } => {
            if matches!(&input.kind, PlanKind::VarRef(name) if name.as_ref() == var) {
                Usage::AggOnly([*agg].into_iter().collect())
            } else {
                usage_in_plan(var, input)
            }
        }
        PlanKind::Some { var: v, source, pred } => {
            let mut usage = usage_in_plan(var, source);
            if v.as_ref() != var {
                usage = usage.merge(usage_in_plan(var, pred));
            }
            usage
        }
        PlanKind::Flwor(flwor) => {
            let mut usage = Usage::Unused;
            for clause in &flwor.clauses {
                match &clause.op {
                    ClauseOp::For { var: v, expr, .. } | ClauseOp::Let { var: v, expr, .. } => {
                        usage = usage.merge(usage_in_plan(var, expr));
                        if v.as_ref() == var {
                            return usage;
                        }
                    }
                    ClauseOp::Where(pred) => usage = usage.merge(usage_in_plan(var, pred)),
                    ClauseOp::GroupBy { .. } | ClauseOp::OrderBy { .. } => {}
                    ClauseOp::Count(v) => {
                        if v.as_ref() == var {
                            return usage;
                        }
                    }
                }
            }
            usage.merge(usage_in_plan(var, &flwor.return_expr))
        }
        kind => {
            let mut usage = Usage::Unused;
            for_each_child(kind, &mut |child| {
                usage = usage.clone().merge(usage_in_plan(var, child));
            });
            usage
        }
    }
}

// ---------------------------------------------------------------------------
// Substitution
// ---------------------------------------------------------------------------

fn substitute_in_tail(
    var: &str,
    mapping: &BTreeMap<AggKind, Arc<str>>,
    clauses: &mut [ClausePlan],
    ret: &mut Arc<PlanNode>,
) {
    for clause in clauses {
        match &mut clause.op {
            ClauseOp::For { var: v, expr, .. } | ClauseOp::Let { var: v, expr, .. } => {
                *expr = substitute(var, mapping, expr);
                if v.as_ref() == var {
                    return;
                }
            }
            ClauseOp::Where(pred) => *pred = substitute(var, mapping, pred),
            ClauseOp::GroupBy { .. } | ClauseOp::OrderBy { .. } => {}
            ClauseOp::Count(v) => {
                if v.as_ref() == var {
                    return;
                }
            }
        }
    }
    *ret = substitute(var, mapping, ret);
}

/// Replace `agg($var)` call sites with reads of the hidden aggregate
/// columns, honoring the same shadowing rules as the analysis.
fn substitute(
    var: &str,
    mapping: &BTreeMap<AggKind, Arc<str>>,
    node: &Arc<PlanNode>,
) -> Arc<PlanNode> {
    match &node.kind {
        PlanKind::Aggregate { agg, input }
            if matches!(&input.kind, PlanKind::VarRef(name) if name.as_ref() == var) =>
        {
            let col = mapping.get(agg).expect("analysis recorded every aggregate kind");
            Arc::new(PlanNode {
                kind: PlanKind::VarRef(col.clone()),
                mode: ExecutionMode::Local,
                span: node.span,
            })
        }
        PlanKind::Some { var: v, source, pred } => {
            let source = substitute(var, mapping, source);
            let pred = if v.as_ref() == var { pred.clone() } else { substitute(var, mapping, pred) };
            Arc::new(PlanNode {
                kind: PlanKind::Some { var: v.clone(), source, pred },
                mode: node.mode,
                span: node.span,
            })
        }
        PlanKind::Flwor(flwor) => {
            let mut flwor = flwor.clone();
            let mut shadowed = false;
            for clause in &mut flwor.clauses {
                if shadowed {
                    break;
                }
                match &mut clause.op {
                    ClauseOp::For { var: v, expr, .. } | ClauseOp::Let { var: v, expr, .. } => {
                        *expr = substitute(var, mapping, expr);
                        if v.as_ref() == var {
                            shadowed = true;
                        }
                    }
                    ClauseOp::Where(pred) => *pred = substitute(var, mapping, pred),
                    ClauseOp::GroupBy { .. } | ClauseOp::OrderBy { .. } => {}
                    ClauseOp::Count(v) => {
                        if v.as_ref() == var {
                            shadowed = true;
                        }
                    }
                }
            }
            if !shadowed {
                flwor.return_expr = substitute(var, mapping, &flwor.return_expr);
            }
            Arc::new(PlanNode { kind: PlanKind::Flwor(flwor), mode: node.mode, span: node.span })
        }
        _ => {
            let mut kind = node.kind.clone();
            for_each_child_mut(&mut kind, &mut |child| *child = substitute(var, mapping, child));
            Arc::new(PlanNode { kind, mode: node.mode, span: node.span })
        }
    }
}
