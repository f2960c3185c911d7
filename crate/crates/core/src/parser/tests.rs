use super::*;

fn parse(text: &str) -> Ast {
    parse_query(text).unwrap_or_else(|e| panic!("parse failed for {text:?}: {e}"))
}

fn parse_err(text: &str) -> Error {
    match parse_query(text) {
        Ok(_) => panic!("expected a parse error for {text:?}"),
        Err(e) => e,
    }
}

#[test]
fn range_literal() {
    let ast = parse("1 to 3");
    match ast.kind {
        AstKind::Range(lhs, rhs) => {
            assert!(matches!(lhs.kind, AstKind::Literal(Item::Integer(_))));
            assert!(matches!(rhs.kind, AstKind::Literal(Item::Integer(_))));
        }
        other => panic!("expected Range, got {other:?}"),
    }
}

#[test]
fn lookup_unbox_lookup_chain() {
    let ast = parse("for $payload in () return $payload.commits[].author");
    let AstKind::Flwor { return_expr, .. } = ast.kind else { panic!("expected flwor") };
    // Lookup(Unbox(Lookup(Var, "commits")), "author")
    let AstKind::ObjectLookup { input, key } = return_expr.kind else {
        panic!("expected lookup")
    };
    assert!(matches!(key, KeyExpr::Literal(k) if k.as_ref() == "author"));
    let AstKind::ArrayUnbox(inner) = input.kind else { panic!("expected unbox") };
    let AstKind::ObjectLookup { input, key } = inner.kind else { panic!("expected lookup") };
    assert!(matches!(key, KeyExpr::Literal(k) if k.as_ref() == "commits"));
    assert!(matches!(input.kind, AstKind::VarRef(v) if v.as_ref() == "payload"));
}

const TOP_COMMITTER: &str = r#"
let $events := json-file("events.jsonl")
for $e in $events         (: iterate over input :)
let $top-committer := (
  for $c in $e.commits[]  (: iterate over array :)
  group by $c.author
  stable order by count($c) descending
  return $c.author)[1]
return [$e.commits[][$$.author eq $top-committer]]
"#;

#[test]
fn top_committer_query_parses() {
    let ast = parse(TOP_COMMITTER);
    let AstKind::Flwor { clauses, return_expr } = ast.kind else { panic!("expected flwor") };
    assert_eq!(clauses.len(), 3); // let, for, let
    assert!(matches!(&clauses[0].kind, ClauseKind::Let { var, .. } if var.as_ref() == "events"));
    assert!(matches!(&clauses[1].kind, ClauseKind::For { var, .. } if var.as_ref() == "e"));
    // The binding of $top-committer is a positional predicate over a
    // parenthesized nested FLWOR.
    let ClauseKind::Let { var, expr } = &clauses[2].kind else { panic!("expected let") };
    assert_eq!(var.as_ref(), "top-committer");
    let AstKind::Predicate { input, pred } = &expr.kind else { panic!("expected predicate") };
    assert!(matches!(pred.kind, AstKind::Literal(Item::Integer(_))));
    let AstKind::Flwor { clauses: inner, .. } = &input.kind else { panic!("expected flwor") };
    assert!(matches!(&inner[0].kind, ClauseKind::For { .. }));
    assert!(matches!(&inner[1].kind, ClauseKind::GroupBy(keys) if keys.len() == 1 && keys[0].var.is_none()));
    assert!(matches!(&inner[2].kind, ClauseKind::OrderBy { stable: true, specs } if specs[0].descending));
    // return [$e.commits[][$$.author eq $top-committer]]
    let AstKind::ArrayCtor(Some(inner)) = return_expr.kind else { panic!("expected array") };
    assert!(matches!(inner.kind, AstKind::Predicate { .. }));
}

#[test]
fn group_by_forms() {
    let ast = parse("for $x in (1,2) group by $y := $x, $x return $y");
    let AstKind::Flwor { clauses, .. } = ast.kind else { panic!() };
    let ClauseKind::GroupBy(keys) = &clauses[1].kind else { panic!("expected group by") };
    assert_eq!(keys.len(), 2);
    assert_eq!(keys[0].var.as_deref(), Some("y"));
    assert!(keys[0].expr.is_some());
    assert_eq!(keys[1].var.as_deref(), Some("x"));
    assert!(keys[1].expr.is_none());
}

#[test]
fn precedence_ladder() {
    // Multiplication binds tighter than addition.
    let ast = parse("1 + 2 * 3");
    let AstKind::Arith { op: ArithOp::Add, rhs, .. } = ast.kind else { panic!() };
    assert!(matches!(rhs.kind, AstKind::Arith { op: ArithOp::Mul, .. }));
    // Comparison is looser than range.
    let ast = parse("1 to 3 eq 3");
    let AstKind::Compare { lhs, .. } = ast.kind else { panic!() };
    assert!(matches!(lhs.kind, AstKind::Range(..)));
    // not is looser than comparison: not 1 eq 2 == not (1 eq 2)
    let ast = parse("not 1 eq 2");
    let AstKind::Not(inner) = ast.kind else { panic!() };
    assert!(matches!(inner.kind, AstKind::Compare { .. }));
    // and is looser than not, or loosest.
    let ast = parse("not true and false or true");
    assert!(matches!(ast.kind, AstKind::Or(..)));
    // String concat sits between comparison and range.
    let ast = parse("\"a\" || \"b\" eq \"ab\"");
    let AstKind::Compare { lhs, .. } = ast.kind else { panic!() };
    assert!(matches!(lhs.kind, AstKind::StringConcat(..)));
    // Simple map binds tighter than unary minus.
    let ast = parse("-(1,2)!$$");
    assert!(matches!(ast.kind, AstKind::UnaryMinus(_)));
}

#[test]
fn bracket_disambiguation() {
    // Expression position: nested array constructor.
    let ast = parse("[[1]]");
    let AstKind::ArrayCtor(Some(inner)) = ast.kind else { panic!() };
    assert!(matches!(inner.kind, AstKind::ArrayCtor(Some(_))));
    // Postfix adjacent [[ ]]: array access.
    let ast = parse("for $a in () return $a[[1]]");
    let AstKind::Flwor { return_expr, .. } = ast.kind else { panic!() };
    assert!(matches!(return_expr.kind, AstKind::ArrayAccess { .. }));
    // Postfix with a space: predicate containing an array constructor.
    let ast = parse("for $a in () return $a[ [1] ]");
    let AstKind::Flwor { return_expr, .. } = ast.kind else { panic!() };
    let AstKind::Predicate { pred, .. } = return_expr.kind else { panic!() };
    assert!(matches!(pred.kind, AstKind::ArrayCtor(Some(_))));
    // Empty brackets: unbox.
    let ast = parse("for $a in () return $a[]");
    let AstKind::Flwor { return_expr, .. } = ast.kind else { panic!() };
    assert!(matches!(return_expr.kind, AstKind::ArrayUnbox(_)));
}

#[test]
fn lookup_key_forms() {
    parse("for $o in (), $k in () return ($o.key, $o.\"quoted key\", $o.$k, $o.($k || \"x\"))");
    // Keywords are fine as literal lookup keys and object keys.
    parse("for $o in () return $o.for");
    parse("{ for: 1, group: 2 }");
}

#[test]
fn object_constructor_key_forms() {
    let ast = parse("for $k in () return {\"a\": 1, b: 2, $k: 3, ($k || \"x\"): 4}");
    let AstKind::Flwor { return_expr, .. } = ast.kind else { panic!() };
    let AstKind::ObjectCtor(pairs) = return_expr.kind else { panic!() };
    assert_eq!(pairs.len(), 4);
    assert!(matches!(&pairs[0].0, KeyExpr::Literal(k) if k.as_ref() == "a"));
    assert!(matches!(&pairs[1].0, KeyExpr::Literal(k) if k.as_ref() == "b"));
    assert!(matches!(&pairs[2].0, KeyExpr::Computed(_)));
    assert!(matches!(&pairs[3].0, KeyExpr::Computed(_)));
}

#[test]
fn control_flow_expressions() {
    parse("if (1 eq 1) then 2 else 3");
    parse("switch (1) case 1 return \"one\" case 2 return \"two\" default return \"many\"");
    parse("switch (1) default return 0");
    parse("typeswitch (1) case integer return \"int\" case string* return \"strs\" default return \"other\"");
    parse("try { 1 div 0 } catch * { -1 }");
    parse("try { 1 div 0 } catch DIV_BY_ZERO | TYPE_ERROR { -1 } catch * { -2 }");
    parse("some $x in (1,2,3) satisfies $x gt 2");
    parse("some $x in (1,2), $y in (3,4) satisfies $x gt $y");
}

#[test]
fn type_expressions() {
    parse("\"42\" cast as integer");
    parse("() cast as integer?");
    parse("\"4x2\" castable as integer");
    parse("(1, \"a\") instance of integer*");
    parse("() instance of integer?");
    parse("(1,2) treat as decimal+");
    // Cast targets must be atomic and at most optional.
    assert_eq!(parse_err("1 cast as object").code, ErrorCode::Syntax);
    assert_eq!(parse_err("1 cast as integer*").code, ErrorCode::Syntax);
    assert_eq!(parse_err("1 instance of wibble").code, ErrorCode::Syntax);
}

#[test]
fn flwor_clause_suite() {
    parse("for $x in (1,2,3) where $x gt 1 count $c order by $x descending empty greatest return ($x, $c)");
    parse("for $x in (1,2), $y in (3,4) let $s := $x + $y, $d := $x - $y return $s * $d");
    parse("for $x in (1,2) group by $k := $x mod 2 order by $k empty least return count($x)");
    // count is a clause before a variable and a function elsewhere.
    parse("for $x in (1,2) count $c return count((1,2))");
}

#[test]
fn variable_resolution() {
    let err = parse_err("$nope");
    assert_eq!(err.code, ErrorCode::UnresolvedVariable);
    assert!(err.span.is_some());
    // for-binding is not visible in its own source expression.
    let err = parse_err("for $x in $x return 1");
    assert_eq!(err.code, ErrorCode::UnresolvedVariable);
    // ... but is visible in subsequent bindings.
    parse("for $x in (1,2), $y in $x return $y");
    // Context item needs a binding context.
    let err = parse_err("$$");
    assert_eq!(err.code, ErrorCode::UnresolvedVariable);
    parse("(1,2)[$$ gt 1]");
    parse("(1,2)!($$ + 1)");
    // The context item stays visible inside a nested FLWOR.
    parse("(1,2)[for $x in (1,2) return $$ gt $x]");
}

#[test]
fn syntax_errors_have_spans_and_expectations() {
    let err = parse_err("1 +");
    assert_eq!(err.code, ErrorCode::Syntax);
    assert!(err.span.is_some());
    let err = parse_err("for $x in (1,2) give $x");
    assert!(err.message.contains("expected a clause keyword"), "{}", err.message);
    let err = parse_err("{\"a\" 1}");
    assert!(err.message.contains("':'"), "{}", err.message);
    assert!(parse_query("(1,2").is_err());
    assert!(parse_query("").is_err());
}

#[test]
fn spans_lie_within_input() {
    let queries = [
        TOP_COMMITTER,
        "for $x in (1, 2, 2) group by $y := $x return {\"key\": $y, \"content\": [$x]}",
        "if (true) then {\"a\": [1, 2]} else (\"x\" || \"y\")",
    ];
    for text in queries {
        let ast = parse(text);
        ast::visit(&ast, &mut |node| {
            let end = node.span.offset as usize + node.span.length as usize;
            assert!(end <= text.len(), "span {:?} outside input", node.span);
            assert!(node.span.line >= 1 && node.span.column >= 1);
        });
    }
}

#[test]
fn deep_nesting_is_an_error_not_a_crash() {
    let deep = "(".repeat(5_000) + "1" + &")".repeat(5_000);
    let err = parse_err(&deep);
    assert_eq!(err.code, ErrorCode::Syntax);
}

mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        // Totality: any input produces an Ast or a syntax-class error.
        #[test]
        fn parser_never_panics(input in ".*") {
            match parse_query(&input) {
                Ok(_) => {}
                Err(e) => {
                    prop_assert!(matches!(
                        e.code,
                        ErrorCode::Syntax | ErrorCode::UnresolvedVariable
                    ));
                }
            }
        }

        #[test]
        fn parser_never_panics_on_query_like_soup(
            input in "[ a-z0-9$(){}\\[\\],.!\"*+?:=|-]{0,60}"
        ) {
            let _ = parse_query(&input);
        }
    }
}
