//! Query text → AST.
//!
//! Recursive descent with one function per precedence level:
//! or > and > not > comparison > string concat > range > additive >
//! multiplicative > instance of/treat/castable/cast > unary > simple map >
//! postfix. Variable references are resolved lexically here; an unknown
//! variable is a parse-phase error.

mod ast;
mod json;
mod lexer;

pub use ast::{visit, Ast, AstKind, CatchFilter, Clause, ClauseKind, GroupKey, KeyExpr, OrderSpec};
pub use json::parse_json_line;
pub use lexer::{tokenize, Token, TokenKind};

use std::sync::Arc;

use crate::error::{Error, ErrorCode, Result, Span};
use crate::jdm::{ArithOp, CmpOp, Item, ItemType, Occurrence, SequenceType};

const MAX_DEPTH: u32 = 200;

pub fn parse_query(text: &str) -> Result<Ast> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, pos: 0, scopes: Vec::new(), depth: 0 };
    let ast = parser.parse_expr()?;
    parser.expect_eof()?;
    Ok(ast)
}

struct ScopeFrame {
    vars: Vec<Arc<str>>,
    context_item: bool,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    scopes: Vec<ScopeFrame>,
    depth: u32,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn peek2(&self) -> &Token {
        &self.tokens[(self.pos + 1).min(self.tokens.len() - 1)]
    }

    fn bump(&mut self) -> Token {
        let tok = self.tokens[self.pos.min(self.tokens.len() - 1)].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        tok
    }

    fn at(&self, kind: &TokenKind) -> bool {
        &self.peek().kind == kind
    }

    fn at_ident(&self, word: &str) -> bool {
        self.peek().is_ident(word)
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.at(kind) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_ident(&mut self, word: &str) -> bool {
        if self.at_ident(word) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: &TokenKind) -> Result<Token> {
        if self.at(kind) {
            Ok(self.bump())
        } else {
            Err(self.error_at(format!(
                "expected {}, found {}",
                kind.describe(),
                self.peek().kind.describe()
            )))
        }
    }

    fn expect_ident(&mut self, word: &str) -> Result<Token> {
        if self.at_ident(word) {
            Ok(self.bump())
        } else {
            Err(self.error_at(format!(
                "expected '{}', found {}",
                word,
                self.peek().kind.describe()
            )))
        }
    }

    fn expect_eof(&mut self) -> Result<()> {
        if self.at(&TokenKind::Eof) {
            Ok(())
        } else {
            Err(self.error_at(format!("unexpected {}", self.peek().kind.describe())))
        }
    }

    fn error_at(&self, message: impl Into<String>) -> Error {
        Error::new(ErrorCode::Syntax, message).with_span(self.peek().span)
    }

    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            Err(self.error_at("expression is nested too deeply"))
        } else {
            Ok(())
        }
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    // -- scopes ------------------------------------------------------------

    fn push_scope(&mut self, context_item: bool) {
        self.scopes.push(ScopeFrame { vars: Vec::new(), context_item });
    }

    fn pop_scope(&mut self) {
        self.scopes.pop();
    }

    fn bind_var(&mut self, name: Arc<str>) {
        self.scopes.last_mut().expect("a scope frame").vars.push(name);
    }

    fn var_in_scope(&self, name: &str) -> bool {
        self.scopes.iter().any(|frame| frame.vars.iter().any(|v| v.as_ref() == name))
    }

    fn context_item_in_scope(&self) -> bool {
        self.scopes.iter().any(|frame| frame.context_item)
    }

    // -- expression levels ---------------------------------------------------

    /// Comma-level expression.
    fn parse_expr(&mut self) -> Result<Ast> {
        let first = self.parse_expr_single()?;
        if !self.at(&TokenKind::Comma) {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat(&TokenKind::Comma) {
            items.push(self.parse_expr_single()?);
        }
        let span = items[0].span.to(items.last().unwrap().span);
        Ok(Ast::new(AstKind::Concat(items), span))
    }

    fn parse_expr_single(&mut self) -> Result<Ast> {
        self.enter()?;
        let result = self.parse_expr_single_inner();
        self.leave();
        result
    }

    fn parse_expr_single_inner(&mut self) -> Result<Ast> {
        if let TokenKind::Ident(word) = &self.peek().kind {
            match word.as_str() {
                "for" | "let" if matches!(self.peek2().kind, TokenKind::Var(_)) => {
                    return self.parse_flwor()
                }
                "some" if matches!(self.peek2().kind, TokenKind::Var(_)) => {
                    return self.parse_some()
                }
                "if" if self.peek2().kind == TokenKind::LParen => return self.parse_if(),
                "switch" if self.peek2().kind == TokenKind::LParen => return self.parse_switch(),
                "typeswitch" if self.peek2().kind == TokenKind::LParen => {
                    return self.parse_typeswitch()
                }
                "try" if self.peek2().kind == TokenKind::LBrace => return self.parse_try(),
                _ => {}
            }
        }
        self.parse_or()
    }

    fn parse_or(&mut self) -> Result<Ast> {
        let mut lhs = self.parse_and()?;
        while self.eat_ident("or") {
            let rhs = self.parse_and()?;
            let span = lhs.span.to(rhs.span);
            lhs = Ast::new(AstKind::Or(Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Ast> {
        let mut lhs = self.parse_not()?;
        while self.eat_ident("and") {
            let rhs = self.parse_not()?;
            let span = lhs.span.to(rhs.span);
            lhs = Ast::new(AstKind::And(Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn parse_not(&mut self) -> Result<Ast> {
        if self.at_ident("not") && self.peek2().kind != TokenKind::LParen {
            let start = self.bump().span;
            let inner = self.parse_not()?;
            let span = start.to(inner.span);
            return Ok(Ast::new(AstKind::Not(Box::new(inner)), span));
        }
        self.parse_comparison()
    }

    fn parse_comparison(&mut self) -> Result<Ast> {
        let lhs = self.parse_string_concat()?;
        let op = match &self.peek().kind {
            TokenKind::Ident(w) => match w.as_str() {
                "eq" => Some(CmpOp::Eq),
                "ne" => Some(CmpOp::Ne),
                "lt" => Some(CmpOp::Lt),
                "le" => Some(CmpOp::Le),
                "gt" => Some(CmpOp::Gt),
                "ge" => Some(CmpOp::Ge),
                _ => None,
            },
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let rhs = self.parse_string_concat()?;
            let span = lhs.span.to(rhs.span);
            Ok(Ast::new(AstKind::Compare { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span))
        } else {
            Ok(lhs)
        }
    }

    fn parse_string_concat(&mut self) -> Result<Ast> {
        let mut lhs = self.parse_range()?;
        while self.eat(&TokenKind::Concat) {
            let rhs = self.parse_range()?;
            let span = lhs.span.to(rhs.span);
            lhs = Ast::new(AstKind::StringConcat(Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn parse_range(&mut self) -> Result<Ast> {
        let lhs = self.parse_additive()?;
        if self.eat_ident("to") {
            let rhs = self.parse_additive()?;
            let span = lhs.span.to(rhs.span);
            Ok(Ast::new(AstKind::Range(Box::new(lhs), Box::new(rhs)), span))
        } else {
            Ok(lhs)
        }
    }

    fn parse_additive(&mut self) -> Result<Ast> {
        let mut lhs = self.parse_multiplicative()?;
        loop {
            let op = if self.at(&TokenKind::Plus) {
                ArithOp::Add
            } else if self.at(&TokenKind::Minus) {
                ArithOp::Sub
            } else {
                break;
            };
            self.bump();
            let rhs = self.parse_multiplicative()?;
            let span = lhs.span.to(rhs.span);
            lhs = Ast::new(AstKind::Arith { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span);
        }
        Ok(lhs)
    }

    fn parse_multiplicative(&mut self) -> Result<Ast> {
        let mut lhs = self.parse_type_ops()?;
        loop {
            let op = if self.at(&TokenKind::Star) {
                ArithOp::Mul
            } else if self.at_ident("div") {
                ArithOp::Div
            } else if self.at_ident("idiv") {
                ArithOp::IntDiv
            } else if self.at_ident("mod") {
                ArithOp::Mod
            } else {
                break;
            };
            self.bump();
            let rhs = self.parse_type_ops()?;
            let span = lhs.span.to(rhs.span);
            lhs = Ast::new(AstKind::Arith { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span);
        }
        Ok(lhs)
    }

    // instance of / treat as / castable as / cast as, tightest first.
    fn parse_type_ops(&mut self) -> Result<Ast> {
        let mut expr = self.parse_unary()?;
        loop {
            if self.at_ident("instance") && self.peek2().is_ident("of") {
                self.bump();
                self.bump();
                let ty = self.parse_sequence_type()?;
                let span = expr.span.to(self.tokens[self.pos - 1].span);
                expr = Ast::new(AstKind::InstanceOf { expr: Box::new(expr), ty }, span);
            } else if self.at_ident("treat") && self.peek2().is_ident("as") {
                self.bump();
                self.bump();
                let ty = self.parse_sequence_type()?;
                let span = expr.span.to(self.tokens[self.pos - 1].span);
                expr = Ast::new(AstKind::Treat { expr: Box::new(expr), ty }, span);
            } else if self.at_ident("castable") && self.peek2().is_ident("as") {
                self.bump();
                self.bump();
                let ty = self.parse_single_type()?;
                let span = expr.span.to(self.tokens[self.pos - 1].span);
                expr = Ast::new(AstKind::Castable { expr: Box::new(expr), ty }, span);
            } else if self.at_ident("cast") && self.peek2().is_ident("as") {
                self.bump();
                self.bump();
                let ty = self.parse_single_type()?;
                let span = expr.span.to(self.tokens[self.pos - 1].span);
                expr = Ast::new(AstKind::Cast { expr: Box::new(expr), ty }, span);
            } else {
                return Ok(expr);
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Ast> {
        if self.at(&TokenKind::Minus) {
            let start = self.bump().span;
            let inner = self.parse_unary()?;
            let span = start.to(inner.span);
            return Ok(Ast::new(AstKind::UnaryMinus(Box::new(inner)), span));
        }
        if self.at(&TokenKind::Plus) {
            self.bump();
            return self.parse_unary();
        }
        self.parse_simple_map()
    }

    fn parse_simple_map(&mut self) -> Result<Ast> {
        let mut lhs = self.parse_postfix()?;
        while self.eat(&TokenKind::Bang) {
            self.push_scope(true);
            let rhs = self.parse_postfix();
            self.pop_scope();
            let rhs = rhs?;
            let span = lhs.span.to(rhs.span);
            lhs = Ast::new(
                AstKind::SimpleMap { input: Box::new(lhs), mapper: Box::new(rhs) },
                span,
            );
        }
        Ok(lhs)
    }

    fn parse_postfix(&mut self) -> Result<Ast> {
        self.enter()?;
        let result = self.parse_postfix_inner();
        self.leave();
        result
    }

    fn parse_postfix_inner(&mut self) -> Result<Ast> {
        let mut expr = self.parse_primary()?;
        loop {
            match &self.peek().kind {
                TokenKind::LBracket => {
                    let open = self.bump();
                    if self.at(&TokenKind::LBracket)
                        && self.peek().span.offset == open.end_offset()
                    {
                        // $a[[i]] — array element access
                        self.bump();
                        let index = self.parse_expr()?;
                        self.expect(&TokenKind::RBracket)?;
                        let close = self.expect(&TokenKind::RBracket)?;
                        let span = expr.span.to(close.span);
                        expr = Ast::new(
                            AstKind::ArrayAccess { input: Box::new(expr), index: Box::new(index) },
                            span,
                        );
                    } else if self.at(&TokenKind::RBracket) {
                        // $a[] — array unbox
                        let close = self.bump();
                        let span = expr.span.to(close.span);
                        expr = Ast::new(AstKind::ArrayUnbox(Box::new(expr)), span);
                    } else {
                        self.push_scope(true);
                        let pred = self.parse_expr();
                        self.pop_scope();
                        let pred = pred?;
                        let close = self.expect(&TokenKind::RBracket)?;
                        let span = expr.span.to(close.span);
                        expr = Ast::new(
                            AstKind::Predicate { input: Box::new(expr), pred: Box::new(pred) },
                            span,
                        );
                    }
                }
                TokenKind::Dot => {
                    self.bump();
                    let key = match self.peek().kind.clone() {
                        TokenKind::Ident(name) => {
                            self.bump();
                            KeyExpr::Literal(Arc::from(name.as_str()))
                        }
                        TokenKind::StringLit(s) => {
                            self.bump();
                            KeyExpr::Literal(Arc::from(s.as_str()))
                        }
                        TokenKind::Var(_) => {
                            let var = self.parse_var_ref()?;
                            KeyExpr::Computed(Box::new(var))
                        }
                        TokenKind::LParen => {
                            self.bump();
                            let inner = self.parse_expr()?;
                            self.expect(&TokenKind::RParen)?;
                            KeyExpr::Computed(Box::new(inner))
                        }
                        other => {
                            return Err(self.error_at(format!(
                                "expected a lookup key after '.', found {}",
                                other.describe()
                            )))
                        }
                    };
                    let end = self.tokens[self.pos - 1].span;
                    let span = expr.span.to(end);
                    expr = Ast::new(AstKind::ObjectLookup { input: Box::new(expr), key }, span);
                }
                _ => return Ok(expr),
            }
        }
    }

    fn parse_var_ref(&mut self) -> Result<Ast> {
        let tok = self.bump();
        let TokenKind::Var(name) = tok.kind else { unreachable!() };
        if !self.var_in_scope(&name) {
            return Err(Error::new(
                ErrorCode::UnresolvedVariable,
                format!("variable ${name} is not in scope"),
            )
            .with_span(tok.span));
        }
        Ok(Ast::new(AstKind::VarRef(Arc::from(name.as_str())), tok.span))
    }

    fn parse_primary(&mut self) -> Result<Ast> {
        let tok = self.peek().clone();
        match &tok.kind {
            TokenKind::IntegerLit(v) => {
                self.bump();
                Ok(Ast::new(AstKind::Literal(Item::integer(v.clone())), tok.span))
            }
            TokenKind::DecimalLit(v) => {
                self.bump();
                Ok(Ast::new(
                    AstKind::Literal(Item::decimal(crate::jdm::cap_decimal(v.clone()))),
                    tok.span,
                ))
            }
            TokenKind::DoubleLit(v) => {
                self.bump();
                Ok(Ast::new(AstKind::Literal(Item::Double(*v)), tok.span))
            }
            TokenKind::StringLit(s) => {
                self.bump();
                Ok(Ast::new(AstKind::Literal(Item::string(s)), tok.span))
            }
            TokenKind::Var(_) => self.parse_var_ref(),
            TokenKind::ContextItem => {
                self.bump();
                if !self.context_item_in_scope() {
                    return Err(Error::new(
                        ErrorCode::UnresolvedVariable,
                        "context item $$ is not bound here",
                    )
                    .with_span(tok.span));
                }
                Ok(Ast::new(AstKind::ContextItem, tok.span))
            }
            TokenKind::LParen => {
                self.bump();
                if self.at(&TokenKind::RParen) {
                    let close = self.bump();
                    return Ok(Ast::new(AstKind::EmptySequence, tok.span.to(close.span)));
                }
                let inner = self.parse_expr()?;
                let close = self.expect(&TokenKind::RParen)?;
                Ok(Ast { span: tok.span.to(close.span), ..inner })
            }
            TokenKind::LBrace => self.parse_object_ctor(),
            TokenKind::LBracket => {
                self.bump();
                if self.at(&TokenKind::RBracket) {
                    let close = self.bump();
                    return Ok(Ast::new(AstKind::ArrayCtor(None), tok.span.to(close.span)));
                }
                let inner = self.parse_expr()?;
                let close = self.expect(&TokenKind::RBracket)?;
                Ok(Ast::new(AstKind::ArrayCtor(Some(Box::new(inner))), tok.span.to(close.span)))
            }
            TokenKind::Ident(word) => match word.as_str() {
                "true" => {
                    self.bump();
                    Ok(Ast::new(AstKind::Literal(Item::Boolean(true)), tok.span))
                }
                "false" => {
                    self.bump();
                    Ok(Ast::new(AstKind::Literal(Item::Boolean(false)), tok.span))
                }
                "null" => {
                    self.bump();
                    Ok(Ast::new(AstKind::Literal(Item::Null), tok.span))
                }
                _ if self.peek2().kind == TokenKind::LParen => self.parse_function_call(),
                other => Err(self.error_at(format!("unexpected identifier '{other}'"))),
            },
            other => Err(self.error_at(format!("unexpected {}", other.describe()))),
        }
    }

    fn parse_function_call(&mut self) -> Result<Ast> {
        let name_tok = self.bump();
        let TokenKind::Ident(name) = name_tok.kind else { unreachable!() };
        self.expect(&TokenKind::LParen)?;
        let mut args = Vec::new();
        if !self.at(&TokenKind::RParen) {
            loop {
                args.push(self.parse_expr_single()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        let close = self.expect(&TokenKind::RParen)?;
        Ok(Ast::new(AstKind::FunctionCall { name, args }, name_tok.span.to(close.span)))
    }

    fn parse_object_ctor(&mut self) -> Result<Ast> {
        let open = self.expect(&TokenKind::LBrace)?;
        let mut pairs = Vec::new();
        if !self.at(&TokenKind::RBrace) {
            loop {
                let key = match self.peek().kind.clone() {
                    TokenKind::StringLit(s) => {
                        self.bump();
                        KeyExpr::Literal(Arc::from(s.as_str()))
                    }
                    TokenKind::Ident(name) => {
                        self.bump();
                        KeyExpr::Literal(Arc::from(name.as_str()))
                    }
                    TokenKind::Var(_) => KeyExpr::Computed(Box::new(self.parse_var_ref()?)),
                    TokenKind::LParen => {
                        self.bump();
                        let inner = self.parse_expr()?;
                        self.expect(&TokenKind::RParen)?;
                        KeyExpr::Computed(Box::new(inner))
                    }
                    other => {
                        return Err(self.error_at(format!(
                            "expected an object key, found {}",
                            other.describe()
                        )))
                    }
                };
                self.expect(&TokenKind::Colon)?;
                let value = self.parse_expr_single()?;
                pairs.push((key, value));
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        let close = self.expect(&TokenKind::RBrace)?;
        Ok(Ast::new(AstKind::ObjectCtor(pairs), open.span.to(close.span)))
    }

    fn parse_if(&mut self) -> Result<Ast> {
        let start = self.expect_ident("if")?.span;
        self.expect(&TokenKind::LParen)?;
        let cond = self.parse_expr()?;
        self.expect(&TokenKind::RParen)?;
        self.expect_ident("then")?;
        let then = self.parse_expr_single()?;
        self.expect_ident("else")?;
        let els = self.parse_expr_single()?;
        let span = start.to(els.span);
        Ok(Ast::new(
            AstKind::If { cond: Box::new(cond), then: Box::new(then), els: Box::new(els) },
            span,
        ))
    }

    fn parse_switch(&mut self) -> Result<Ast> {
        let start = self.expect_ident("switch")?.span;
        self.expect(&TokenKind::LParen)?;
        let input = self.parse_expr()?;
        self.expect(&TokenKind::RParen)?;
        let mut cases = Vec::new();
        while self.at_ident("case") {
            self.bump();
            let operand = self.parse_expr_single()?;
            self.expect_ident("return")?;
            let body = self.parse_expr_single()?;
            cases.push((operand, body));
        }
        if cases.is_empty() && !self.at_ident("default") {
            return Err(self.error_at("switch requires at least one case or a default"));
        }
        self.expect_ident("default")?;
        self.expect_ident("return")?;
        let default = self.parse_expr_single()?;
        let span = start.to(default.span);
        Ok(Ast::new(
            AstKind::Switch { input: Box::new(input), cases, default: Box::new(default) },
            span,
        ))
    }

    fn parse_typeswitch(&mut self) -> Result<Ast> {
        let start = self.expect_ident("typeswitch")?.span;
        self.expect(&TokenKind::LParen)?;
        let input = self.parse_expr()?;
        self.expect(&TokenKind::RParen)?;
        let mut cases = Vec::new();
        while self.at_ident("case") {
            self.bump();
            let ty = self.parse_sequence_type()?;
            self.expect_ident("return")?;
            let body = self.parse_expr_single()?;
            cases.push((ty, body));
        }
        self.expect_ident("default")?;
        self.expect_ident("return")?;
        let default = self.parse_expr_single()?;
        let span = start.to(default.span);
        Ok(Ast::new(
            AstKind::TypeSwitch { input: Box::new(input), cases, default: Box::new(default) },
            span,
        ))
    }

    fn parse_try(&mut self) -> Result<Ast> {
        let start = self.expect_ident("try")?.span;
        self.expect(&TokenKind::LBrace)?;
        let body = self.parse_expr()?;
        self.expect(&TokenKind::RBrace)?;
        let mut catches = Vec::new();
        loop {
            self.expect_ident("catch")?;
            let filter = if self.eat(&TokenKind::Star) {
                CatchFilter::All
            } else {
                let mut codes = Vec::new();
                loop {
                    let tok = self.bump();
                    match tok.kind {
                        TokenKind::Ident(name) => codes.push(name),
                        other => {
                            return Err(self.error_at(format!(
                                "expected an error name or '*' after catch, found {}",
                                other.describe()
                            )))
                        }
                    }
                    if !self.eat(&TokenKind::Bar) {
                        break;
                    }
                }
                CatchFilter::Codes(codes)
            };
            self.expect(&TokenKind::LBrace)?;
            let handler = self.parse_expr()?;
            self.expect(&TokenKind::RBrace)?;
            catches.push((filter, handler));
            if !self.at_ident("catch") {
                break;
            }
        }
        let span = start.to(self.tokens[self.pos - 1].span);
        Ok(Ast::new(AstKind::TryCatch { body: Box::new(body), catches }, span))
    }

    fn parse_some(&mut self) -> Result<Ast> {
        let start = self.expect_ident("some")?.span;
        self.push_scope(false);
        let result = self.parse_some_bindings(start);
        self.pop_scope();
        result
    }

    fn parse_some_bindings(&mut self, start: Span) -> Result<Ast> {
        let var_tok = self.bump();
        let TokenKind::Var(name) = var_tok.kind else {
            return Err(self.error_at("expected a variable after 'some'"));
        };
        self.expect_ident("in")?;
        let source = self.parse_expr_single()?;
        let var: Arc<str> = Arc::from(name.as_str());
        self.bind_var(var.clone());
        let pred = if self.eat(&TokenKind::Comma) {
            self.parse_some_bindings(start)?
        } else {
            self.expect_ident("satisfies")?;
            self.parse_expr_single()?
        };
        let span = start.to(pred.span);
        Ok(Ast::new(
            AstKind::Some { var, source: Box::new(source), pred: Box::new(pred) },
            span,
        ))
    }

    // -- FLWOR ---------------------------------------------------------------

    fn parse_flwor(&mut self) -> Result<Ast> {
        let start = self.peek().span;
        self.push_scope(false);
        let result = self.parse_flwor_clauses(start);
        self.pop_scope();
        result
    }

    fn parse_flwor_clauses(&mut self, start: Span) -> Result<Ast> {
        let mut clauses: Vec<Clause> = Vec::new();
        loop {
            let clause_start = self.peek().span;
            if self.eat_ident("for") {
                loop {
                    let tok = self.bump();
                    let TokenKind::Var(name) = tok.kind else {
                        return Err(Error::new(
                            ErrorCode::Syntax,
                            "expected a variable in the for clause",
                        )
                        .with_span(tok.span));
                    };
                    self.expect_ident("in")?;
                    let expr = self.parse_expr_single()?;
                    let var: Arc<str> = Arc::from(name.as_str());
                    self.bind_var(var.clone());
                    clauses.push(Clause {
                        kind: ClauseKind::For { var, expr },
                        span: clause_start.to(self.tokens[self.pos - 1].span),
                    });
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
            } else if self.eat_ident("let") {
                loop {
                    let tok = self.bump();
                    let TokenKind::Var(name) = tok.kind else {
                        return Err(Error::new(
                            ErrorCode::Syntax,
                            "expected a variable in the let clause",
                        )
                        .with_span(tok.span));
                    };
                    self.expect(&TokenKind::ColonEq)?;
                    let expr = self.parse_expr_single()?;
                    let var: Arc<str> = Arc::from(name.as_str());
                    self.bind_var(var.clone());
                    clauses.push(Clause {
                        kind: ClauseKind::Let { var, expr },
                        span: clause_start.to(self.tokens[self.pos - 1].span),
                    });
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
            } else if self.at_ident("where") {
                self.bump();
                let pred = self.parse_expr_single()?;
                clauses.push(Clause {
                    kind: ClauseKind::Where(pred),
                    span: clause_start.to(self.tokens[self.pos - 1].span),
                });
            } else if self.at_ident("group") {
                self.bump();
                self.expect_ident("by")?;
                let mut keys = Vec::new();
                loop {
                    let key_start = self.peek().span;
                    let key = if matches!(self.peek().kind, TokenKind::Var(_))
                        && self.peek2().kind == TokenKind::ColonEq
                    {
                        let tok = self.bump();
                        let TokenKind::Var(name) = tok.kind else { unreachable!() };
                        self.bump(); // :=
                        let expr = self.parse_expr_single()?;
                        let var: Arc<str> = Arc::from(name.as_str());
                        self.bind_var(var.clone());
                        GroupKey {
                            var: Some(var),
                            expr: Some(expr),
                            span: key_start.to(self.tokens[self.pos - 1].span),
                        }
                    } else {
                        let expr = self.parse_expr_single()?;
                        let span = key_start.to(self.tokens[self.pos - 1].span);
                        match &expr.kind {
                            AstKind::VarRef(name) => {
                                GroupKey { var: Some(name.clone()), expr: None, span }
                            }
                            // Expression shorthand: group by the value
                            // without binding a visible variable.
                            _ => GroupKey { var: None, expr: Some(expr), span },
                        }
                    };
                    keys.push(key);
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                clauses.push(Clause {
                    kind: ClauseKind::GroupBy(keys),
                    span: clause_start.to(self.tokens[self.pos - 1].span),
                });
            } else if self.at_ident("order") || (self.at_ident("stable") && self.peek2().is_ident("order"))
            {
                let stable = self.eat_ident("stable");
                self.expect_ident("order")?;
                self.expect_ident("by")?;
                let mut specs = Vec::new();
                loop {
                    let expr = self.parse_expr_single()?;
                    let mut descending = false;
                    if self.eat_ident("ascending") {
                    } else if self.eat_ident("descending") {
                        descending = true;
                    }
                    let mut empty_greatest = false;
                    if self.eat_ident("empty") {
                        if self.eat_ident("greatest") {
                            empty_greatest = true;
                        } else {
                            self.expect_ident("least")?;
                        }
                    }
                    specs.push(OrderSpec { expr, descending, empty_greatest });
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                clauses.push(Clause {
                    kind: ClauseKind::OrderBy { specs, stable },
                    span: clause_start.to(self.tokens[self.pos - 1].span),
                });
            } else if self.at_ident("count") && matches!(self.peek2().kind, TokenKind::Var(_)) {
                self.bump();
                let tok = self.bump();
                let TokenKind::Var(name) = tok.kind else { unreachable!() };
                let var: Arc<str> = Arc::from(name.as_str());
                self.bind_var(var.clone());
                clauses.push(Clause {
                    kind: ClauseKind::Count(var),
                    span: clause_start.to(self.tokens[self.pos - 1].span),
                });
            } else if self.at_ident("return") {
                self.bump();
                let return_expr = self.parse_expr_single()?;
                let span = start.to(return_expr.span);
                return Ok(Ast::new(
                    AstKind::Flwor { clauses, return_expr: Box::new(return_expr) },
                    span,
                ));
            } else {
                return Err(self.error_at(format!(
                    "expected a clause keyword or 'return', found {}",
                    self.peek().kind.describe()
                )));
            }
        }
    }

    // -- types -----------------------------------------------------------------

    fn parse_sequence_type(&mut self) -> Result<SequenceType> {
        let tok = self.bump();
        let TokenKind::Ident(name) = &tok.kind else {
            return Err(Error::new(ErrorCode::Syntax, "expected a type name").with_span(tok.span));
        };
        let item = ItemType::from_name(name).ok_or_else(|| {
            Error::new(ErrorCode::Syntax, format!("unknown type name '{name}'"))
                .with_span(tok.span)
        })?;
        let occurrence = if self.eat(&TokenKind::Question) {
            Occurrence::Optional
        } else if self.eat(&TokenKind::Star) {
            Occurrence::Star
        } else if self.eat(&TokenKind::Plus) {
            Occurrence::Plus
        } else {
            Occurrence::One
        };
        Ok(SequenceType { item, occurrence })
    }

    /// Cast targets: an atomic type with an optional '?'.
    fn parse_single_type(&mut self) -> Result<SequenceType> {
        let tok = self.peek().clone();
        let ty = self.parse_sequence_type()?;
        if !ty.item.is_atomic() {
            return Err(Error::new(
                ErrorCode::Syntax,
                format!("cast target must be an atomic type, got '{}'", ty.item.name()),
            )
            .with_span(tok.span));
        }
        if matches!(ty.occurrence, Occurrence::Star | Occurrence::Plus) {
            return Err(Error::new(
                ErrorCode::Syntax,
                "cast target occurrence must be '?' or exactly one",
            )
            .with_span(tok.span));
        }
        Ok(ty)
    }
}

#[cfg(test)]
mod tests;
