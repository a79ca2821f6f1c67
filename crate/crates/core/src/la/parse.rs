//! Surface syntax for the typed source language.
//!
//! ```text
//! component {
//!   delta { balance : Nat; }
//!   import log;
//!   fun deposit(x) {
//!     endorse q = x as Nat in balance := !balance + q
//!   }
//! }
//! ```
//!
//! Functions take exactly one parameter at the shareable type, so parameter
//! lists carry no annotations. Allocation is written `let x = new e : t in s`
//! and records `t` on the cell.

use super::ast::*;
use crate::lex::{is_reserved, lex, Cursor, ParseError, Tok};
use crate::syntax::{Cmp, Name, Op};
use std::collections::BTreeSet;

pub enum ParsedLa {
    Component(ComponentLa),
    Context(ContextLa),
}

pub fn parse_la(src: &str) -> Result<ParsedLa, ParseError> {
    let mut cur = Cursor::new(lex(src)?);
    if cur.peek_kw("component") {
        parse_component_at(&mut cur).map(ParsedLa::Component)
    } else if cur.peek_kw("context") {
        parse_context_at(&mut cur).map(ParsedLa::Context)
    } else {
        Err(cur.error("expected `component` or `context`"))
    }
}

pub fn parse_component_la(src: &str) -> Result<ComponentLa, ParseError> {
    let mut cur = Cursor::new(lex(src)?);
    let c = parse_component_at(&mut cur)?;
    cur.expect_end()?;
    Ok(c)
}

pub fn parse_context_la(src: &str) -> Result<ContextLa, ParseError> {
    let mut cur = Cursor::new(lex(src)?);
    let c = parse_context_at(&mut cur)?;
    cur.expect_end()?;
    Ok(c)
}

fn parse_component_at(cur: &mut Cursor) -> Result<ComponentLa, ParseError> {
    cur.expect_kw("component")?;
    cur.expect(Tok::LBrace)?;
    let mut delta = Vec::new();
    if cur.eat_kw("delta") {
        cur.expect(Tok::LBrace)?;
        while !cur.eat(Tok::RBrace) {
            let n = name(cur)?;
            if delta.iter().any(|(m, _)| *m == n) {
                return Err(cur.error(format!("duplicate store entry `{n}`")));
            }
            cur.expect(Tok::Colon)?;
            let t = parse_type(cur)?;
            cur.expect(Tok::Semi)?;
            delta.push((n, t));
        }
    }
    let imports = if cur.eat_kw("import") {
        let list = name_list(cur)?;
        cur.expect(Tok::Semi)?;
        list
    } else {
        Vec::new()
    };
    let funs = parse_funs(cur)?;
    cur.expect(Tok::RBrace)?;
    check_distinct(&funs, cur)?;
    for (n, _) in &funs {
        if imports.contains(n) {
            return Err(cur.error(format!("function `{n}` is both defined and imported")));
        }
        if delta.iter().any(|(m, _)| m == n) {
            return Err(cur.error(format!("`{n}` names both a function and a store entry")));
        }
    }
    let cells: Vec<Name> = delta.iter().map(|(n, _)| n.clone()).collect();
    let funs = funs
        .into_iter()
        .map(|(n, f)| {
            let mut bound = vec![f.param.clone()];
            let body = resolve_cells(f.body, &cells, &mut bound);
            (n, AFun { param: f.param, body })
        })
        .collect();
    Ok(ComponentLa { delta, imports, funs })
}

fn parse_context_at(cur: &mut Cursor) -> Result<ContextLa, ParseError> {
    cur.expect_kw("context")?;
    cur.expect(Tok::LBrace)?;
    let funs = parse_funs(cur)?;
    cur.expect(Tok::RBrace)?;
    check_distinct(&funs, cur)?;
    Ok(ContextLa { funs })
}

fn check_distinct(funs: &[(Name, AFun)], cur: &Cursor) -> Result<(), ParseError> {
    let mut seen = BTreeSet::new();
    for (n, _) in funs {
        if !seen.insert(n.clone()) {
            return Err(cur.error(format!("duplicate function `{n}`")));
        }
    }
    Ok(())
}

fn parse_funs(cur: &mut Cursor) -> Result<Vec<(Name, AFun)>, ParseError> {
    let mut funs = Vec::new();
    while cur.eat_kw("fun") {
        let fname = name(cur)?;
        cur.expect(Tok::LParen)?;
        let param = name(cur)?;
        cur.expect(Tok::RParen)?;
        cur.expect(Tok::LBrace)?;
        let body = parse_body(cur)?;
        cur.expect(Tok::RBrace)?;
        funs.push((fname, AFun { param, body }));
    }
    Ok(funs)
}

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

pub fn parse_type(cur: &mut Cursor) -> Result<TyA, ParseError> {
    let lhs = parse_type_atom(cur)?;
    if cur.eat(Tok::Star) {
        let rhs = parse_type(cur)?;
        Ok(TyA::prod(lhs, rhs))
    } else {
        Ok(lhs)
    }
}

fn parse_type_atom(cur: &mut Cursor) -> Result<TyA, ParseError> {
    if cur.eat_kw("Nat") {
        return Ok(TyA::Nat);
    }
    if cur.eat_kw("Bool") {
        return Ok(TyA::Bool);
    }
    if cur.eat_kw("UN") {
        return Ok(TyA::Un);
    }
    if cur.eat_kw("Ref") {
        return Ok(TyA::reference(parse_type_atom(cur)?));
    }
    if cur.eat(Tok::LParen) {
        let t = parse_type(cur)?;
        cur.expect(Tok::RParen)?;
        return Ok(t);
    }
    Err(cur.error("expected a type"))
}

// ---------------------------------------------------------------------------
// Statements
// ---------------------------------------------------------------------------

fn parse_body(cur: &mut Cursor) -> Result<AStmt, ParseError> {
    let mut stmts = Vec::new();
    loop {
        if cur.peek_kw("ret") {
            cur.next();
            if cur.peek() != Some(&Tok::RBrace) {
                return Err(cur.error("`ret` only closes a function body"));
            }
            stmts.push(AStmt::Ret);
            break;
        }
        stmts.push(parse_stmt(cur)?);
        if !cur.eat(Tok::Semi) {
            break;
        }
        if cur.peek() == Some(&Tok::RBrace) {
            break;
        }
    }
    if !matches!(stmts.last(), Some(AStmt::Ret)) {
        stmts.push(AStmt::Ret);
    }
    Ok(AStmt::seq_all(stmts))
}

fn parse_stmt(cur: &mut Cursor) -> Result<AStmt, ParseError> {
    if cur.peek_kw("ret") {
        return Err(cur.error("`ret` only closes a function body"));
    }
    if cur.eat_kw("skip") {
        return Ok(AStmt::Skip);
    }
    if cur.eat(Tok::LBrace) {
        let s = parse_block(cur)?;
        cur.expect(Tok::RBrace)?;
        return Ok(s);
    }
    if cur.eat_kw("let") {
        let x = name(cur)?;
        let ann = if cur.eat(Tok::Colon) { Some(parse_type(cur)?) } else { None };
        cur.expect(Tok::Eq)?;
        if cur.eat_kw("new") {
            if ann.is_some() {
                return Err(cur.error("allocation types are written after the expression"));
            }
            let e = parse_expr(cur)?;
            cur.expect(Tok::Colon)?;
            let t = parse_type(cur)?;
            cur.expect_kw("in")?;
            let s = Box::new(parse_stmt(cur)?);
            return Ok(AStmt::New(x, t, e, s));
        }
        let e = parse_expr(cur)?;
        cur.expect_kw("in")?;
        let s = Box::new(parse_stmt(cur)?);
        return Ok(AStmt::Let(x, ann, e, s));
    }
    if cur.eat_kw("if") {
        let e = parse_expr(cur)?;
        cur.expect_kw("then")?;
        let t = Box::new(parse_stmt(cur)?);
        cur.expect_kw("else")?;
        let els = Box::new(parse_stmt(cur)?);
        return Ok(AStmt::If(e, t, els));
    }
    if cur.eat_kw("call") {
        let fname = name(cur)?;
        let e = parse_expr(cur)?;
        return Ok(AStmt::Call(fname, e));
    }
    if cur.eat_kw("fork") {
        cur.expect(Tok::LBrace)?;
        let s = parse_block(cur)?;
        cur.expect(Tok::RBrace)?;
        return Ok(AStmt::Fork(Box::new(s)));
    }
    if cur.eat_kw("endorse") {
        let x = name(cur)?;
        cur.expect(Tok::Eq)?;
        let e = parse_expr(cur)?;
        cur.expect_kw("as")?;
        let phi = parse_type(cur)?;
        cur.expect_kw("in")?;
        let s = Box::new(parse_stmt(cur)?);
        return Ok(AStmt::Endorse(x, e, phi, s));
    }
    if matches!(cur.peek(), Some(Tok::Ident(_))) && cur.peek2() == Some(&Tok::Assign) {
        let target = AExpr::Var(name(cur)?);
        cur.expect(Tok::Assign)?;
        let e = parse_expr(cur)?;
        return Ok(AStmt::Assign(target, e));
    }
    let e = parse_expr(cur)?;
    Ok(AStmt::Expr(e))
}

fn parse_block(cur: &mut Cursor) -> Result<AStmt, ParseError> {
    let mut stmts = vec![parse_stmt(cur)?];
    while cur.eat(Tok::Semi) {
        if cur.peek() == Some(&Tok::RBrace) {
            break;
        }
        stmts.push(parse_stmt(cur)?);
    }
    Ok(AStmt::seq_all(stmts))
}

fn name(cur: &mut Cursor) -> Result<Name, ParseError> {
    let line = cur.line();
    let n = cur.ident()?;
    if is_reserved(&n) {
        return Err(ParseError::Invalid { msg: format!("`{n}` is a reserved word"), line });
    }
    Ok(n)
}

fn name_list(cur: &mut Cursor) -> Result<Vec<Name>, ParseError> {
    let mut out = vec![name(cur)?];
    while cur.eat(Tok::Comma) {
        out.push(name(cur)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Expressions
// ---------------------------------------------------------------------------

pub(crate) fn parse_expr(cur: &mut Cursor) -> Result<AExpr, ParseError> {
    parse_cmp(cur)
}

fn parse_cmp(cur: &mut Cursor) -> Result<AExpr, ParseError> {
    let mut lhs = parse_add(cur)?;
    loop {
        let op = match cur.peek() {
            Some(Tok::EqEq) => Cmp::Eq,
            Some(Tok::Lt) => Cmp::Lt,
            Some(Tok::Gt) => Cmp::Gt,
            _ => break,
        };
        cur.next();
        let rhs = parse_add(cur)?;
        lhs = AExpr::Cmp(op, Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_add(cur: &mut Cursor) -> Result<AExpr, ParseError> {
    let mut lhs = parse_mul(cur)?;
    loop {
        let op = match cur.peek() {
            Some(Tok::Plus) => Op::Add,
            Some(Tok::Minus) => Op::Sub,
            _ => break,
        };
        cur.next();
        let rhs = parse_mul(cur)?;
        lhs = AExpr::Op(op, Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_mul(cur: &mut Cursor) -> Result<AExpr, ParseError> {
    let mut lhs = parse_unary(cur)?;
    while cur.eat(Tok::Star) {
        let rhs = parse_unary(cur)?;
        lhs = AExpr::Op(Op::Mul, Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_unary(cur: &mut Cursor) -> Result<AExpr, ParseError> {
    if cur.eat(Tok::Bang) {
        return Ok(AExpr::deref(parse_unary(cur)?));
    }
    parse_postfix(cur)
}

fn parse_postfix(cur: &mut Cursor) -> Result<AExpr, ParseError> {
    let mut e = parse_primary(cur)?;
    while cur.eat(Tok::Dot) {
        let i = cur.nat()?;
        if i != 1 && i != 2 {
            return Err(cur.error("projection index must be 1 or 2"));
        }
        e = AExpr::proj(i as u8, e);
    }
    Ok(e)
}

fn parse_primary(cur: &mut Cursor) -> Result<AExpr, ParseError> {
    if cur.eat_kw("true") {
        return Ok(AExpr::Val(AVal::Bool(true)));
    }
    if cur.eat_kw("false") {
        return Ok(AExpr::Val(AVal::Bool(false)));
    }
    match cur.peek() {
        Some(Tok::Nat(_)) => Ok(AExpr::nat(cur.nat()?)),
        Some(Tok::LParen) => {
            cur.next();
            let e = parse_expr(cur)?;
            cur.expect(Tok::RParen)?;
            Ok(e)
        }
        Some(Tok::Lt) => {
            // pair elements stop below comparisons so `>` always closes the
            // pair; a comparison inside a pair needs parentheses
            cur.next();
            let a = parse_add(cur)?;
            cur.expect(Tok::Comma)?;
            let b = parse_add(cur)?;
            cur.expect(Tok::Gt)?;
            Ok(AExpr::pair(a, b))
        }
        Some(Tok::Ident(_)) => Ok(AExpr::Var(name(cur)?)),
        Some(t) => Err(cur.error(format!("expected expression, found {}", t.describe()))),
        None => Err(ParseError::Eof { expected: "expression".into() }),
    }
}

// ---------------------------------------------------------------------------
// Store-name resolution
// ---------------------------------------------------------------------------

/// Free variables naming a `delta` entry become store references; local
/// binders shadow them.
fn resolve_cells(s: AStmt, cells: &[Name], bound: &mut Vec<Name>) -> AStmt {
    fn expr(e: AExpr, cells: &[Name], bound: &[Name]) -> AExpr {
        match e {
            AExpr::Var(x) => {
                if !bound.iter().any(|b| *b == x) && cells.contains(&x) {
                    AExpr::Cell(x)
                } else {
                    AExpr::Var(x)
                }
            }
            AExpr::Val(_) | AExpr::Cell(_) => e,
            AExpr::Op(op, a, b) => AExpr::Op(
                op,
                Box::new(expr(*a, cells, bound)),
                Box::new(expr(*b, cells, bound)),
            ),
            AExpr::Cmp(c, a, b) => AExpr::Cmp(
                c,
                Box::new(expr(*a, cells, bound)),
                Box::new(expr(*b, cells, bound)),
            ),
            AExpr::Pair(a, b) => AExpr::pair(expr(*a, cells, bound), expr(*b, cells, bound)),
            AExpr::Proj(i, e0) => AExpr::proj(i, expr(*e0, cells, bound)),
            AExpr::Deref(e0) => AExpr::deref(expr(*e0, cells, bound)),
            AExpr::Coerce(e0) => AExpr::coerce(expr(*e0, cells, bound)),
        }
    }
    match s {
        AStmt::Skip | AStmt::Ret => s,
        AStmt::Seq(a, b) => {
            AStmt::seq(resolve_cells(*a, cells, bound), resolve_cells(*b, cells, bound))
        }
        AStmt::Let(x, t, e, body) => {
            let e = expr(e, cells, bound);
            bound.push(x.clone());
            let body = resolve_cells(*body, cells, bound);
            bound.pop();
            AStmt::Let(x, t, e, Box::new(body))
        }
        AStmt::New(x, t, e, body) => {
            let e = expr(e, cells, bound);
            bound.push(x.clone());
            let body = resolve_cells(*body, cells, bound);
            bound.pop();
            AStmt::New(x, t, e, Box::new(body))
        }
        AStmt::Assign(t, e) => AStmt::Assign(expr(t, cells, bound), expr(e, cells, bound)),
        AStmt::If(e, a, b) => AStmt::If(
            expr(e, cells, bound),
            Box::new(resolve_cells(*a, cells, bound)),
            Box::new(resolve_cells(*b, cells, bound)),
        ),
        AStmt::Call(f, e) => AStmt::Call(f, expr(e, cells, bound)),
        AStmt::Fork(body) => AStmt::Fork(Box::new(resolve_cells(*body, cells, bound))),
        AStmt::Endorse(x, e, phi, body) => {
            let e = expr(e, cells, bound);
            bound.push(x.clone());
            let body = resolve_cells(*body, cells, bound);
            bound.pop();
            AStmt::Endorse(x, e, phi, Box::new(body))
        }
        AStmt::Expr(e) => AStmt::Expr(expr(e, cells, bound)),
    }
}
