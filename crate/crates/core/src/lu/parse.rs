//! Surface syntax for the untyped source language.
//!
//! ```text
//! component { root lroot; import f, g; fun h(x) { ... ret } }
//! context   { heap { l1 = 4; } fun main(x) { call h 0 } }
//! ```
//!
//! Statements are `;`-separated; binders scope over the following single
//! statement, so multi-statement scopes are braced. A trailing `ret` in a
//! function body is optional (one is appended when absent); `ret` anywhere
//! else is rejected.

use super::ast::*;
use crate::lex::{is_reserved, lex, Cursor, ParseError, Tok};
use crate::syntax::{Cmp, Name, Op};
use std::collections::BTreeSet;

pub enum ParsedLu {
    Component(ComponentLu),
    Context(ContextLu),
}

pub fn parse_lu(src: &str) -> Result<ParsedLu, ParseError> {
    let mut cur = Cursor::new(lex(src)?);
    if cur.peek_kw("component") {
        parse_component_at(&mut cur).map(ParsedLu::Component)
    } else if cur.peek_kw("context") {
        parse_context_at(&mut cur).map(ParsedLu::Context)
    } else {
        Err(cur.error("expected `component` or `context`"))
    }
}

pub fn parse_component_lu(src: &str) -> Result<ComponentLu, ParseError> {
    let mut cur = Cursor::new(lex(src)?);
    let c = parse_component_at(&mut cur)?;
    cur.expect_end()?;
    Ok(c)
}

pub fn parse_context_lu(src: &str) -> Result<ContextLu, ParseError> {
    let mut cur = Cursor::new(lex(src)?);
    let c = parse_context_at(&mut cur)?;
    cur.expect_end()?;
    Ok(c)
}

fn parse_component_at(cur: &mut Cursor) -> Result<ComponentLu, ParseError> {
    cur.expect_kw("component")?;
    cur.expect(Tok::LBrace)?;
    cur.expect_kw("root")?;
    let root_name = name(cur)?;
    cur.expect(Tok::Semi)?;
    let imports = if cur.eat_kw("import") {
        let list = name_list(cur)?;
        cur.expect(Tok::Semi)?;
        list
    } else {
        Vec::new()
    };
    let funs = parse_funs(cur)?;
    cur.expect(Tok::RBrace)?;
    check_distinct_funs(&funs, cur)?;
    for (n, _) in &funs {
        if imports.contains(n) {
            return Err(cur.error(format!("function `{n}` is both defined and imported")));
        }
    }
    let cells: BTreeSet<Name> = [root_name.clone()].into();
    let funs = funs
        .into_iter()
        .map(|(n, f)| (n, resolve_cells_fun(f, &cells)))
        .collect();
    Ok(ComponentLu { root_name, imports, funs })
}

fn parse_context_at(cur: &mut Cursor) -> Result<ContextLu, ParseError> {
    cur.expect_kw("context")?;
    cur.expect(Tok::LBrace)?;
    let mut heap: Vec<(Name, UVal)> = Vec::new();
    if cur.eat_kw("heap") {
        cur.expect(Tok::LBrace)?;
        while !cur.eat(Tok::RBrace) {
            let n = name(cur)?;
            if heap.iter().any(|(m, _)| *m == n) {
                return Err(cur.error(format!("duplicate heap cell `{n}`")));
            }
            cur.expect(Tok::Eq)?;
            let v = parse_literal(cur)?;
            cur.expect(Tok::Semi)?;
            heap.push((n, v));
        }
    }
    let funs = parse_funs(cur)?;
    cur.expect(Tok::RBrace)?;
    check_distinct_funs(&funs, cur)?;
    let cells: BTreeSet<Name> = heap.iter().map(|(n, _)| n.clone()).collect();
    let funs = funs
        .into_iter()
        .map(|(n, f)| (n, resolve_cells_fun(f, &cells)))
        .collect();
    Ok(ContextLu { heap, funs })
}

fn parse_funs(cur: &mut Cursor) -> Result<Vec<(Name, UFun)>, ParseError> {
    let mut funs = Vec::new();
    while cur.eat_kw("fun") {
        let fname = name(cur)?;
        cur.expect(Tok::LParen)?;
        let param = name(cur)?;
        cur.expect(Tok::RParen)?;
        cur.expect(Tok::LBrace)?;
        let body = parse_body(cur)?;
        cur.expect(Tok::RBrace)?;
        funs.push((fname, UFun { param, body }));
    }
    Ok(funs)
}

fn check_distinct_funs(funs: &[(Name, UFun)], cur: &Cursor) -> Result<(), ParseError> {
    let mut seen = BTreeSet::new();
    for (n, _) in funs {
        if !seen.insert(n.clone()) {
            return Err(cur.error(format!("duplicate function `{n}`")));
        }
    }
    Ok(())
}

/// Function body: statements terminated by an optional trailing `ret`.
pub(crate) fn parse_body(cur: &mut Cursor) -> Result<UStmt, ParseError> {
    let mut stmts = Vec::new();
    loop {
        if cur.peek_kw("ret") {
            cur.next();
            if cur.peek() != Some(&Tok::RBrace) {
                return Err(cur.error("`ret` only closes a function body"));
            }
            stmts.push(UStmt::Ret);
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
    if !matches!(stmts.last(), Some(UStmt::Ret)) {
        stmts.push(UStmt::Ret);
    }
    Ok(UStmt::seq_all(stmts))
}

fn parse_stmt(cur: &mut Cursor) -> Result<UStmt, ParseError> {
    if cur.peek_kw("ret") {
        return Err(cur.error("`ret` only closes a function body"));
    }
    if cur.eat_kw("skip") {
        return Ok(UStmt::Skip);
    }
    if cur.eat(Tok::LBrace) {
        let s = parse_block(cur)?;
        cur.expect(Tok::RBrace)?;
        return Ok(s);
    }
    if cur.eat_kw("let") {
        let x = name(cur)?;
        cur.expect(Tok::Eq)?;
        let is_new = cur.eat_kw("new");
        let e = parse_expr(cur)?;
        cur.expect_kw("in")?;
        let s = Box::new(parse_stmt(cur)?);
        return Ok(if is_new { UStmt::LetNew(x, e, s) } else { UStmt::Let(x, e, s) });
    }
    if cur.eat_kw("if") {
        let e = parse_expr(cur)?;
        cur.expect_kw("then")?;
        let t = Box::new(parse_stmt(cur)?);
        cur.expect_kw("else")?;
        let els = Box::new(parse_stmt(cur)?);
        return Ok(UStmt::If(e, t, els));
    }
    if cur.eat_kw("call") {
        let fname = name(cur)?;
        let e = parse_expr(cur)?;
        return Ok(UStmt::Call(fname, e));
    }
    // assignment needs ident/number lookahead before `:=`
    if matches!(cur.peek(), Some(Tok::Ident(_))) && cur.peek2() == Some(&Tok::Assign) {
        let x = name(cur)?;
        cur.expect(Tok::Assign)?;
        let e = parse_expr(cur)?;
        return Ok(UStmt::Assign(UExpr::Var(x), e));
    }
    let e = parse_expr(cur)?;
    Ok(UStmt::Expr(e))
}

fn parse_block(cur: &mut Cursor) -> Result<UStmt, ParseError> {
    let mut stmts = vec![parse_stmt(cur)?];
    while cur.eat(Tok::Semi) {
        if cur.peek() == Some(&Tok::RBrace) {
            break;
        }
        stmts.push(parse_stmt(cur)?);
    }
    Ok(UStmt::seq_all(stmts))
}

/// Closed heap-literal value: no locations.
pub(crate) fn parse_literal(cur: &mut Cursor) -> Result<UVal, ParseError> {
    match cur.peek() {
        Some(Tok::Nat(_)) => Ok(UVal::Nat(cur.nat()?)),
        Some(Tok::Lt) => {
            cur.next();
            let a = parse_literal(cur)?;
            cur.expect(Tok::Comma)?;
            let b = parse_literal(cur)?;
            cur.expect(Tok::Gt)?;
            Ok(UVal::pair(a, b))
        }
        Some(Tok::Ident(s)) if s == "true" => {
            cur.next();
            Ok(UVal::Bool(true))
        }
        Some(Tok::Ident(s)) if s == "false" => {
            cur.next();
            Ok(UVal::Bool(false))
        }
        Some(Tok::Ident(s)) if s == "unit" => {
            cur.next();
            Ok(UVal::Unit)
        }
        Some(t) => Err(cur.error(format!("expected a literal value, found {}", t.describe()))),
        None => Err(ParseError::Eof { expected: "literal value".into() }),
    }
}

pub(crate) fn name(cur: &mut Cursor) -> Result<Name, ParseError> {
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

pub(crate) fn parse_expr(cur: &mut Cursor) -> Result<UExpr, ParseError> {
    parse_cmp(cur)
}

fn parse_cmp(cur: &mut Cursor) -> Result<UExpr, ParseError> {
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
        lhs = UExpr::Cmp(op, Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_add(cur: &mut Cursor) -> Result<UExpr, ParseError> {
    let mut lhs = parse_mul(cur)?;
    loop {
        let op = match cur.peek() {
            Some(Tok::Plus) => Op::Add,
            Some(Tok::Minus) => Op::Sub,
            _ => break,
        };
        cur.next();
        let rhs = parse_mul(cur)?;
        lhs = UExpr::Op(op, Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_mul(cur: &mut Cursor) -> Result<UExpr, ParseError> {
    let mut lhs = parse_unary(cur)?;
    while cur.eat(Tok::Star) {
        let rhs = parse_unary(cur)?;
        lhs = UExpr::Op(Op::Mul, Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_unary(cur: &mut Cursor) -> Result<UExpr, ParseError> {
    if cur.eat(Tok::Bang) {
        let e = parse_unary(cur)?;
        return Ok(UExpr::deref(e));
    }
    parse_postfix(cur)
}

fn parse_postfix(cur: &mut Cursor) -> Result<UExpr, ParseError> {
    let mut e = parse_primary(cur)?;
    while cur.eat(Tok::Dot) {
        let i = cur.nat()?;
        if i != 1 && i != 2 {
            return Err(cur.error("projection index must be 1 or 2"));
        }
        e = UExpr::proj(i as u8, e);
    }
    Ok(e)
}

fn parse_primary(cur: &mut Cursor) -> Result<UExpr, ParseError> {
    match cur.peek() {
        Some(Tok::Nat(_)) => Ok(UExpr::nat(cur.nat()?)),
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
            Ok(UExpr::pair(a, b))
        }
        Some(Tok::Ident(s)) if s == "true" => {
            cur.next();
            Ok(UExpr::Val(UVal::Bool(true)))
        }
        Some(Tok::Ident(s)) if s == "false" => {
            cur.next();
            Ok(UExpr::Val(UVal::Bool(false)))
        }
        Some(Tok::Ident(s)) if s == "unit" => {
            cur.next();
            Ok(UExpr::Val(UVal::Unit))
        }
        Some(Tok::Ident(_)) => Ok(UExpr::Var(name(cur)?)),
        Some(t) => Err(cur.error(format!("expected expression, found {}", t.describe()))),
        None => Err(ParseError::Eof { expected: "expression".into() }),
    }
}

// ---------------------------------------------------------------------------
// Heap-cell resolution: free variables matching declared cell names become
// Cell references.
// ---------------------------------------------------------------------------

fn resolve_cells_fun(f: UFun, cells: &BTreeSet<Name>) -> UFun {
    let mut bound: Vec<Name> = vec![f.param.clone()];
    UFun { param: f.param, body: resolve_stmt(f.body, cells, &mut bound) }
}

fn resolve_stmt(s: UStmt, cells: &BTreeSet<Name>, bound: &mut Vec<Name>) -> UStmt {
    match s {
        UStmt::Skip | UStmt::Ret => s,
        UStmt::Seq(a, b) => UStmt::seq(
            resolve_stmt(*a, cells, bound),
            resolve_stmt(*b, cells, bound),
        ),
        UStmt::Let(x, e, body) => {
            let e = resolve_expr(e, cells, bound);
            bound.push(x.clone());
            let body = resolve_stmt(*body, cells, bound);
            bound.pop();
            UStmt::Let(x, e, Box::new(body))
        }
        UStmt::LetNew(x, e, body) => {
            let e = resolve_expr(e, cells, bound);
            bound.push(x.clone());
            let body = resolve_stmt(*body, cells, bound);
            bound.pop();
            UStmt::LetNew(x, e, Box::new(body))
        }
        UStmt::If(e, t, f) => UStmt::If(
            resolve_expr(e, cells, bound),
            Box::new(resolve_stmt(*t, cells, bound)),
            Box::new(resolve_stmt(*f, cells, bound)),
        ),
        UStmt::Call(f, e) => UStmt::Call(f, resolve_expr(e, cells, bound)),
        UStmt::Assign(t, e) => UStmt::Assign(
            resolve_expr(t, cells, bound),
            resolve_expr(e, cells, bound),
        ),
        UStmt::Expr(e) => UStmt::Expr(resolve_expr(e, cells, bound)),
    }
}

fn resolve_expr(e: UExpr, cells: &BTreeSet<Name>, bound: &[Name]) -> UExpr {
    match e {
        UExpr::Var(x) => {
            if !bound.contains(&x) && cells.contains(&x) {
                UExpr::Cell(x)
            } else {
                UExpr::Var(x)
            }
        }
        UExpr::Val(_) | UExpr::Cell(_) => e,
        UExpr::Op(op, a, b) => UExpr::Op(
            op,
            Box::new(resolve_expr(*a, cells, bound)),
            Box::new(resolve_expr(*b, cells, bound)),
        ),
        UExpr::Cmp(c, a, b) => UExpr::Cmp(
            c,
            Box::new(resolve_expr(*a, cells, bound)),
            Box::new(resolve_expr(*b, cells, bound)),
        ),
        UExpr::Pair(a, b) => UExpr::pair(
            resolve_expr(*a, cells, bound),
            resolve_expr(*b, cells, bound),
        ),
        UExpr::Proj(i, e) => UExpr::proj(i, resolve_expr(*e, cells, bound)),
        UExpr::Deref(e) => UExpr::deref(resolve_expr(*e, cells, bound)),
    }
}
