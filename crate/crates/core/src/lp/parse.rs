//! Surface syntax for the capability-machine target.
//!
//! ```text
//! component { import g; fun f(x) { let v = !0 with kroot in 0 := v + 1 with kroot } }
//! context   { fun main(x) { let a = new 5 in a := 1 with 0 } }
//! ```
//!
//! `kroot` is a literal only inside component code; a context mentioning it
//! is rejected when the program is plugged.

use super::ast::*;
use crate::lex::{is_reserved, lex, Cursor, ParseError, Tok};
use crate::syntax::{Cmp, Name, Op, KROOT};
use std::collections::BTreeSet;

pub enum ParsedLp {
    Component(ComponentLp),
    Context(ContextLp),
}

pub fn parse_lp(src: &str) -> Result<ParsedLp, ParseError> {
    let mut cur = Cursor::new(lex(src)?);
    if cur.peek_kw("component") {
        parse_component_at(&mut cur).map(ParsedLp::Component)
    } else if cur.peek_kw("context") {
        parse_context_at(&mut cur).map(ParsedLp::Context)
    } else {
        Err(cur.error("expected `component` or `context`"))
    }
}

pub fn parse_component_lp(src: &str) -> Result<ComponentLp, ParseError> {
    let mut cur = Cursor::new(lex(src)?);
    let c = parse_component_at(&mut cur)?;
    cur.expect_end()?;
    Ok(c)
}

pub fn parse_context_lp(src: &str) -> Result<ContextLp, ParseError> {
    let mut cur = Cursor::new(lex(src)?);
    let c = parse_context_at(&mut cur)?;
    cur.expect_end()?;
    Ok(c)
}

fn parse_component_at(cur: &mut Cursor) -> Result<ComponentLp, ParseError> {
    cur.expect_kw("component")?;
    cur.expect(Tok::LBrace)?;
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
    }
    // resolve the root-capability literal in component scope
    let funs = funs
        .into_iter()
        .map(|(n, f)| (n, PFun { param: f.param, body: resolve_kroot(f.body) }))
        .collect();
    Ok(ComponentLp { imports, funs })
}

fn parse_context_at(cur: &mut Cursor) -> Result<ContextLp, ParseError> {
    cur.expect_kw("context")?;
    cur.expect(Tok::LBrace)?;
    let funs = parse_funs(cur)?;
    cur.expect(Tok::RBrace)?;
    check_distinct(&funs, cur)?;
    Ok(ContextLp { funs })
}

fn parse_funs(cur: &mut Cursor) -> Result<Vec<(Name, PFun)>, ParseError> {
    let mut funs = Vec::new();
    while cur.eat_kw("fun") {
        let fname = name(cur)?;
        cur.expect(Tok::LParen)?;
        let param = name(cur)?;
        cur.expect(Tok::RParen)?;
        cur.expect(Tok::LBrace)?;
        let body = parse_body(cur)?;
        cur.expect(Tok::RBrace)?;
        funs.push((fname, PFun { param, body }));
    }
    Ok(funs)
}

fn check_distinct(funs: &[(Name, PFun)], cur: &Cursor) -> Result<(), ParseError> {
    let mut seen = BTreeSet::new();
    for (n, _) in funs {
        if !seen.insert(n.clone()) {
            return Err(cur.error(format!("duplicate function `{n}`")));
        }
    }
    Ok(())
}

fn parse_body(cur: &mut Cursor) -> Result<PStmt, ParseError> {
    let mut stmts = Vec::new();
    loop {
        if cur.peek_kw("ret") {
            cur.next();
            if cur.peek() != Some(&Tok::RBrace) {
                return Err(cur.error("`ret` only closes a function body"));
            }
            stmts.push(PStmt::Ret);
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
    if !matches!(stmts.last(), Some(PStmt::Ret)) {
        stmts.push(PStmt::Ret);
    }
    Ok(PStmt::seq_all(stmts))
}

fn parse_stmt(cur: &mut Cursor) -> Result<PStmt, ParseError> {
    if cur.peek_kw("ret") {
        return Err(cur.error("`ret` only closes a function body"));
    }
    if cur.eat_kw("skip") {
        return Ok(PStmt::Skip);
    }
    if cur.eat(Tok::LBrace) {
        let s = parse_block(cur)?;
        cur.expect(Tok::RBrace)?;
        return Ok(s);
    }
    if cur.eat_kw("let") {
        let x = name(cur)?;
        cur.expect(Tok::Eq)?;
        if cur.eat_kw("new") {
            let e = parse_expr(cur)?;
            cur.expect_kw("in")?;
            let s = Box::new(parse_stmt(cur)?);
            return Ok(PStmt::LetNew(x, e, s));
        }
        if cur.eat_kw("hide") {
            let e = parse_expr(cur)?;
            cur.expect_kw("in")?;
            let s = Box::new(parse_stmt(cur)?);
            return Ok(PStmt::LetHide(x, e, s));
        }
        let e = parse_expr(cur)?;
        cur.expect_kw("in")?;
        let s = Box::new(parse_stmt(cur)?);
        return Ok(PStmt::Let(x, e, s));
    }
    if cur.eat_kw("ifz") {
        let e = parse_expr(cur)?;
        cur.expect_kw("then")?;
        let t = Box::new(parse_stmt(cur)?);
        cur.expect_kw("else")?;
        let els = Box::new(parse_stmt(cur)?);
        return Ok(PStmt::Ifz(e, t, els));
    }
    if cur.eat_kw("call") {
        let fname = name(cur)?;
        let e = parse_expr(cur)?;
        return Ok(PStmt::Call(fname, e));
    }
    // assignment: ident or address literal before `:=`
    let is_assign_head = matches!(cur.peek(), Some(Tok::Ident(_)) | Some(Tok::Nat(_)))
        && cur.peek2() == Some(&Tok::Assign);
    if is_assign_head {
        let target = match cur.peek() {
            Some(Tok::Nat(_)) => PExpr::nat(cur.nat()?),
            _ => {
                let n = cur.ident()?;
                if is_reserved(&n) {
                    return Err(cur.error(format!("`{n}` is a reserved word")));
                }
                PExpr::Var(n)
            }
        };
        cur.expect(Tok::Assign)?;
        let e = parse_expr(cur)?;
        cur.expect_kw("with")?;
        let w = parse_postfix(cur)?;
        return Ok(PStmt::AssignWith(target, e, w));
    }
    let e = parse_expr(cur)?;
    Ok(PStmt::Expr(e))
}

fn parse_block(cur: &mut Cursor) -> Result<PStmt, ParseError> {
    let mut stmts = vec![parse_stmt(cur)?];
    while cur.eat(Tok::Semi) {
        if cur.peek() == Some(&Tok::RBrace) {
            break;
        }
        stmts.push(parse_stmt(cur)?);
    }
    Ok(PStmt::seq_all(stmts))
}

pub(crate) fn name(cur: &mut Cursor) -> Result<Name, ParseError> {
    let line = cur.line();
    let n = cur.ident()?;
    if is_reserved(&n) {
        return Err(ParseError::Invalid { msg: format!("`{n}` is a reserved word"), line });
    }
    if n == "kroot" {
        return Err(ParseError::Invalid {
            msg: "`kroot` cannot be used as a name".into(),
            line,
        });
    }
    Ok(n)
}

pub(crate) fn name_list(cur: &mut Cursor) -> Result<Vec<Name>, ParseError> {
    let mut out = vec![name(cur)?];
    while cur.eat(Tok::Comma) {
        out.push(name(cur)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Expressions
// ---------------------------------------------------------------------------

pub(crate) fn parse_expr(cur: &mut Cursor) -> Result<PExpr, ParseError> {
    parse_cmp(cur)
}

fn parse_cmp(cur: &mut Cursor) -> Result<PExpr, ParseError> {
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
        lhs = PExpr::Cmp(op, Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_add(cur: &mut Cursor) -> Result<PExpr, ParseError> {
    let mut lhs = parse_mul(cur)?;
    loop {
        let op = match cur.peek() {
            Some(Tok::Plus) => Op::Add,
            Some(Tok::Minus) => Op::Sub,
            _ => break,
        };
        cur.next();
        let rhs = parse_mul(cur)?;
        lhs = PExpr::Op(op, Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_mul(cur: &mut Cursor) -> Result<PExpr, ParseError> {
    let mut lhs = parse_unary(cur)?;
    while cur.eat(Tok::Star) {
        let rhs = parse_unary(cur)?;
        lhs = PExpr::Op(Op::Mul, Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_unary(cur: &mut Cursor) -> Result<PExpr, ParseError> {
    if cur.eat(Tok::Bang) {
        let e = parse_unary(cur)?;
        cur.expect_kw("with")?;
        let w = parse_postfix(cur)?;
        return Ok(PExpr::deref_with(e, w));
    }
    parse_postfix(cur)
}

pub(crate) fn parse_postfix(cur: &mut Cursor) -> Result<PExpr, ParseError> {
    let mut e = parse_primary(cur)?;
    while cur.eat(Tok::Dot) {
        let i = cur.nat()?;
        if i != 1 && i != 2 {
            return Err(cur.error("projection index must be 1 or 2"));
        }
        e = PExpr::proj(i as u8, e);
    }
    Ok(e)
}

fn parse_primary(cur: &mut Cursor) -> Result<PExpr, ParseError> {
    match cur.peek() {
        Some(Tok::Nat(_)) => Ok(PExpr::nat(cur.nat()?)),
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
            Ok(PExpr::pair(a, b))
        }
        Some(Tok::Ident(s)) if s == "kroot" => {
            cur.next();
            Ok(PExpr::Var("kroot".into()))
        }
        Some(Tok::Ident(_)) => Ok(PExpr::Var(name(cur)?)),
        Some(t) => Err(cur.error(format!("expected expression, found {}", t.describe()))),
        None => Err(ParseError::Eof { expected: "expression".into() }),
    }
}

/// Turn occurrences of `kroot` into the root-capability literal.  `kroot`
/// can never be bound (binders reject it), so no scope tracking is needed.
/// Contexts never run this pass, so theirs stay free variables and fail the
/// attacker check at plug time.
fn resolve_kroot(s: PStmt) -> PStmt {
    fn expr(e: PExpr) -> PExpr {
        match e {
            PExpr::Var(x) if x == "kroot" => PExpr::Val(PVal::Cap(KROOT)),
            PExpr::Var(_) | PExpr::Val(_) => e,
            PExpr::Op(op, a, b) => PExpr::Op(op, Box::new(expr(*a)), Box::new(expr(*b))),
            PExpr::Cmp(c, a, b) => PExpr::Cmp(c, Box::new(expr(*a)), Box::new(expr(*b))),
            PExpr::Pair(a, b) => PExpr::pair(expr(*a), expr(*b)),
            PExpr::Proj(i, e0) => PExpr::proj(i, expr(*e0)),
            PExpr::DerefWith(e0, w) => PExpr::deref_with(expr(*e0), expr(*w)),
        }
    }
    match s {
        PStmt::Skip | PStmt::Ret => s,
        PStmt::Seq(a, b) => PStmt::seq(resolve_kroot(*a), resolve_kroot(*b)),
        PStmt::Let(x, e, body) => PStmt::Let(x, expr(e), Box::new(resolve_kroot(*body))),
        PStmt::LetNew(x, e, body) => PStmt::LetNew(x, expr(e), Box::new(resolve_kroot(*body))),
        PStmt::LetHide(x, e, body) => PStmt::LetHide(x, expr(e), Box::new(resolve_kroot(*body))),
        PStmt::Ifz(e, t, f) => {
            PStmt::Ifz(expr(e), Box::new(resolve_kroot(*t)), Box::new(resolve_kroot(*f)))
        }
        PStmt::Call(f, e) => PStmt::Call(f, expr(e)),
        PStmt::AssignWith(t, e, w) => PStmt::AssignWith(expr(t), expr(e), expr(w)),
        PStmt::Expr(e) => PStmt::Expr(expr(e)),
    }
}
