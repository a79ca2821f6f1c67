//! Surface syntax for the enclave-isolation target.
//!
//! ```text
//! component {
//!   heap0 { -1 = 0; }
//!   enclave get, set;
//!   fun get(x) { !(-1); ret }
//!   fun set(x) { (-1) := x; ret }
//! }
//! context { fun main(z) { let a = new 4 in a := !a + 1 } }
//! ```
//!
//! Addresses are integers; `-1` is a negative literal. Assignment targets
//! are arbitrary expressions, so computed addresses can be written directly.
//! There is no token syntax: capability values cannot appear in LI text.

use super::ast::*;
use crate::lc::ast::Pattern;
use crate::lex::{lex, Cursor, ParseError, Tok};
use crate::lp::parse::{name, name_list};
use crate::syntax::{Cmp, Name, Op};
use std::collections::BTreeSet;

pub enum ParsedLi {
    Component(ComponentLi),
    Context(ContextLi),
}

pub fn parse_li(src: &str) -> Result<ParsedLi, ParseError> {
    let mut cur = Cursor::new(lex(src)?);
    if cur.peek_kw("component") {
        parse_component_at(&mut cur).map(ParsedLi::Component)
    } else if cur.peek_kw("context") {
        parse_context_at(&mut cur).map(ParsedLi::Context)
    } else {
        Err(cur.error("expected `component` or `context`"))
    }
}

pub fn parse_component_li(src: &str) -> Result<ComponentLi, ParseError> {
    let mut cur = Cursor::new(lex(src)?);
    let c = parse_component_at(&mut cur)?;
    cur.expect_end()?;
    Ok(c)
}

pub fn parse_context_li(src: &str) -> Result<ContextLi, ParseError> {
    let mut cur = Cursor::new(lex(src)?);
    let c = parse_context_at(&mut cur)?;
    cur.expect_end()?;
    Ok(c)
}

fn parse_component_at(cur: &mut Cursor) -> Result<ComponentLi, ParseError> {
    cur.expect_kw("component")?;
    cur.expect(Tok::LBrace)?;
    let mut h0 = Vec::new();
    if cur.eat_kw("heap0") {
        cur.expect(Tok::LBrace)?;
        while !cur.eat(Tok::RBrace) {
            let addr = parse_int(cur)?;
            if addr >= 0 {
                return Err(cur.error(format!(
                    "initial-heap address {addr} is not negative; the protected heap lives below zero"
                )));
            }
            if h0.iter().any(|(a, _)| *a == addr) {
                return Err(cur.error(format!("duplicate initial-heap address {addr}")));
            }
            cur.expect(Tok::Eq)?;
            let val = parse_h0_val(cur)?;
            cur.expect(Tok::Semi)?;
            h0.push((addr, val));
        }
    }
    let enclave = if cur.eat_kw("enclave") {
        let list = name_list(cur)?;
        cur.expect(Tok::Semi)?;
        list
    } else {
        Vec::new()
    };
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
    let mut seen = BTreeSet::new();
    for e in &enclave {
        if !funs.iter().any(|(n, _)| n == e) {
            return Err(cur.error(format!("enclave lists `{e}`, which is not a function here")));
        }
        if !seen.insert(e.clone()) {
            return Err(cur.error(format!("`{e}` appears twice in the enclave list")));
        }
    }
    for (n, _) in &funs {
        if imports.contains(n) {
            return Err(cur.error(format!("function `{n}` is both defined and imported")));
        }
    }
    Ok(ComponentLi { h0, enclave, imports, funs })
}

fn parse_context_at(cur: &mut Cursor) -> Result<ContextLi, ParseError> {
    cur.expect_kw("context")?;
    cur.expect(Tok::LBrace)?;
    let funs = parse_funs(cur)?;
    cur.expect(Tok::RBrace)?;
    check_distinct(&funs, cur)?;
    Ok(ContextLi { funs })
}

pub(crate) fn parse_int(cur: &mut Cursor) -> Result<i64, ParseError> {
    let neg = cur.eat(Tok::Minus);
    let n = cur.nat()?;
    if n > i64::MAX as u64 {
        return Err(cur.error("integer literal out of range"));
    }
    let n = n as i64;
    Ok(if neg { -n } else { n })
}

pub(crate) fn parse_h0_val(cur: &mut Cursor) -> Result<IVal, ParseError> {
    match cur.peek() {
        Some(Tok::Nat(_)) | Some(Tok::Minus) => Ok(IVal::Int(parse_int(cur)?)),
        Some(Tok::Lt) => {
            cur.next();
            let a = parse_h0_val(cur)?;
            cur.expect(Tok::Comma)?;
            let b = parse_h0_val(cur)?;
            cur.expect(Tok::Gt)?;
            Ok(IVal::pair(a, b))
        }
        Some(t) => Err(cur.error(format!("expected initial-heap value, found {}", t.describe()))),
        None => Err(ParseError::Eof { expected: "initial-heap value".into() }),
    }
}

fn check_distinct(funs: &[(Name, IFun)], cur: &Cursor) -> Result<(), ParseError> {
    let mut seen = BTreeSet::new();
    for (n, _) in funs {
        if !seen.insert(n.clone()) {
            return Err(cur.error(format!("duplicate function `{n}`")));
        }
    }
    Ok(())
}

fn parse_funs(cur: &mut Cursor) -> Result<Vec<(Name, IFun)>, ParseError> {
    let mut funs = Vec::new();
    while cur.eat_kw("fun") {
        let fname = name(cur)?;
        cur.expect(Tok::LParen)?;
        let param = name(cur)?;
        cur.expect(Tok::RParen)?;
        cur.expect(Tok::LBrace)?;
        let body = parse_body(cur)?;
        cur.expect(Tok::RBrace)?;
        funs.push((fname, IFun { param, body }));
    }
    Ok(funs)
}

fn parse_body(cur: &mut Cursor) -> Result<IStmt, ParseError> {
    let mut stmts = Vec::new();
    loop {
        if cur.peek_kw("ret") {
            cur.next();
            if cur.peek() != Some(&Tok::RBrace) {
                return Err(cur.error("`ret` only closes a function body"));
            }
            stmts.push(IStmt::Ret);
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
    if !matches!(stmts.last(), Some(IStmt::Ret)) {
        stmts.push(IStmt::Ret);
    }
    Ok(IStmt::seq_all(stmts))
}

fn parse_stmt(cur: &mut Cursor) -> Result<IStmt, ParseError> {
    if cur.peek_kw("ret") {
        return Err(cur.error("`ret` only closes a function body"));
    }
    if cur.eat_kw("skip") {
        return Ok(IStmt::Skip);
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
            return Ok(IStmt::LetNew(x, e, s));
        }
        if cur.eat_kw("iso") {
            let e = parse_expr(cur)?;
            cur.expect_kw("in")?;
            let s = Box::new(parse_stmt(cur)?);
            return Ok(IStmt::LetIso(x, e, s));
        }
        let e = parse_expr(cur)?;
        cur.expect_kw("in")?;
        let s = Box::new(parse_stmt(cur)?);
        return Ok(IStmt::Let(x, e, s));
    }
    if cur.eat_kw("destruct") {
        let x = name(cur)?;
        cur.expect(Tok::Eq)?;
        let e = parse_expr(cur)?;
        cur.expect_kw("as")?;
        let pat = if cur.eat_kw("nat") {
            Pattern::Nat
        } else if cur.eat_kw("pair") {
            Pattern::Pair
        } else {
            return Err(cur.error("expected `nat` or `pair`"));
        };
        cur.expect_kw("in")?;
        let hit = Box::new(parse_stmt(cur)?);
        cur.expect_kw("else")?;
        let miss = Box::new(parse_stmt(cur)?);
        return Ok(IStmt::Destruct(x, e, pat, hit, miss));
    }
    if cur.eat_kw("fork") {
        cur.expect(Tok::LBrace)?;
        let s = parse_block(cur)?;
        cur.expect(Tok::RBrace)?;
        return Ok(IStmt::Fork(Box::new(s)));
    }
    if cur.eat_kw("ifz") {
        let e = parse_expr(cur)?;
        cur.expect_kw("then")?;
        let t = Box::new(parse_stmt(cur)?);
        cur.expect_kw("else")?;
        let els = Box::new(parse_stmt(cur)?);
        return Ok(IStmt::Ifz(e, t, els));
    }
    if cur.eat_kw("call") {
        let fname = name(cur)?;
        let e = parse_expr(cur)?;
        return Ok(IStmt::Call(fname, e));
    }
    // expression statement, or assignment when `:=` follows the expression
    let e = parse_expr(cur)?;
    if cur.eat(Tok::Assign) {
        let v = parse_expr(cur)?;
        return Ok(IStmt::Assign(e, v));
    }
    Ok(IStmt::Expr(e))
}

fn parse_block(cur: &mut Cursor) -> Result<IStmt, ParseError> {
    let mut stmts = vec![parse_stmt(cur)?];
    while cur.eat(Tok::Semi) {
        if cur.peek() == Some(&Tok::RBrace) {
            break;
        }
        stmts.push(parse_stmt(cur)?);
    }
    Ok(IStmt::seq_all(stmts))
}

pub(crate) fn parse_expr(cur: &mut Cursor) -> Result<IExpr, ParseError> {
    let lhs = parse_add(cur)?;
    let cmp = match cur.peek() {
        Some(Tok::EqEq) => Cmp::Eq,
        Some(Tok::Lt) => Cmp::Lt,
        Some(Tok::Gt) => Cmp::Gt,
        _ => return Ok(lhs),
    };
    cur.next();
    let rhs = parse_add(cur)?;
    Ok(IExpr::Cmp(cmp, Box::new(lhs), Box::new(rhs)))
}

fn parse_add(cur: &mut Cursor) -> Result<IExpr, ParseError> {
    let mut e = parse_mul(cur)?;
    loop {
        let op = match cur.peek() {
            Some(Tok::Plus) => Op::Add,
            Some(Tok::Minus) => Op::Sub,
            _ => break,
        };
        cur.next();
        let rhs = parse_mul(cur)?;
        e = IExpr::Op(op, Box::new(e), Box::new(rhs));
    }
    Ok(e)
}

fn parse_mul(cur: &mut Cursor) -> Result<IExpr, ParseError> {
    let mut e = parse_unary(cur)?;
    while cur.eat(Tok::Star) {
        let rhs = parse_unary(cur)?;
        e = IExpr::Op(Op::Mul, Box::new(e), Box::new(rhs));
    }
    Ok(e)
}

fn parse_unary(cur: &mut Cursor) -> Result<IExpr, ParseError> {
    if cur.eat(Tok::Bang) {
        return Ok(IExpr::deref(parse_unary(cur)?));
    }
    if cur.peek() == Some(&Tok::Minus) {
        // negative literal only; negate other expressions with `0 - e`
        return Ok(IExpr::Val(IVal::Int(parse_int(cur)?)));
    }
    parse_postfix(cur)
}

fn parse_postfix(cur: &mut Cursor) -> Result<IExpr, ParseError> {
    let mut e = parse_primary(cur)?;
    while cur.eat(Tok::Dot) {
        let i = cur.nat()?;
        if i != 1 && i != 2 {
            return Err(cur.error("projection index must be 1 or 2"));
        }
        e = IExpr::proj(i as u8, e);
    }
    Ok(e)
}

fn parse_primary(cur: &mut Cursor) -> Result<IExpr, ParseError> {
    match cur.peek() {
        Some(Tok::Nat(_)) => Ok(IExpr::Val(IVal::Int(parse_int(cur)?))),
        Some(Tok::LParen) => {
            cur.next();
            let e = parse_expr(cur)?;
            cur.expect(Tok::RParen)?;
            Ok(e)
        }
        Some(Tok::Lt) => {
            cur.next();
            let a = parse_add(cur)?;
            cur.expect(Tok::Comma)?;
            let b = parse_add(cur)?;
            cur.expect(Tok::Gt)?;
            Ok(IExpr::pair(a, b))
        }
        Some(Tok::Ident(_)) => Ok(IExpr::Var(name(cur)?)),
        Some(t) => Err(cur.error(format!("expected expression, found {}", t.describe()))),
        None => Err(ParseError::Eof { expected: "expression".into() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip_component(src: &str) -> ComponentLi {
        let c = parse_component_li(src).expect("parses");
        let printed = c.to_string();
        let again = parse_component_li(&printed)
            .unwrap_or_else(|e| panic!("reparse failed: {e}\n{printed}"));
        assert!(alpha_eq_component(&c, &again), "round trip changed:\n{printed}");
        c
    }

    #[test]
    fn component_with_negative_heap_round_trips() {
        let c = round_trip_component(
            "component {
               heap0 { -1 = 0; -2 = <3, -1>; }
               enclave get, bump;
               import log;
               fun get(x) { call log !(-1) }
               fun bump(x) { (-1) := !(-1) + 1; ret }
               fun relay(x) { call get x }
             }",
        );
        assert_eq!(c.h0, vec![(-1, IVal::Int(0)), (-2, IVal::pair(IVal::Int(3), IVal::Int(-1)))]);
        assert_eq!(c.enclave, vec!["get".to_string(), "bump".to_string()]);
        assert_eq!(c.imports, vec!["log".to_string()]);
    }

    #[test]
    fn context_with_computed_targets_round_trips() {
        let src = "context {
           fun main(z) {
             let a = new 4 in { a := !a + 1; (0 - 1) := 9; fork { call main 0 } }
           }
           fun probe(y) { destruct p = y as pair in { p.1 := 7 } else { !y } }
         }";
        let c = parse_context_li(src).unwrap();
        let again = parse_context_li(&c.to_string()).unwrap();
        assert_eq!(c.funs.len(), again.funs.len());
        for ((n1, f1), (n2, f2)) in c.funs.iter().zip(&again.funs) {
            assert_eq!(n1, n2);
            assert!(alpha_eq_fun(f1, f2));
        }
    }

    #[test]
    fn negative_literals_bind_tighter_than_subtraction() {
        let ctx = parse_context_li("context { fun main(z) { let x = 3 - -1 in skip } }").unwrap();
        let expect = parse_context_li("context { fun main(z) { let x = 3 - (0 - 1) in skip } }")
            .unwrap();
        // both evaluate to 4; shapes differ, so compare the printed arithmetic
        assert!(ctx.to_string().contains("3 - -1"));
        assert!(expect.to_string().contains("3 - (0 - 1)"));
    }

    #[test]
    fn non_negative_initial_addresses_are_rejected() {
        let err = parse_component_li(
            "component { heap0 { 0 = 1; } fun f(x) { skip } }",
        )
        .unwrap_err();
        assert!(err.to_string().contains("not negative"));
    }

    #[test]
    fn enclave_must_list_defined_functions() {
        let err = parse_component_li(
            "component { heap0 { -1 = 0; } enclave ghost; fun f(x) { skip } }",
        )
        .unwrap_err();
        assert!(err.to_string().contains("not a function"));
    }

    #[test]
    fn capability_tokens_cannot_be_written() {
        // no token syntax exists: `kroot` in value position is just a free
        // identifier in a body, and an error in the initial heap
        assert!(parse_component_li(
            "component { heap0 { -1 = kroot; } fun f(x) { skip } }"
        )
        .is_err());
    }

    #[test]
    fn let_iso_parses_beside_new() {
        let c = parse_component_li(
            "component {
               heap0 { -1 = 0; }
               enclave stash;
               fun stash(x) { let p = iso x in let q = new x in skip }
             }",
        )
        .unwrap();
        let body = &c.get_fun("stash").unwrap().body;
        assert!(matches!(body, IStmt::Seq(a, _) if matches!(**a, IStmt::LetIso(..))));
    }

    #[test]
    fn ret_only_closes_a_body() {
        assert!(parse_component_li(
            "component { heap0 { -1 = 0; } fun f(x) { ret; skip } }"
        )
        .is_err());
    }
}
