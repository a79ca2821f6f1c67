//! Surface syntax for the concurrent capability target.
//!
//! ```text
//! component {
//!   heap0 { 0 = 0 : k0; 1 = <0, k0> : k1; }
//!   fun get(x) { destruct n = x as nat in { 0 := n with k0 } else { skip } }
//! }
//! context { fun main(z) { fork { call get 1 }; call get 2 } }
//! ```
//!
//! Capability names are declared by their first appearance in the `heap0`
//! block, reading each cell value before its tag; that order fixes token
//! identities. A cell without `: name` is open. Function bodies use the
//! names as ordinary identifiers; they become literals at plug time.

use super::ast::*;
use crate::lex::{is_reserved, lex, Cursor, ParseError, Tok};
use crate::lp::ast::{PExpr, PVal, Tag};
use crate::lp::parse::{name, name_list, parse_expr, parse_postfix};
use crate::syntax::{CapId, Name};
use std::collections::BTreeSet;

pub enum ParsedLc {
    Component(ComponentLc),
    Context(ContextLc),
}

pub fn parse_lc(src: &str) -> Result<ParsedLc, ParseError> {
    let mut cur = Cursor::new(lex(src)?);
    if cur.peek_kw("component") {
        parse_component_at(&mut cur).map(ParsedLc::Component)
    } else if cur.peek_kw("context") {
        parse_context_at(&mut cur).map(ParsedLc::Context)
    } else {
        Err(cur.error("expected `component` or `context`"))
    }
}

pub fn parse_component_lc(src: &str) -> Result<ComponentLc, ParseError> {
    let mut cur = Cursor::new(lex(src)?);
    let c = parse_component_at(&mut cur)?;
    cur.expect_end()?;
    Ok(c)
}

pub fn parse_context_lc(src: &str) -> Result<ContextLc, ParseError> {
    let mut cur = Cursor::new(lex(src)?);
    let c = parse_context_at(&mut cur)?;
    cur.expect_end()?;
    Ok(c)
}

fn parse_component_at(cur: &mut Cursor) -> Result<ComponentLc, ParseError> {
    cur.expect_kw("component")?;
    cur.expect(Tok::LBrace)?;
    let mut h0 = Vec::new();
    let mut cap_names: Vec<Name> = Vec::new();
    if cur.eat_kw("heap0") {
        cur.expect(Tok::LBrace)?;
        while !cur.eat(Tok::RBrace) {
            let addr = cur.nat()?;
            if h0.iter().any(|c: &H0Cell| c.addr == addr) {
                return Err(cur.error(format!("duplicate initial-heap address {addr}")));
            }
            cur.expect(Tok::Eq)?;
            let val = parse_h0_val(cur, &mut cap_names)?;
            let tag = if cur.eat(Tok::Colon) {
                if cur.eat_kw("bot") {
                    Tag::Bot
                } else {
                    Tag::Cap(intern_cap(name(cur)?, &mut cap_names))
                }
            } else {
                Tag::Bot
            };
            cur.expect(Tok::Semi)?;
            h0.push(H0Cell { addr, val, tag });
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
        if cap_names.contains(n) {
            return Err(cur.error(format!("`{n}` names both a function and a capability")));
        }
    }
    for i in &imports {
        if cap_names.contains(i) {
            return Err(cur.error(format!("`{i}` names both an import and a capability")));
        }
    }
    Ok(ComponentLc { h0, cap_names, imports, funs })
}

fn parse_context_at(cur: &mut Cursor) -> Result<ContextLc, ParseError> {
    cur.expect_kw("context")?;
    cur.expect(Tok::LBrace)?;
    let funs = parse_funs(cur)?;
    cur.expect(Tok::RBrace)?;
    check_distinct(&funs, cur)?;
    Ok(ContextLc { funs })
}

pub(crate) fn intern_cap(n: Name, names: &mut Vec<Name>) -> CapId {
    match names.iter().position(|m| *m == n) {
        Some(i) => CapId(i as u64),
        None => {
            names.push(n);
            CapId(names.len() as u64 - 1)
        }
    }
}

pub(crate) fn parse_h0_val(cur: &mut Cursor, names: &mut Vec<Name>) -> Result<PVal, ParseError> {
    match cur.peek() {
        Some(Tok::Nat(_)) => Ok(PVal::Nat(cur.nat()?)),
        Some(Tok::Lt) => {
            cur.next();
            let a = parse_h0_val(cur, names)?;
            cur.expect(Tok::Comma)?;
            let b = parse_h0_val(cur, names)?;
            cur.expect(Tok::Gt)?;
            Ok(PVal::pair(a, b))
        }
        Some(Tok::Ident(s)) if s == "bot" => {
            Err(cur.error("`bot` is the open tag, not a capability name"))
        }
        Some(Tok::Ident(_)) => Ok(PVal::Cap(intern_cap(name(cur)?, names))),
        Some(t) => Err(cur.error(format!("expected initial-heap value, found {}", t.describe()))),
        None => Err(ParseError::Eof { expected: "initial-heap value".into() }),
    }
}

fn check_distinct(funs: &[(Name, CFun)], cur: &Cursor) -> Result<(), ParseError> {
    let mut seen = BTreeSet::new();
    for (n, _) in funs {
        if !seen.insert(n.clone()) {
            return Err(cur.error(format!("duplicate function `{n}`")));
        }
    }
    Ok(())
}

fn parse_funs(cur: &mut Cursor) -> Result<Vec<(Name, CFun)>, ParseError> {
    let mut funs = Vec::new();
    while cur.eat_kw("fun") {
        let fname = name(cur)?;
        cur.expect(Tok::LParen)?;
        let param = name(cur)?;
        cur.expect(Tok::RParen)?;
        cur.expect(Tok::LBrace)?;
        let body = parse_body(cur)?;
        cur.expect(Tok::RBrace)?;
        funs.push((fname, CFun { param, body }));
    }
    Ok(funs)
}

fn parse_body(cur: &mut Cursor) -> Result<CStmt, ParseError> {
    let mut stmts = Vec::new();
    loop {
        if cur.peek_kw("ret") {
            cur.next();
            if cur.peek() != Some(&Tok::RBrace) {
                return Err(cur.error("`ret` only closes a function body"));
            }
            stmts.push(CStmt::Ret);
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
    if !matches!(stmts.last(), Some(CStmt::Ret)) {
        stmts.push(CStmt::Ret);
    }
    Ok(CStmt::seq_all(stmts))
}

fn parse_stmt(cur: &mut Cursor) -> Result<CStmt, ParseError> {
    if cur.peek_kw("ret") {
        return Err(cur.error("`ret` only closes a function body"));
    }
    if cur.eat_kw("skip") {
        return Ok(CStmt::Skip);
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
            return Ok(CStmt::LetNew(x, e, s));
        }
        if cur.eat_kw("hide") {
            let e = parse_expr(cur)?;
            cur.expect_kw("in")?;
            let s = Box::new(parse_stmt(cur)?);
            return Ok(CStmt::LetHide(x, e, s));
        }
        let e = parse_expr(cur)?;
        cur.expect_kw("in")?;
        let s = Box::new(parse_stmt(cur)?);
        return Ok(CStmt::Let(x, e, s));
    }
    if cur.eat_kw("letatom") {
        let x = name(cur)?;
        cur.expect(Tok::Eq)?;
        let e = parse_expr(cur)?;
        cur.expect_kw("in")?;
        let s = Box::new(parse_stmt(cur)?);
        return Ok(CStmt::LetAtom(x, e, s));
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
        return Ok(CStmt::Destruct(x, e, pat, hit, miss));
    }
    if cur.eat_kw("fork") {
        cur.expect(Tok::LBrace)?;
        let s = parse_block(cur)?;
        cur.expect(Tok::RBrace)?;
        return Ok(CStmt::Fork(Box::new(s)));
    }
    if cur.eat_kw("ifz") {
        let e = parse_expr(cur)?;
        cur.expect_kw("then")?;
        let t = Box::new(parse_stmt(cur)?);
        cur.expect_kw("else")?;
        let els = Box::new(parse_stmt(cur)?);
        return Ok(CStmt::Ifz(e, t, els));
    }
    if cur.eat_kw("call") {
        let fname = name(cur)?;
        let e = parse_expr(cur)?;
        return Ok(CStmt::Call(fname, e));
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
        return Ok(CStmt::AssignWith(target, e, w));
    }
    let e = parse_expr(cur)?;
    Ok(CStmt::Expr(e))
}

fn parse_block(cur: &mut Cursor) -> Result<CStmt, ParseError> {
    let mut stmts = vec![parse_stmt(cur)?];
    while cur.eat(Tok::Semi) {
        if cur.peek() == Some(&Tok::RBrace) {
            break;
        }
        stmts.push(parse_stmt(cur)?);
    }
    Ok(CStmt::seq_all(stmts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip_component(src: &str) -> ComponentLc {
        let c = parse_component_lc(src).expect("parses");
        let printed = c.to_string();
        let again = parse_component_lc(&printed)
            .unwrap_or_else(|e| panic!("reparse failed: {e}\n{printed}"));
        assert!(alpha_eq_component(&c, &again), "round trip changed:\n{printed}");
        c
    }

    #[test]
    fn component_with_heap_round_trips() {
        let c = round_trip_component(
            "component {
               heap0 { 0 = 0 : k0; 1 = <0, k0> : k1; 2 = 7; }
               import log;
               fun get(x) {
                 destruct n = x as nat in { 0 := n with k0 } else { call log 1 }
               }
               fun spawn(x) { fork { letatom c = 5 in let a = c.1 in a := !a with c.2 + 1 with c.2 }; ret }
             }",
        );
        assert_eq!(c.cap_names, vec!["k0".to_string(), "k1".to_string()]);
        assert_eq!(c.h0.len(), 3);
        assert_eq!(c.h0[1].val, PVal::pair(PVal::Nat(0), PVal::Cap(CapId(0))));
        assert_eq!(c.h0[2].tag, Tag::Bot);
    }

    #[test]
    fn capability_identities_follow_first_appearance() {
        // the value of cell 0 is read before its tag
        let c = parse_component_lc(
            "component { heap0 { 0 = <1, kb> : ka; 1 = 0 : kb; } fun f(x) { skip } }",
        )
        .unwrap();
        assert_eq!(c.cap_names, vec!["kb".to_string(), "ka".to_string()]);
        assert_eq!(c.h0[0].tag, Tag::Cap(CapId(1)));
        assert_eq!(c.h0[1].tag, Tag::Cap(CapId(0)));
    }

    #[test]
    fn context_round_trips() {
        let src = "context {
           fun main(z) { fork { call poke 0 }; let a = new 3 in let k = hide a in call poke <a, k> }
           fun poke(y) { destruct p = y as pair in { let t = p.1 in t := 9 with p.2 } else { skip } }
         }";
        let c = parse_context_lc(src).unwrap();
        let again = parse_context_lc(&c.to_string()).unwrap();
        assert_eq!(c.funs.len(), again.funs.len());
        for ((n1, f1), (n2, f2)) in c.funs.iter().zip(&again.funs) {
            assert_eq!(n1, n2);
            assert!(alpha_eq_fun(f1, f2));
        }
    }

    #[test]
    fn open_tag_is_not_a_capability_value() {
        let err = parse_component_lc(
            "component { heap0 { 0 = bot; } fun f(x) { skip } }",
        )
        .unwrap_err();
        assert!(err.to_string().contains("open tag"));
    }

    #[test]
    fn duplicate_heap_address_is_rejected() {
        let err = parse_component_lc(
            "component { heap0 { 0 = 1 : k0; 0 = 2 : k1; } fun f(x) { skip } }",
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate initial-heap address"));
    }

    #[test]
    fn capability_and_function_namespaces_stay_apart() {
        let err = parse_component_lc(
            "component { heap0 { 0 = 0 : get; } fun get(x) { skip } }",
        )
        .unwrap_err();
        assert!(err.to_string().contains("both a function and a capability"));
    }

    #[test]
    fn ret_only_closes_a_body() {
        assert!(parse_component_lc(
            "component { heap0 { } fun f(x) { ret; skip } }"
        )
        .is_err());
    }

    #[test]
    fn destruct_chains_nest_by_proximity() {
        let one = parse_component_lc(
            "component {
               fun f(x) {
                 destruct a = x as nat in destruct b = x as pair in skip else 1 else 2
               }
             }",
        )
        .unwrap();
        let two = parse_component_lc(
            "component {
               fun f(x) {
                 destruct a = x as nat in { destruct b = x as pair in { skip } else { 1 } } else { 2 }
               }
             }",
        )
        .unwrap();
        assert!(alpha_eq_component(&one, &two));
    }
}
