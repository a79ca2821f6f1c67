//! Type checking for the typed source language.
//!
//! The component checker is a checker and an elaborator at once: it returns
//! the same tree with every shareable-to-`UN` use wrapped in an explicit
//! coercion node and every `let` annotated, so a checked tree determines its
//! typing derivation and the compiler can be directed by it.
//!
//! The context checker enforces the attacker discipline: every expression is
//! at type `UN`, allocations must be at `UN`, trusted store entries cannot be
//! named, and endorsement is unavailable.

use super::ast::*;
use crate::syntax::{LocId, Name};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeError {
    #[error("unbound variable `{0}`")]
    UnboundVar(Name),
    #[error("expected `{expected}`, found `{found}`")]
    Mismatch { expected: TyA, found: TyA },
    #[error("`{0}` is not shareable and cannot cross to UN")]
    NotShareable(TyA),
    #[error("`{0}` is not a superficial type; endorsement checks one layer only")]
    NotSuperficial(TyA),
    #[error("dereferencing a `{0}`; only references can be read")]
    DerefNonRef(TyA),
    #[error("assignment target has type `{0}`, not a reference")]
    AssignNonRef(TyA),
    #[error("arithmetic operand has type `{0}`")]
    OpNonNat(TyA),
    #[error("projection from `{0}`")]
    ProjNonProd(TyA),
    #[error("guard has type `{0}`, expected Bool")]
    GuardNotBool(TyA),
    #[error("call target `{0}` is neither a component function nor an import")]
    UnknownFunction(Name),
    #[error("store entry `{0}` has type `{1}`, which mentions UN")]
    DeltaMentionsUn(Name, TyA),
    #[error("location literals cannot appear in programs")]
    LocationLiteral,
    #[error("attackers cannot endorse")]
    AttackerEndorse,
    #[error("attackers allocate at UN only, not `{0}`")]
    AttackerNewTyped(TyA),
    #[error("attackers may annotate only with UN, not `{0}`")]
    AttackerAnnotation(TyA),
    #[error("attacker mentions trusted store entry `{0}`")]
    AttackerMentionsStore(Name),
}

type Env = Vec<(Name, TyA)>;

fn lookup(env: &Env, x: &str) -> Option<TyA> {
    env.iter().rev().find(|(n, _)| n == x).map(|(_, t)| t.clone())
}

// ---------------------------------------------------------------------------
// Component checking
// ---------------------------------------------------------------------------

struct Ck<'a> {
    comp: &'a ComponentLa,
}

impl Ck<'_> {
    fn infer(&self, e: &AExpr, env: &Env) -> Result<(AExpr, TyA), TypeError> {
        match e {
            AExpr::Var(x) => match lookup(env, x) {
                Some(t) => Ok((e.clone(), t)),
                None => Err(TypeError::UnboundVar(x.clone())),
            },
            AExpr::Val(v) => Ok((e.clone(), self.val_type(v)?)),
            AExpr::Cell(n) => {
                let t = self
                    .comp
                    .delta_type(n)
                    .cloned()
                    .ok_or_else(|| TypeError::UnboundVar(n.clone()))?;
                Ok((e.clone(), TyA::reference(t)))
            }
            AExpr::Op(op, a, b) => {
                let a = self.check(a, &TyA::Nat, env)?;
                let b = self.check(b, &TyA::Nat, env)?;
                Ok((AExpr::Op(*op, Box::new(a), Box::new(b)), TyA::Nat))
            }
            AExpr::Cmp(c, a, b) => {
                let a = self.check(a, &TyA::Nat, env)?;
                let b = self.check(b, &TyA::Nat, env)?;
                Ok((AExpr::Cmp(*c, Box::new(a), Box::new(b)), TyA::Bool))
            }
            AExpr::Pair(a, b) => {
                let (a, ta) = self.infer(a, env)?;
                let (b, tb) = self.infer(b, env)?;
                Ok((AExpr::pair(a, b), TyA::prod(ta, tb)))
            }
            AExpr::Proj(i, inner) => {
                let (inner, t) = self.infer(inner, env)?;
                match t {
                    TyA::Prod(ta, tb) => {
                        let t = if *i == 1 { *ta } else { *tb };
                        Ok((AExpr::proj(*i, inner), t))
                    }
                    other => Err(TypeError::ProjNonProd(other)),
                }
            }
            AExpr::Deref(inner) => {
                let (inner, t) = self.infer(inner, env)?;
                match t {
                    TyA::Ref(t) => Ok((AExpr::deref(inner), *t)),
                    other => Err(TypeError::DerefNonRef(other)),
                }
            }
            AExpr::Coerce(inner) => {
                // re-checking an already elaborated tree
                let (inner, t) = self.infer(inner, env)?;
                if !t.shareable() {
                    return Err(TypeError::NotShareable(t));
                }
                Ok((AExpr::coerce(inner), TyA::Un))
            }
        }
    }

    fn val_type(&self, v: &AVal) -> Result<TyA, TypeError> {
        match v {
            AVal::Bool(_) => Ok(TyA::Bool),
            AVal::Nat(_) => Ok(TyA::Nat),
            AVal::Pair(a, b) => Ok(TyA::prod(self.val_type(a)?, self.val_type(b)?)),
            AVal::Loc(_) => Err(TypeError::LocationLiteral),
        }
    }

    /// Check `e` against `expected`, inserting a coercion when the expected
    /// type is `UN` and the inferred type is shareable.
    fn check(&self, e: &AExpr, expected: &TyA, env: &Env) -> Result<AExpr, TypeError> {
        let (e, found) = self.infer(e, env)?;
        if found == *expected {
            return Ok(e);
        }
        if *expected == TyA::Un {
            if found.shareable() {
                return Ok(AExpr::coerce(e));
            }
            return Err(TypeError::NotShareable(found));
        }
        Err(TypeError::Mismatch { expected: expected.clone(), found })
    }

    fn stmt(&self, s: &AStmt, env: &mut Env) -> Result<AStmt, TypeError> {
        match s {
            AStmt::Skip | AStmt::Ret => Ok(s.clone()),
            AStmt::Seq(a, b) => Ok(AStmt::seq(self.stmt(a, env)?, self.stmt(b, env)?)),
            AStmt::Let(x, ann, e, body) => {
                let (e, t) = match ann {
                    Some(t) => (self.check(e, t, env)?, t.clone()),
                    None => self.infer(e, env)?,
                };
                env.push((x.clone(), t.clone()));
                let body = self.stmt(body, env)?;
                env.pop();
                Ok(AStmt::Let(x.clone(), Some(t), e, Box::new(body)))
            }
            AStmt::New(x, t, e, body) => {
                let e = self.check(e, t, env)?;
                env.push((x.clone(), TyA::reference(t.clone())));
                let body = self.stmt(body, env)?;
                env.pop();
                Ok(AStmt::New(x.clone(), t.clone(), e, Box::new(body)))
            }
            AStmt::Assign(target, e) => {
                let (target, tt) = self.infer(target, env)?;
                match tt {
                    TyA::Ref(inner) => {
                        let e = self.check(e, &inner, env)?;
                        Ok(AStmt::Assign(target, e))
                    }
                    other => Err(TypeError::AssignNonRef(other)),
                }
            }
            AStmt::If(e, a, b) => {
                let (e, t) = self.infer(e, env)?;
                if t != TyA::Bool {
                    return Err(TypeError::GuardNotBool(t));
                }
                Ok(AStmt::If(e, Box::new(self.stmt(a, env)?), Box::new(self.stmt(b, env)?)))
            }
            AStmt::Call(f, e) => {
                let defined = self.comp.get_fun(f).is_some();
                let imported = self.comp.imports.contains(f);
                if !defined && !imported {
                    return Err(TypeError::UnknownFunction(f.clone()));
                }
                let e = self.check(e, &TyA::Un, env)?;
                Ok(AStmt::Call(f.clone(), e))
            }
            AStmt::Fork(body) => Ok(AStmt::Fork(Box::new(self.stmt(body, env)?))),
            AStmt::Endorse(x, e, phi, body) => {
                if !phi.superficial() {
                    return Err(TypeError::NotSuperficial(phi.clone()));
                }
                let e = self.check(e, &TyA::Un, env)?;
                env.push((x.clone(), phi.clone()));
                let body = self.stmt(body, env)?;
                env.pop();
                Ok(AStmt::Endorse(x.clone(), e, phi.clone(), Box::new(body)))
            }
            AStmt::Expr(e) => {
                let (e, _) = self.infer(e, env)?;
                Ok(AStmt::Expr(e))
            }
        }
    }
}

/// Check a component and return its elaborated form: explicit coercions,
/// every binder annotated.
pub fn typecheck_la(comp: &ComponentLa) -> Result<ComponentLa, TypeError> {
    for (n, t) in &comp.delta {
        if t.mentions_un() {
            return Err(TypeError::DeltaMentionsUn(n.clone(), t.clone()));
        }
    }
    let ck = Ck { comp };
    let mut funs = Vec::with_capacity(comp.funs.len());
    for (n, f) in &comp.funs {
        let mut env = vec![(f.param.clone(), TyA::Un)];
        let body = ck.stmt(&f.body, &mut env)?;
        funs.push((n.clone(), AFun { param: f.param.clone(), body }));
    }
    Ok(ComponentLa { delta: comp.delta.clone(), imports: comp.imports.clone(), funs })
}

// ---------------------------------------------------------------------------
// Attacker checking
// ---------------------------------------------------------------------------

fn un_expr(e: &AExpr, bound: &[Name], delta: &[Name]) -> Result<(), TypeError> {
    match e {
        AExpr::Var(x) => {
            if bound.iter().any(|b| b == x) {
                Ok(())
            } else if delta.iter().any(|d| d == x) {
                Err(TypeError::AttackerMentionsStore(x.clone()))
            } else {
                Err(TypeError::UnboundVar(x.clone()))
            }
        }
        AExpr::Val(AVal::Loc(_)) => Err(TypeError::LocationLiteral),
        AExpr::Val(_) => Ok(()),
        AExpr::Cell(n) => Err(TypeError::AttackerMentionsStore(n.clone())),
        AExpr::Op(_, a, b) | AExpr::Cmp(_, a, b) | AExpr::Pair(a, b) => {
            un_expr(a, bound, delta)?;
            un_expr(b, bound, delta)
        }
        AExpr::Proj(_, inner) | AExpr::Deref(inner) | AExpr::Coerce(inner) => {
            un_expr(inner, bound, delta)
        }
    }
}

fn un_stmt(s: &AStmt, bound: &mut Vec<Name>, delta: &[Name]) -> Result<(), TypeError> {
    match s {
        AStmt::Skip | AStmt::Ret => Ok(()),
        AStmt::Seq(a, b) => {
            un_stmt(a, bound, delta)?;
            un_stmt(b, bound, delta)
        }
        AStmt::Let(x, ann, e, body) => {
            if let Some(t) = ann {
                if *t != TyA::Un {
                    return Err(TypeError::AttackerAnnotation(t.clone()));
                }
            }
            un_expr(e, bound, delta)?;
            bound.push(x.clone());
            let r = un_stmt(body, bound, delta);
            bound.pop();
            r
        }
        AStmt::New(x, t, e, body) => {
            if *t != TyA::Un {
                return Err(TypeError::AttackerNewTyped(t.clone()));
            }
            un_expr(e, bound, delta)?;
            bound.push(x.clone());
            let r = un_stmt(body, bound, delta);
            bound.pop();
            r
        }
        AStmt::Assign(target, e) => {
            un_expr(target, bound, delta)?;
            un_expr(e, bound, delta)
        }
        AStmt::If(e, a, b) => {
            un_expr(e, bound, delta)?;
            un_stmt(a, bound, delta)?;
            un_stmt(b, bound, delta)
        }
        AStmt::Call(_, e) => un_expr(e, bound, delta),
        AStmt::Fork(body) => un_stmt(body, bound, delta),
        AStmt::Endorse(..) => Err(TypeError::AttackerEndorse),
        AStmt::Expr(e) => un_expr(e, bound, delta),
    }
}

/// Check a context against the attacker discipline, given the names of the
/// component's trusted store entries.
pub fn typecheck_un(ctx: &ContextLa, delta_names: &[Name]) -> Result<(), TypeError> {
    for (_, f) in &ctx.funs {
        let mut bound = vec![f.param.clone()];
        un_stmt(&f.body, &mut bound, delta_names)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Value typing against a heap view
// ---------------------------------------------------------------------------

/// Does `v` inhabit `t`, reading per-cell types through `ty_of`? Used by the
/// endorsement check, the store-conformance monitor guard, and the
/// instrumented heap-typing invariant.
pub fn val_has_type(ty_of: &dyn Fn(LocId) -> Option<TyA>, v: &AVal, t: &TyA) -> bool {
    match (v, t) {
        (AVal::Nat(_), TyA::Nat) => true,
        (AVal::Bool(_), TyA::Bool) => true,
        (AVal::Pair(a, b), TyA::Prod(ta, tb)) => {
            val_has_type(ty_of, a, ta) && val_has_type(ty_of, b, tb)
        }
        (AVal::Loc(l), TyA::Ref(inner)) => ty_of(*l).as_ref() == Some(inner),
        (AVal::Nat(_) | AVal::Bool(_), TyA::Un) => true,
        (AVal::Pair(a, b), TyA::Un) => {
            val_has_type(ty_of, a, &TyA::Un) && val_has_type(ty_of, b, &TyA::Un)
        }
        (AVal::Loc(l), TyA::Un) => ty_of(*l) == Some(TyA::Un),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::la::parse::{parse_component_la, parse_context_la};

    #[test]
    fn annotated_let_is_accepted() {
        let c = parse_component_la(
            "component { fun f(x) { let y : Nat = 3 in skip } }",
        )
        .unwrap();
        assert!(typecheck_la(&c).is_ok());
    }

    #[test]
    fn trusted_ref_cannot_cross_the_boundary() {
        let c = parse_component_la(
            "component {
               delta { cell : Nat; }
               import out;
               fun f(x) { call out cell }
             }",
        )
        .unwrap();
        assert_eq!(
            typecheck_la(&c),
            Err(TypeError::NotShareable(TyA::reference(TyA::Nat)))
        );
    }

    #[test]
    fn endorse_binds_at_the_checked_type() {
        let c = parse_component_la(
            "component {
               delta { cell : Nat; }
               fun f(x) { endorse q = x as Nat in cell := !cell + q }
             }",
        )
        .unwrap();
        let elaborated = typecheck_la(&c).unwrap();
        // the endorsed q is a Nat, so the arithmetic checks out
        assert!(matches!(
            elaborated.get_fun("f").unwrap().body,
            AStmt::Seq(ref a, _) if matches!(**a, AStmt::Endorse(..))
        ));
    }

    #[test]
    fn coercions_are_made_explicit() {
        let c = parse_component_la(
            "component { import g; fun f(x) { call g 3 } }",
        )
        .unwrap();
        let elaborated = typecheck_la(&c).unwrap();
        match &elaborated.get_fun("f").unwrap().body {
            AStmt::Seq(a, _) => match &**a {
                AStmt::Call(_, AExpr::Coerce(inner)) => {
                    assert_eq!(**inner, AExpr::nat(3));
                }
                other => panic!("expected a coerced call argument, got {other:?}"),
            },
            other => panic!("unexpected body shape {other:?}"),
        }
    }

    #[test]
    fn non_superficial_endorse_is_rejected() {
        let c = parse_component_la(
            "component { fun f(x) { endorse q = x as Nat * Nat in skip } }",
        )
        .unwrap();
        assert_eq!(
            typecheck_la(&c),
            Err(TypeError::NotSuperficial(TyA::prod(TyA::Nat, TyA::Nat)))
        );
    }

    #[test]
    fn delta_types_must_avoid_un() {
        let c = parse_component_la(
            "component { delta { leak : Ref UN; } fun f(x) { skip } }",
        )
        .unwrap();
        assert!(matches!(typecheck_la(&c), Err(TypeError::DeltaMentionsUn(..))));
    }

    #[test]
    fn attacker_discipline() {
        let delta = vec!["cell".to_string()];
        let ok = parse_context_la(
            "context { fun main(z) { let x = new 4 : UN in x := 5 } }",
        )
        .unwrap();
        assert_eq!(typecheck_un(&ok, &delta), Ok(()));

        let typed_new = parse_context_la(
            "context { fun main(z) { let x = new 4 : Nat in skip } }",
        )
        .unwrap();
        assert_eq!(
            typecheck_un(&typed_new, &delta),
            Err(TypeError::AttackerNewTyped(TyA::Nat))
        );

        let endorses = parse_context_la(
            "context { fun main(z) { endorse q = z as Nat in skip } }",
        )
        .unwrap();
        assert_eq!(typecheck_un(&endorses, &delta), Err(TypeError::AttackerEndorse));

        let mentions = parse_context_la("context { fun main(z) { cell := 3 } }").unwrap();
        assert_eq!(
            typecheck_un(&mentions, &delta),
            Err(TypeError::AttackerMentionsStore("cell".into()))
        );
    }

    #[test]
    fn value_typing_follows_heap_types() {
        use crate::syntax::LocId;
        let ty_of = |l: LocId| -> Option<TyA> {
            match l.0 {
                0 => Some(TyA::Nat),
                1 => Some(TyA::Un),
                _ => None,
            }
        };
        assert!(val_has_type(&ty_of, &AVal::Loc(LocId(0)), &TyA::reference(TyA::Nat)));
        assert!(!val_has_type(&ty_of, &AVal::Loc(LocId(0)), &TyA::Un));
        assert!(val_has_type(&ty_of, &AVal::Loc(LocId(1)), &TyA::Un));
        assert!(val_has_type(
            &ty_of,
            &AVal::pair(AVal::Nat(1), AVal::Loc(LocId(1))),
            &TyA::Un
        ));
        assert!(!val_has_type(&ty_of, &AVal::pair(AVal::Nat(1), AVal::Bool(true)), &TyA::Nat));
    }
}
