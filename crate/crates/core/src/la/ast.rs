//! Abstract syntax of the typed, concurrent source language.
//!
//! Components declare a store environment of trusted locations (`delta`),
//! functions whose parameters are always the shareable type `UN`, and the
//! imports they expect from the context. Type checking inserts explicit
//! coercion nodes at every use of the shareable judgment, so a checked tree
//! records its own typing derivation.

use crate::syntax::{Cmp, LocId, Name, Op};
use std::fmt;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug, Hash)]
pub enum TyA {
    Bool,
    Nat,
    Prod(Box<TyA>, Box<TyA>),
    Ref(Box<TyA>),
    Un,
}

impl TyA {
    pub fn prod(a: TyA, b: TyA) -> TyA {
        TyA::Prod(Box::new(a), Box::new(b))
    }

    pub fn reference(t: TyA) -> TyA {
        TyA::Ref(Box::new(t))
    }

    /// The shareable judgment: values of these types may cross the boundary
    /// (and be coerced to `UN`).
    pub fn shareable(&self) -> bool {
        match self {
            TyA::Bool | TyA::Nat | TyA::Un => true,
            TyA::Ref(t) => **t == TyA::Un,
            TyA::Prod(a, b) => a.shareable() && b.shareable(),
        }
    }

    /// Endorsement targets: one structural layer, nothing nested.
    pub fn superficial(&self) -> bool {
        match self {
            TyA::Bool | TyA::Nat => true,
            TyA::Prod(a, b) => **a == TyA::Un && **b == TyA::Un,
            TyA::Ref(t) => **t == TyA::Un,
            TyA::Un => false,
        }
    }

    /// Whether `UN` occurs anywhere inside. Trusted store entries must not
    /// mention it.
    pub fn mentions_un(&self) -> bool {
        match self {
            TyA::Bool | TyA::Nat => false,
            TyA::Un => true,
            TyA::Ref(t) => t.mentions_un(),
            TyA::Prod(a, b) => a.mentions_un() || b.mentions_un(),
        }
    }
}

impl fmt::Display for TyA {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // product is loosest and right-associative; Ref applies to an atom
        fn go(t: &TyA, f: &mut fmt::Formatter<'_>, atom: bool) -> fmt::Result {
            match t {
                TyA::Bool => write!(f, "Bool"),
                TyA::Nat => write!(f, "Nat"),
                TyA::Un => write!(f, "UN"),
                TyA::Ref(inner) => {
                    write!(f, "Ref ")?;
                    go(inner, f, true)
                }
                TyA::Prod(a, b) => {
                    if atom {
                        write!(f, "(")?;
                    }
                    go(a, f, true)?;
                    write!(f, " * ")?;
                    go(b, f, false)?;
                    if atom {
                        write!(f, ")")?;
                    }
                    Ok(())
                }
            }
        }
        go(self, f, false)
    }
}

// ---------------------------------------------------------------------------
// Values, expressions, statements
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum AVal {
    Bool(bool),
    Nat(u64),
    Pair(Box<AVal>, Box<AVal>),
    Loc(LocId),
}

impl AVal {
    pub fn pair(a: AVal, b: AVal) -> AVal {
        AVal::Pair(Box::new(a), Box::new(b))
    }

    pub fn locs(&self) -> Vec<LocId> {
        match self {
            AVal::Loc(l) => vec![*l],
            AVal::Pair(a, b) => {
                let mut v = a.locs();
                v.extend(b.locs());
                v
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum AExpr {
    Var(Name),
    Val(AVal),
    /// A trusted store entry referred to by its declared name; typed `Ref t`.
    Cell(Name),
    Op(Op, Box<AExpr>, Box<AExpr>),
    Cmp(Cmp, Box<AExpr>, Box<AExpr>),
    Pair(Box<AExpr>, Box<AExpr>),
    Proj(u8, Box<AExpr>),
    Deref(Box<AExpr>),
    /// Explicit shareable-to-`UN` coercion, inserted by the checker.
    Coerce(Box<AExpr>),
}

impl AExpr {
    pub fn nat(n: u64) -> AExpr {
        AExpr::Val(AVal::Nat(n))
    }

    pub fn var(x: impl Into<Name>) -> AExpr {
        AExpr::Var(x.into())
    }

    pub fn pair(a: AExpr, b: AExpr) -> AExpr {
        AExpr::Pair(Box::new(a), Box::new(b))
    }

    pub fn proj(i: u8, e: AExpr) -> AExpr {
        AExpr::Proj(i, Box::new(e))
    }

    pub fn deref(e: AExpr) -> AExpr {
        AExpr::Deref(Box::new(e))
    }

    pub fn coerce(e: AExpr) -> AExpr {
        AExpr::Coerce(Box::new(e))
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum AStmt {
    Skip,
    Seq(Box<AStmt>, Box<AStmt>),
    /// `let x : t = e in s`; the annotation is optional in the surface syntax
    /// and always present after checking.
    Let(Name, Option<TyA>, AExpr, Box<AStmt>),
    /// `let x = new e : t in s`; the allocated cell records `t`.
    New(Name, TyA, AExpr, Box<AStmt>),
    Assign(AExpr, AExpr),
    If(AExpr, Box<AStmt>, Box<AStmt>),
    Call(Name, AExpr),
    Fork(Box<AStmt>),
    /// `endorse x = e as phi in s`; `phi` must be superficial.
    Endorse(Name, AExpr, TyA, Box<AStmt>),
    Expr(AExpr),
    Ret,
}

impl AStmt {
    pub fn seq(a: AStmt, b: AStmt) -> AStmt {
        AStmt::Seq(Box::new(a), Box::new(b))
    }

    pub fn seq_all(stmts: Vec<AStmt>) -> AStmt {
        let mut it = stmts.into_iter().rev();
        let last = it.next().unwrap_or(AStmt::Skip);
        it.fold(last, |acc, s| AStmt::seq(s, acc))
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AFun {
    /// Parameter, implicitly at type `UN`.
    pub param: Name,
    pub body: AStmt,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ComponentLa {
    /// Trusted store entries: declaration order fixes location serials.
    pub delta: Vec<(Name, TyA)>,
    pub imports: Vec<Name>,
    pub funs: Vec<(Name, AFun)>,
}

impl ComponentLa {
    pub fn get_fun(&self, name: &str) -> Option<&AFun> {
        self.funs.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    pub fn delta_type(&self, name: &str) -> Option<&TyA> {
        self.delta.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ContextLa {
    pub funs: Vec<(Name, AFun)>,
}

impl ContextLa {
    pub fn get_fun(&self, name: &str) -> Option<&AFun> {
        self.funs.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }
}

// ---------------------------------------------------------------------------
// Alpha equivalence
// ---------------------------------------------------------------------------

fn alpha_expr(a: &AExpr, b: &AExpr, env: &[(Name, Name)]) -> bool {
    match (a, b) {
        (AExpr::Var(x), AExpr::Var(y)) => crate::lu::ast::alpha_var(x, y, env),
        (AExpr::Val(u), AExpr::Val(v)) => u == v,
        (AExpr::Cell(x), AExpr::Cell(y)) => x == y,
        (AExpr::Op(o1, a1, b1), AExpr::Op(o2, a2, b2)) => {
            o1 == o2 && alpha_expr(a1, a2, env) && alpha_expr(b1, b2, env)
        }
        (AExpr::Cmp(c1, a1, b1), AExpr::Cmp(c2, a2, b2)) => {
            c1 == c2 && alpha_expr(a1, a2, env) && alpha_expr(b1, b2, env)
        }
        (AExpr::Pair(a1, b1), AExpr::Pair(a2, b2)) => {
            alpha_expr(a1, a2, env) && alpha_expr(b1, b2, env)
        }
        (AExpr::Proj(i, e1), AExpr::Proj(j, e2)) => i == j && alpha_expr(e1, e2, env),
        (AExpr::Deref(e1), AExpr::Deref(e2)) => alpha_expr(e1, e2, env),
        (AExpr::Coerce(e1), AExpr::Coerce(e2)) => alpha_expr(e1, e2, env),
        _ => false,
    }
}

fn alpha_stmt(a: &AStmt, b: &AStmt, env: &mut Vec<(Name, Name)>) -> bool {
    match (a, b) {
        (AStmt::Skip, AStmt::Skip) | (AStmt::Ret, AStmt::Ret) => true,
        (AStmt::Seq(a1, b1), AStmt::Seq(a2, b2)) => {
            alpha_stmt(a1, a2, env) && alpha_stmt(b1, b2, env)
        }
        (AStmt::Let(x, t1, e1, s1), AStmt::Let(y, t2, e2, s2)) => {
            t1 == t2 && alpha_expr(e1, e2, env) && {
                env.push((x.clone(), y.clone()));
                let r = alpha_stmt(s1, s2, env);
                env.pop();
                r
            }
        }
        (AStmt::New(x, t1, e1, s1), AStmt::New(y, t2, e2, s2)) => {
            t1 == t2 && alpha_expr(e1, e2, env) && {
                env.push((x.clone(), y.clone()));
                let r = alpha_stmt(s1, s2, env);
                env.pop();
                r
            }
        }
        (AStmt::Assign(t1, e1), AStmt::Assign(t2, e2)) => {
            alpha_expr(t1, t2, env) && alpha_expr(e1, e2, env)
        }
        (AStmt::If(e1, t1, f1), AStmt::If(e2, t2, f2)) => {
            alpha_expr(e1, e2, env) && alpha_stmt(t1, t2, env) && alpha_stmt(f1, f2, env)
        }
        (AStmt::Call(f1, e1), AStmt::Call(f2, e2)) => f1 == f2 && alpha_expr(e1, e2, env),
        (AStmt::Fork(s1), AStmt::Fork(s2)) => alpha_stmt(s1, s2, env),
        (AStmt::Endorse(x, e1, p1, s1), AStmt::Endorse(y, e2, p2, s2)) => {
            p1 == p2 && alpha_expr(e1, e2, env) && {
                env.push((x.clone(), y.clone()));
                let r = alpha_stmt(s1, s2, env);
                env.pop();
                r
            }
        }
        (AStmt::Expr(e1), AStmt::Expr(e2)) => alpha_expr(e1, e2, env),
        _ => false,
    }
}

pub fn alpha_eq_stmt(a: &AStmt, b: &AStmt) -> bool {
    alpha_stmt(a, b, &mut Vec::new())
}

pub fn alpha_eq_fun(a: &AFun, b: &AFun) -> bool {
    let mut env = vec![(a.param.clone(), b.param.clone())];
    alpha_stmt(&a.body, &b.body, &mut env)
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

// precedence: cmp 1, add 2, mul 3, deref 4, proj 5, atom 6
fn fmt_expr(e: &AExpr, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
    match e {
        AExpr::Var(x) => write!(f, "{x}"),
        AExpr::Cell(n) => write!(f, "{n}"),
        AExpr::Val(v) => fmt_val(v, f),
        AExpr::Coerce(inner) => fmt_expr(inner, f, prec),
        AExpr::Op(op, a, b) => {
            let my = if *op == Op::Mul { 3 } else { 2 };
            if prec > my {
                write!(f, "(")?;
            }
            fmt_expr(a, f, my)?;
            write!(f, " {} ", op.symbol())?;
            fmt_expr(b, f, my + 1)?;
            if prec > my {
                write!(f, ")")?;
            }
            Ok(())
        }
        AExpr::Cmp(c, a, b) => {
            if prec > 1 {
                write!(f, "(")?;
            }
            fmt_expr(a, f, 2)?;
            write!(f, " {} ", c.symbol())?;
            fmt_expr(b, f, 2)?;
            if prec > 1 {
                write!(f, ")")?;
            }
            Ok(())
        }
        AExpr::Pair(a, b) => {
            // elements print at additive level: comparisons get parenthesized
            // so the closing `>` is unambiguous
            write!(f, "<")?;
            fmt_expr(a, f, 2)?;
            write!(f, ", ")?;
            fmt_expr(b, f, 2)?;
            write!(f, ">")
        }
        AExpr::Proj(i, inner) => {
            fmt_expr(inner, f, 5)?;
            write!(f, ".{i}")
        }
        AExpr::Deref(inner) => {
            if prec > 4 {
                write!(f, "(")?;
            }
            write!(f, "!")?;
            fmt_expr(inner, f, 5)?;
            if prec > 4 {
                write!(f, ")")?;
            }
            Ok(())
        }
    }
}

fn fmt_val(v: &AVal, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match v {
        AVal::Bool(true) => write!(f, "true"),
        AVal::Bool(false) => write!(f, "false"),
        AVal::Nat(n) => write!(f, "{n}"),
        AVal::Pair(a, b) => {
            write!(f, "<")?;
            fmt_val(a, f)?;
            write!(f, ", ")?;
            fmt_val(b, f)?;
            write!(f, ">")
        }
        AVal::Loc(l) => write!(f, "{l}"),
    }
}

impl fmt::Display for AExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_expr(self, f, 1)
    }
}

struct Ind(usize);

impl fmt::Display for Ind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for _ in 0..self.0 {
            write!(f, "  ")?;
        }
        Ok(())
    }
}

fn fmt_stmt(s: &AStmt, f: &mut fmt::Formatter<'_>, ind: usize) -> fmt::Result {
    match s {
        AStmt::Skip => write!(f, "{}skip", Ind(ind)),
        AStmt::Ret => write!(f, "{}ret", Ind(ind)),
        AStmt::Seq(a, b) => {
            fmt_stmt(a, f, ind)?;
            writeln!(f, ";")?;
            fmt_stmt(b, f, ind)
        }
        AStmt::Let(x, t, e, body) => {
            match t {
                Some(t) => write!(f, "{}let {x} : {t} = {e} in {{", Ind(ind))?,
                None => write!(f, "{}let {x} = {e} in {{", Ind(ind))?,
            }
            writeln!(f)?;
            fmt_stmt(body, f, ind + 1)?;
            writeln!(f)?;
            write!(f, "{}}}", Ind(ind))
        }
        AStmt::New(x, t, e, body) => {
            writeln!(f, "{}let {x} = new {e} : {t} in {{", Ind(ind))?;
            fmt_stmt(body, f, ind + 1)?;
            writeln!(f)?;
            write!(f, "{}}}", Ind(ind))
        }
        AStmt::Assign(t, e) => {
            write!(f, "{}", Ind(ind))?;
            fmt_expr(t, f, 6)?;
            write!(f, " := {e}")
        }
        AStmt::If(e, t, els) => {
            writeln!(f, "{}if {e} then {{", Ind(ind))?;
            fmt_stmt(t, f, ind + 1)?;
            writeln!(f)?;
            writeln!(f, "{}}} else {{", Ind(ind))?;
            fmt_stmt(els, f, ind + 1)?;
            writeln!(f)?;
            write!(f, "{}}}", Ind(ind))
        }
        AStmt::Call(fun, e) => {
            write!(f, "{}call {fun} ", Ind(ind))?;
            fmt_expr(e, f, 6)
        }
        AStmt::Fork(body) => {
            writeln!(f, "{}fork {{", Ind(ind))?;
            fmt_stmt(body, f, ind + 1)?;
            writeln!(f)?;
            write!(f, "{}}}", Ind(ind))
        }
        AStmt::Endorse(x, e, phi, body) => {
            writeln!(f, "{}endorse {x} = {e} as {phi} in {{", Ind(ind))?;
            fmt_stmt(body, f, ind + 1)?;
            writeln!(f)?;
            write!(f, "{}}}", Ind(ind))
        }
        AStmt::Expr(e) => write!(f, "{}{e}", Ind(ind)),
    }
}

impl fmt::Display for AStmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_stmt(self, f, 0)
    }
}

fn fmt_funs(funs: &[(Name, AFun)], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    for (name, fun) in funs {
        writeln!(f, "  fun {name}({param}) {{", param = fun.param)?;
        fmt_stmt(&fun.body, f, 2)?;
        writeln!(f)?;
        writeln!(f, "  }}")?;
    }
    Ok(())
}

impl fmt::Display for ComponentLa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "component {{")?;
        if !self.delta.is_empty() {
            writeln!(f, "  delta {{")?;
            for (n, t) in &self.delta {
                writeln!(f, "    {n} : {t};")?;
            }
            writeln!(f, "  }}")?;
        }
        if !self.imports.is_empty() {
            writeln!(f, "  import {};", self.imports.join(", "))?;
        }
        fmt_funs(&self.funs, f)?;
        write!(f, "}}")
    }
}

impl fmt::Display for ContextLa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "context {{")?;
        fmt_funs(&self.funs, f)?;
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shareable_covers_products_and_un_refs() {
        assert!(TyA::Nat.shareable());
        assert!(TyA::reference(TyA::Un).shareable());
        assert!(!TyA::reference(TyA::Nat).shareable());
        assert!(TyA::prod(TyA::Bool, TyA::reference(TyA::Un)).shareable());
        assert!(!TyA::prod(TyA::Bool, TyA::reference(TyA::Nat)).shareable());
    }

    #[test]
    fn superficial_is_one_layer() {
        assert!(TyA::prod(TyA::Un, TyA::Un).superficial());
        assert!(!TyA::prod(TyA::Nat, TyA::Un).superficial());
        assert!(TyA::reference(TyA::Un).superficial());
        assert!(!TyA::reference(TyA::Nat).superficial());
        assert!(!TyA::Un.superficial());
    }

    #[test]
    fn type_display_round_shape() {
        let t = TyA::prod(TyA::reference(TyA::Nat), TyA::prod(TyA::Bool, TyA::Un));
        assert_eq!(t.to_string(), "Ref Nat * Bool * UN");
        let nested = TyA::reference(TyA::prod(TyA::Nat, TyA::Nat));
        assert_eq!(nested.to_string(), "Ref (Nat * Nat)");
    }
}
