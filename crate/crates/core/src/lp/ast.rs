//! Abstract syntax of the capability-machine target language.

use crate::syntax::{CapId, Cmp, Name, Op};
use std::fmt;

/// Runtime values: naturals (doubling as heap addresses), unforgeable
/// capability tokens, and pairs.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum PVal {
    Nat(u64),
    Cap(CapId),
    Pair(Box<PVal>, Box<PVal>),
}

impl PVal {
    pub fn pair(a: PVal, b: PVal) -> PVal {
        PVal::Pair(Box::new(a), Box::new(b))
    }

    /// Comparison results: 0 is true, 1 is false.
    pub fn of_bool(b: bool) -> PVal {
        PVal::Nat(if b { 0 } else { 1 })
    }

    /// Naturals occurring anywhere in the value (potential addresses).
    pub fn nats(&self) -> Vec<u64> {
        let mut out = Vec::new();
        self.walk(&mut |v| {
            if let PVal::Nat(n) = v {
                out.push(*n);
            }
        });
        out
    }

    /// Capability tokens occurring anywhere in the value.
    pub fn caps(&self) -> Vec<CapId> {
        let mut out = Vec::new();
        self.walk(&mut |v| {
            if let PVal::Cap(k) = v {
                out.push(*k);
            }
        });
        out
    }

    fn walk(&self, f: &mut dyn FnMut(&PVal)) {
        f(self);
        if let PVal::Pair(a, b) = self {
            a.walk(f);
            b.walk(f);
        }
    }
}

impl fmt::Display for PVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PVal::Nat(n) => write!(f, "{n}"),
            PVal::Cap(k) => write!(f, "{k}"),
            PVal::Pair(a, b) => write!(f, "<{a}, {b}>"),
        }
    }
}

/// Protection tag on a heap cell: public, or guarded by a capability.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Tag {
    Bot,
    Cap(CapId),
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Bot => write!(f, "bot"),
            Tag::Cap(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum PExpr {
    Var(Name),
    Val(PVal),
    Op(Op, Box<PExpr>, Box<PExpr>),
    Cmp(Cmp, Box<PExpr>, Box<PExpr>),
    Pair(Box<PExpr>, Box<PExpr>),
    Proj(u8, Box<PExpr>),
    /// `!e with w`: dereference presenting a capability.
    DerefWith(Box<PExpr>, Box<PExpr>),
}

impl PExpr {
    pub fn nat(n: u64) -> PExpr {
        PExpr::Val(PVal::Nat(n))
    }

    pub fn var(x: impl Into<Name>) -> PExpr {
        PExpr::Var(x.into())
    }

    pub fn pair(a: PExpr, b: PExpr) -> PExpr {
        PExpr::Pair(Box::new(a), Box::new(b))
    }

    pub fn proj(i: u8, e: PExpr) -> PExpr {
        PExpr::Proj(i, Box::new(e))
    }

    pub fn deref_with(e: PExpr, w: PExpr) -> PExpr {
        PExpr::DerefWith(Box::new(e), Box::new(w))
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum PStmt {
    Skip,
    Seq(Box<PStmt>, Box<PStmt>),
    Let(Name, PExpr, Box<PStmt>),
    /// `ifz e then s else s`: zero takes the first branch.
    Ifz(PExpr, Box<PStmt>, Box<PStmt>),
    Call(Name, PExpr),
    LetNew(Name, PExpr, Box<PStmt>),
    /// `let k = hide e in s`: mint a fresh capability onto an unprotected
    /// cell.
    LetHide(Name, PExpr, Box<PStmt>),
    /// `target := value with w`.
    AssignWith(PExpr, PExpr, PExpr),
    Expr(PExpr),
    Ret,
}

impl PStmt {
    pub fn seq(a: PStmt, b: PStmt) -> PStmt {
        PStmt::Seq(Box::new(a), Box::new(b))
    }

    pub fn seq_all(mut stmts: Vec<PStmt>) -> PStmt {
        let last = stmts.pop().unwrap_or(PStmt::Skip);
        stmts.into_iter().rev().fold(last, |acc, s| PStmt::seq(s, acc))
    }

    pub fn let_in(x: impl Into<Name>, e: PExpr, s: PStmt) -> PStmt {
        PStmt::Let(x.into(), e, Box::new(s))
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PFun {
    pub param: Name,
    pub body: PStmt,
}

/// Component: functions plus imports. The root cell (address 0, guarded by
/// the root capability) is implicit; `kroot` is a legal literal only inside
/// component code.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ComponentLp {
    pub imports: Vec<Name>,
    pub funs: Vec<(Name, PFun)>,
}

/// Context (attacker): functions only, no heap, no capability literals.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ContextLp {
    pub funs: Vec<(Name, PFun)>,
}

impl ComponentLp {
    pub fn get_fun(&self, name: &str) -> Option<&PFun> {
        self.funs.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }
}

impl ContextLp {
    pub fn get_fun(&self, name: &str) -> Option<&PFun> {
        self.funs.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }
}

// ---------------------------------------------------------------------------
// Alpha-equivalence
// ---------------------------------------------------------------------------

pub(crate) fn alpha_expr(a: &PExpr, b: &PExpr, env: &mut Vec<(Name, Name)>) -> bool {
    use PExpr::*;
    match (a, b) {
        (Var(x), Var(y)) => crate::lu::ast::alpha_var(x, y, env),
        (Val(u), Val(v)) => u == v,
        (Op(o1, a1, b1), Op(o2, a2, b2)) => {
            o1 == o2 && alpha_expr(a1, a2, env) && alpha_expr(b1, b2, env)
        }
        (Cmp(c1, a1, b1), Cmp(c2, a2, b2)) => {
            c1 == c2 && alpha_expr(a1, a2, env) && alpha_expr(b1, b2, env)
        }
        (Pair(a1, b1), Pair(a2, b2)) => alpha_expr(a1, a2, env) && alpha_expr(b1, b2, env),
        (Proj(i, e1), Proj(j, e2)) => i == j && alpha_expr(e1, e2, env),
        (DerefWith(e1, w1), DerefWith(e2, w2)) => {
            alpha_expr(e1, e2, env) && alpha_expr(w1, w2, env)
        }
        _ => false,
    }
}

fn alpha_binder(x: &Name, y: &Name, s1: &PStmt, s2: &PStmt, env: &mut Vec<(Name, Name)>) -> bool {
    env.push((x.clone(), y.clone()));
    let r = alpha_stmt(s1, s2, env);
    env.pop();
    r
}

fn alpha_stmt(a: &PStmt, b: &PStmt, env: &mut Vec<(Name, Name)>) -> bool {
    use PStmt::*;
    match (a, b) {
        (Skip, Skip) | (Ret, Ret) => true,
        (Seq(a1, b1), Seq(a2, b2)) => alpha_stmt(a1, a2, env) && alpha_stmt(b1, b2, env),
        (Let(x, e1, s1), Let(y, e2, s2)) => {
            alpha_expr(e1, e2, env) && alpha_binder(x, y, s1, s2, env)
        }
        (LetNew(x, e1, s1), LetNew(y, e2, s2)) => {
            alpha_expr(e1, e2, env) && alpha_binder(x, y, s1, s2, env)
        }
        (LetHide(x, e1, s1), LetHide(y, e2, s2)) => {
            alpha_expr(e1, e2, env) && alpha_binder(x, y, s1, s2, env)
        }
        (Ifz(e1, t1, f1), Ifz(e2, t2, f2)) => {
            alpha_expr(e1, e2, env) && alpha_stmt(t1, t2, env) && alpha_stmt(f1, f2, env)
        }
        (Call(f1, e1), Call(f2, e2)) => f1 == f2 && alpha_expr(e1, e2, env),
        (AssignWith(t1, e1, w1), AssignWith(t2, e2, w2)) => {
            alpha_expr(t1, t2, env) && alpha_expr(e1, e2, env) && alpha_expr(w1, w2, env)
        }
        (Expr(e1), Expr(e2)) => alpha_expr(e1, e2, env),
        _ => false,
    }
}

pub fn alpha_eq_stmt(a: &PStmt, b: &PStmt) -> bool {
    alpha_stmt(a, b, &mut Vec::new())
}

pub fn alpha_eq_fun(a: &PFun, b: &PFun) -> bool {
    let mut env = vec![(a.param.clone(), b.param.clone())];
    alpha_stmt(&a.body, &b.body, &mut env)
}

pub fn alpha_eq_component(a: &ComponentLp, b: &ComponentLp) -> bool {
    a.imports == b.imports
        && a.funs.len() == b.funs.len()
        && a.funs
            .iter()
            .zip(&b.funs)
            .all(|((n1, f1), (n2, f2))| n1 == n2 && alpha_eq_fun(f1, f2))
}

// ---------------------------------------------------------------------------
// Pretty printing
// ---------------------------------------------------------------------------

fn expr_prec(e: &PExpr) -> u8 {
    match e {
        PExpr::Cmp(..) => 1,
        PExpr::Op(Op::Add | Op::Sub, ..) => 2,
        PExpr::Op(Op::Mul, ..) => 3,
        PExpr::DerefWith(..) => 4,
        PExpr::Proj(..) => 5,
        _ => 6,
    }
}

pub(crate) fn fmt_expr(e: &PExpr, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let p = expr_prec(e);
    if p < min {
        write!(f, "(")?;
    }
    match e {
        PExpr::Var(x) => write!(f, "{x}")?,
        PExpr::Val(v) => write!(f, "{v}")?,
        PExpr::Op(op, a, b) => {
            fmt_expr(a, p, f)?;
            write!(f, " {} ", op.symbol())?;
            fmt_expr(b, p + 1, f)?;
        }
        PExpr::Cmp(c, a, b) => {
            fmt_expr(a, p + 1, f)?;
            write!(f, " {} ", c.symbol())?;
            fmt_expr(b, p + 1, f)?;
        }
        PExpr::Pair(a, b) => {
            // elements print at additive level: comparisons get parenthesized
            // so the closing `>` is unambiguous
            write!(f, "<")?;
            fmt_expr(a, 2, f)?;
            write!(f, ", ")?;
            fmt_expr(b, 2, f)?;
            write!(f, ">")?;
        }
        PExpr::Proj(i, e) => {
            fmt_expr(e, 5, f)?;
            write!(f, ".{i}")?;
        }
        PExpr::DerefWith(e, w) => {
            write!(f, "!")?;
            fmt_expr(e, 5, f)?;
            write!(f, " with ")?;
            fmt_expr(w, 5, f)?;
        }
    }
    if p < min {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for PExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_expr(self, 0, f)
    }
}

fn is_block(s: &PStmt) -> bool {
    matches!(s, PStmt::Seq(..))
}

fn fmt_scope(s: &PStmt, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if is_block(s) {
        fmt_braced(s, f)
    } else {
        fmt_stmt(s, f)
    }
}

fn fmt_braced(s: &PStmt, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    write!(f, "{{ ")?;
    fmt_stmt(s, f)?;
    write!(f, " }}")
}

struct AtomExpr<'a>(&'a PExpr);

impl fmt::Display for AtomExpr<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_expr(self.0, 6, f)
    }
}

fn fmt_stmt(s: &PStmt, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match s {
        PStmt::Skip => write!(f, "skip"),
        PStmt::Seq(a, b) => {
            fmt_stmt(a, f)?;
            write!(f, "; ")?;
            fmt_stmt(b, f)
        }
        PStmt::Let(x, e, s) => {
            write!(f, "let {x} = {e} in ")?;
            fmt_scope(s, f)
        }
        PStmt::Ifz(e, t, els) => {
            write!(f, "ifz {e} then ")?;
            fmt_braced(t, f)?;
            write!(f, " else ")?;
            fmt_braced(els, f)
        }
        PStmt::Call(name, e) => write!(f, "call {name} {}", AtomExpr(e)),
        PStmt::LetNew(x, e, s) => {
            write!(f, "let {x} = new {e} in ")?;
            fmt_scope(s, f)
        }
        PStmt::LetHide(x, e, s) => {
            write!(f, "let {x} = hide {e} in ")?;
            fmt_scope(s, f)
        }
        PStmt::AssignWith(t, e, w) => {
            write!(f, "{} := {e} with {}", AtomExpr(t), AtomExpr(w))
        }
        PStmt::Expr(e) => write!(f, "{e}"),
        PStmt::Ret => write!(f, "ret"),
    }
}

impl fmt::Display for PStmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_stmt(self, f)
    }
}

impl fmt::Display for ComponentLp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "component {{")?;
        if !self.imports.is_empty() {
            writeln!(f, "  import {};", self.imports.join(", "))?;
        }
        for (name, fun) in &self.funs {
            writeln!(f, "  fun {name}({}) {{ {} }}", fun.param, fun.body)?;
        }
        write!(f, "}}")
    }
}

impl fmt::Display for ContextLp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "context {{")?;
        for (name, fun) in &self.funs {
            writeln!(f, "  fun {name}({}) {{ {} }}", fun.param, fun.body)?;
        }
        write!(f, "}}")
    }
}
