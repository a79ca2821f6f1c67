//! Abstract syntax of the enclave-isolation target.
//!
//! Addresses are integers: non-negative cells are open to everyone, negative
//! cells belong to the single enclave and only functions on the component's
//! enclave list may touch them. There are no tags and no witnesses, so
//! dereference and assignment are plain. Capability tokens remain a value
//! form for uniformity with the other targets, but no rule produces one and
//! the surface syntax cannot write one.

use crate::lc::ast::Pattern;
use crate::syntax::{CapId, Cmp, Name, Op};
use std::fmt;

/// Runtime values: integers (doubling as heap addresses) and pairs.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum IVal {
    Int(i64),
    Pair(Box<IVal>, Box<IVal>),
    Cap(CapId),
}

impl IVal {
    pub fn pair(a: IVal, b: IVal) -> IVal {
        IVal::Pair(Box::new(a), Box::new(b))
    }

    /// Comparison results: 0 is true, 1 is false.
    pub fn of_bool(b: bool) -> IVal {
        IVal::Int(if b { 0 } else { 1 })
    }

    /// Integers occurring anywhere in the value (potential addresses).
    pub fn ints(&self) -> Vec<i64> {
        let mut out = Vec::new();
        self.walk(&mut |v| {
            if let IVal::Int(n) = v {
                out.push(*n);
            }
        });
        out
    }

    fn walk(&self, f: &mut dyn FnMut(&IVal)) {
        f(self);
        if let IVal::Pair(a, b) = self {
            a.walk(f);
            b.walk(f);
        }
    }
}

impl fmt::Display for IVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IVal::Int(n) => write!(f, "{n}"),
            IVal::Pair(a, b) => write!(f, "<{a}, {b}>"),
            IVal::Cap(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum IExpr {
    Var(Name),
    Val(IVal),
    Op(Op, Box<IExpr>, Box<IExpr>),
    Cmp(Cmp, Box<IExpr>, Box<IExpr>),
    Pair(Box<IExpr>, Box<IExpr>),
    Proj(u8, Box<IExpr>),
    /// `!e`: plain dereference, gated by function identity at run time.
    Deref(Box<IExpr>),
}

impl IExpr {
    pub fn int(n: i64) -> IExpr {
        IExpr::Val(IVal::Int(n))
    }

    pub fn var(x: impl Into<Name>) -> IExpr {
        IExpr::Var(x.into())
    }

    pub fn pair(a: IExpr, b: IExpr) -> IExpr {
        IExpr::Pair(Box::new(a), Box::new(b))
    }

    pub fn proj(i: u8, e: IExpr) -> IExpr {
        IExpr::Proj(i, Box::new(e))
    }

    pub fn deref(e: IExpr) -> IExpr {
        IExpr::Deref(Box::new(e))
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum IStmt {
    Skip,
    Seq(Box<IStmt>, Box<IStmt>),
    Let(Name, IExpr, Box<IStmt>),
    Ifz(IExpr, Box<IStmt>, Box<IStmt>),
    Call(Name, IExpr),
    LetNew(Name, IExpr, Box<IStmt>),
    /// `let x = iso e in s`: allocate the next negative address; only
    /// enclave functions may execute this.
    LetIso(Name, IExpr, Box<IStmt>),
    /// `target := value`; the gate applies when the target is negative.
    Assign(IExpr, IExpr),
    Destruct(Name, IExpr, Pattern, Box<IStmt>, Box<IStmt>),
    Fork(Box<IStmt>),
    Expr(IExpr),
    Ret,
}

impl IStmt {
    pub fn seq(a: IStmt, b: IStmt) -> IStmt {
        IStmt::Seq(Box::new(a), Box::new(b))
    }

    pub fn seq_all(mut stmts: Vec<IStmt>) -> IStmt {
        let last = stmts.pop().unwrap_or(IStmt::Skip);
        stmts.into_iter().rev().fold(last, |acc, s| IStmt::seq(s, acc))
    }

    pub fn let_in(x: impl Into<Name>, e: IExpr, s: IStmt) -> IStmt {
        IStmt::Let(x.into(), e, Box::new(s))
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct IFun {
    pub param: Name,
    pub body: IStmt,
}

/// Component: protected initial heap (negative addresses only), imports,
/// functions, and the list of functions residing in the enclave.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ComponentLi {
    pub h0: Vec<(i64, IVal)>,
    pub enclave: Vec<Name>,
    pub imports: Vec<Name>,
    pub funs: Vec<(Name, IFun)>,
}

/// Context (attacker): functions only. Nothing is withheld syntactically;
/// enclave access is refused at run time by function identity.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ContextLi {
    pub funs: Vec<(Name, IFun)>,
}

impl ComponentLi {
    pub fn get_fun(&self, name: &str) -> Option<&IFun> {
        self.funs.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }
}

impl ContextLi {
    pub fn get_fun(&self, name: &str) -> Option<&IFun> {
        self.funs.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }
}

// ---------------------------------------------------------------------------
// Alpha-equivalence
// ---------------------------------------------------------------------------

fn alpha_expr(a: &IExpr, b: &IExpr, env: &mut Vec<(Name, Name)>) -> bool {
    use IExpr::*;
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
        (Deref(e1), Deref(e2)) => alpha_expr(e1, e2, env),
        _ => false,
    }
}

fn alpha_binder(x: &Name, y: &Name, s1: &IStmt, s2: &IStmt, env: &mut Vec<(Name, Name)>) -> bool {
    env.push((x.clone(), y.clone()));
    let r = alpha_stmt(s1, s2, env);
    env.pop();
    r
}

fn alpha_stmt(a: &IStmt, b: &IStmt, env: &mut Vec<(Name, Name)>) -> bool {
    use IStmt::*;
    match (a, b) {
        (Skip, Skip) | (Ret, Ret) => true,
        (Seq(a1, b1), Seq(a2, b2)) => alpha_stmt(a1, a2, env) && alpha_stmt(b1, b2, env),
        (Let(x, e1, s1), Let(y, e2, s2))
        | (LetNew(x, e1, s1), LetNew(y, e2, s2))
        | (LetIso(x, e1, s1), LetIso(y, e2, s2)) => {
            alpha_expr(e1, e2, env) && alpha_binder(x, y, s1, s2, env)
        }
        (Ifz(e1, t1, f1), Ifz(e2, t2, f2)) => {
            alpha_expr(e1, e2, env) && alpha_stmt(t1, t2, env) && alpha_stmt(f1, f2, env)
        }
        (Call(f1, e1), Call(f2, e2)) => f1 == f2 && alpha_expr(e1, e2, env),
        (Assign(t1, e1), Assign(t2, e2)) => {
            alpha_expr(t1, t2, env) && alpha_expr(e1, e2, env)
        }
        (Destruct(x, e1, p1, s1, el1), Destruct(y, e2, p2, s2, el2)) => {
            p1 == p2
                && alpha_expr(e1, e2, env)
                && alpha_binder(x, y, s1, s2, env)
                && alpha_stmt(el1, el2, env)
        }
        (Fork(s1), Fork(s2)) => alpha_stmt(s1, s2, env),
        (Expr(e1), Expr(e2)) => alpha_expr(e1, e2, env),
        _ => false,
    }
}

pub fn alpha_eq_stmt(a: &IStmt, b: &IStmt) -> bool {
    alpha_stmt(a, b, &mut Vec::new())
}

pub fn alpha_eq_fun(a: &IFun, b: &IFun) -> bool {
    let mut env = vec![(a.param.clone(), b.param.clone())];
    alpha_stmt(&a.body, &b.body, &mut env)
}

pub fn alpha_eq_component(a: &ComponentLi, b: &ComponentLi) -> bool {
    a.h0 == b.h0
        && a.enclave == b.enclave
        && a.imports == b.imports
        && a.funs.len() == b.funs.len()
        && a.funs
            .iter()
            .zip(&b.funs)
            .all(|((n1, f1), (n2, f2))| n1 == n2 && alpha_eq_fun(f1, f2))
}

// ---------------------------------------------------------------------------
// Pretty printing
// ---------------------------------------------------------------------------

fn expr_prec(e: &IExpr) -> u8 {
    match e {
        IExpr::Cmp(..) => 1,
        IExpr::Op(Op::Add | Op::Sub, ..) => 2,
        // negative literals sit at unary level: they take no postfix, so
        // `(-1).1` needs the parentheses while `3 - -1` does not
        IExpr::Val(IVal::Int(n)) if *n < 0 => 3,
        IExpr::Op(Op::Mul, ..) => 3,
        IExpr::Deref(..) => 4,
        IExpr::Proj(..) => 5,
        _ => 6,
    }
}

pub(crate) fn fmt_expr(e: &IExpr, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let p = expr_prec(e);
    if p < min {
        write!(f, "(")?;
    }
    match e {
        IExpr::Var(x) => write!(f, "{x}")?,
        IExpr::Val(v) => write!(f, "{v}")?,
        IExpr::Op(op, a, b) => {
            fmt_expr(a, p, f)?;
            write!(f, " {} ", op.symbol())?;
            fmt_expr(b, p + 1, f)?;
        }
        IExpr::Cmp(c, a, b) => {
            fmt_expr(a, p + 1, f)?;
            write!(f, " {} ", c.symbol())?;
            fmt_expr(b, p + 1, f)?;
        }
        IExpr::Pair(a, b) => {
            // elements print at additive level: comparisons get parenthesized
            // so the closing `>` is unambiguous
            write!(f, "<")?;
            fmt_expr(a, 2, f)?;
            write!(f, ", ")?;
            fmt_expr(b, 2, f)?;
            write!(f, ">")?;
        }
        IExpr::Proj(i, e) => {
            fmt_expr(e, 5, f)?;
            write!(f, ".{i}")?;
        }
        IExpr::Deref(e) => {
            write!(f, "!")?;
            fmt_expr(e, 5, f)?;
        }
    }
    if p < min {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for IExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_expr(self, 0, f)
    }
}

fn is_block(s: &IStmt) -> bool {
    matches!(s, IStmt::Seq(..))
}

fn fmt_scope(s: &IStmt, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if is_block(s) {
        fmt_braced(s, f)
    } else {
        fmt_stmt(s, f)
    }
}

fn fmt_braced(s: &IStmt, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    write!(f, "{{ ")?;
    fmt_stmt(s, f)?;
    write!(f, " }}")
}

struct AtomExpr<'a>(&'a IExpr);

impl fmt::Display for AtomExpr<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_expr(self.0, 6, f)
    }
}

fn fmt_stmt(s: &IStmt, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match s {
        IStmt::Skip => write!(f, "skip"),
        IStmt::Seq(a, b) => {
            fmt_stmt(a, f)?;
            write!(f, "; ")?;
            fmt_stmt(b, f)
        }
        IStmt::Let(x, e, s) => {
            write!(f, "let {x} = {e} in ")?;
            fmt_scope(s, f)
        }
        IStmt::Ifz(e, t, els) => {
            write!(f, "ifz {e} then ")?;
            fmt_braced(t, f)?;
            write!(f, " else ")?;
            fmt_braced(els, f)
        }
        IStmt::Call(name, e) => write!(f, "call {name} {}", AtomExpr(e)),
        IStmt::LetNew(x, e, s) => {
            write!(f, "let {x} = new {e} in ")?;
            fmt_scope(s, f)
        }
        IStmt::LetIso(x, e, s) => {
            write!(f, "let {x} = iso {e} in ")?;
            fmt_scope(s, f)
        }
        IStmt::Assign(t, e) => {
            // postfix level: `p.1 := v` stays bare, computed targets like
            // `(0 - 1) := v` keep their parentheses
            fmt_expr(t, 5, f)?;
            write!(f, " := {e}")
        }
        IStmt::Destruct(x, e, pat, hit, miss) => {
            write!(f, "destruct {x} = {e} as {pat} in ")?;
            fmt_braced(hit, f)?;
            write!(f, " else ")?;
            fmt_braced(miss, f)
        }
        IStmt::Fork(body) => {
            write!(f, "fork ")?;
            fmt_braced(body, f)
        }
        IStmt::Expr(e) => write!(f, "{e}"),
        IStmt::Ret => write!(f, "ret"),
    }
}

impl fmt::Display for IStmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_stmt(self, f)
    }
}

impl fmt::Display for ComponentLi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "component {{")?;
        if !self.h0.is_empty() {
            writeln!(f, "  heap0 {{")?;
            for (addr, val) in &self.h0 {
                writeln!(f, "    {addr} = {val};")?;
            }
            writeln!(f, "  }}")?;
        }
        if !self.enclave.is_empty() {
            writeln!(f, "  enclave {};", self.enclave.join(", "))?;
        }
        if !self.imports.is_empty() {
            writeln!(f, "  import {};", self.imports.join(", "))?;
        }
        for (name, fun) in &self.funs {
            writeln!(f, "  fun {name}({}) {{ {} }}", fun.param, fun.body)?;
        }
        write!(f, "}}")
    }
}

impl fmt::Display for ContextLi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "context {{")?;
        for (name, fun) in &self.funs {
            writeln!(f, "  fun {name}({}) {{ {} }}", fun.param, fun.body)?;
        }
        write!(f, "}}")
    }
}
