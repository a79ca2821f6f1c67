//! Abstract syntax of the untyped source language.

use crate::syntax::{Cmp, LocId, Name, Op};
use std::fmt;

/// Runtime values: finite trees over unit, booleans, naturals, pairs, and
/// opaque locations.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum UVal {
    Unit,
    Bool(bool),
    Nat(u64),
    Pair(Box<UVal>, Box<UVal>),
    Loc(LocId),
}

impl UVal {
    pub fn pair(a: UVal, b: UVal) -> UVal {
        UVal::Pair(Box::new(a), Box::new(b))
    }

    /// All locations occurring in the value, left to right.
    pub fn locs(&self) -> Vec<LocId> {
        let mut out = Vec::new();
        self.collect_locs(&mut out);
        out
    }

    fn collect_locs(&self, out: &mut Vec<LocId>) {
        match self {
            UVal::Pair(a, b) => {
                a.collect_locs(out);
                b.collect_locs(out);
            }
            UVal::Loc(l) => out.push(*l),
            _ => {}
        }
    }
}

impl fmt::Display for UVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UVal::Unit => write!(f, "unit"),
            UVal::Bool(true) => write!(f, "true"),
            UVal::Bool(false) => write!(f, "false"),
            UVal::Nat(n) => write!(f, "{n}"),
            UVal::Pair(a, b) => write!(f, "<{a}, {b}>"),
            UVal::Loc(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum UExpr {
    Var(Name),
    Val(UVal),
    /// A named heap cell: the component's root or a context heap literal.
    /// Resolved to a concrete location when the program is plugged.
    Cell(Name),
    Op(Op, Box<UExpr>, Box<UExpr>),
    Cmp(Cmp, Box<UExpr>, Box<UExpr>),
    Pair(Box<UExpr>, Box<UExpr>),
    /// Projection; the index is 1 or 2.
    Proj(u8, Box<UExpr>),
    Deref(Box<UExpr>),
}

impl UExpr {
    pub fn nat(n: u64) -> UExpr {
        UExpr::Val(UVal::Nat(n))
    }

    pub fn var(x: impl Into<Name>) -> UExpr {
        UExpr::Var(x.into())
    }

    pub fn pair(a: UExpr, b: UExpr) -> UExpr {
        UExpr::Pair(Box::new(a), Box::new(b))
    }

    pub fn proj(i: u8, e: UExpr) -> UExpr {
        UExpr::Proj(i, Box::new(e))
    }

    pub fn deref(e: UExpr) -> UExpr {
        UExpr::Deref(Box::new(e))
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum UStmt {
    Skip,
    Seq(Box<UStmt>, Box<UStmt>),
    Let(Name, UExpr, Box<UStmt>),
    If(UExpr, Box<UStmt>, Box<UStmt>),
    Call(Name, UExpr),
    LetNew(Name, UExpr, Box<UStmt>),
    /// `target := value`; the target must evaluate to a location.
    Assign(UExpr, UExpr),
    /// Evaluate and discard.
    Expr(UExpr),
    /// Marks the end of a function body; pops the call stack.
    Ret,
}

impl UStmt {
    pub fn seq(a: UStmt, b: UStmt) -> UStmt {
        UStmt::Seq(Box::new(a), Box::new(b))
    }

    /// Fold a nonempty statement list into right-nested sequencing.
    pub fn seq_all(mut stmts: Vec<UStmt>) -> UStmt {
        let last = stmts.pop().unwrap_or(UStmt::Skip);
        stmts.into_iter().rev().fold(last, |acc, s| UStmt::seq(s, acc))
    }

    pub fn let_in(x: impl Into<Name>, e: UExpr, s: UStmt) -> UStmt {
        UStmt::Let(x.into(), e, Box::new(s))
    }
}

/// A function: one parameter, a body ending in `ret`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct UFun {
    pub param: Name,
    pub body: UStmt,
}

/// Component: a declared root location, imported context functions, and
/// function definitions.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ComponentLu {
    pub root_name: Name,
    pub imports: Vec<Name>,
    pub funs: Vec<(Name, UFun)>,
}

/// Context (attacker): heap literals plus function definitions including
/// `main`. Heap literal values contain no locations.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ContextLu {
    pub heap: Vec<(Name, UVal)>,
    pub funs: Vec<(Name, UFun)>,
}

impl ComponentLu {
    pub fn get_fun(&self, name: &str) -> Option<&UFun> {
        self.funs.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }
}

impl ContextLu {
    pub fn get_fun(&self, name: &str) -> Option<&UFun> {
        self.funs.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }
}

// ---------------------------------------------------------------------------
// Alpha-equivalence: structural equality up to bound-variable names.
// ---------------------------------------------------------------------------

/// Two variables agree when they are bound by the same binder position, or
/// both free with the same name.
pub(crate) fn alpha_var(x: &Name, y: &Name, env: &[(Name, Name)]) -> bool {
    let i = env.iter().rposition(|(l, _)| l == x);
    let j = env.iter().rposition(|(_, r)| r == y);
    match (i, j) {
        (Some(i), Some(j)) => i == j,
        (None, None) => x == y,
        _ => false,
    }
}

fn alpha_expr(a: &UExpr, b: &UExpr, env: &mut Vec<(Name, Name)>) -> bool {
    use UExpr::*;
    match (a, b) {
        (Var(x), Var(y)) => alpha_var(x, y, env),
        (Val(u), Val(v)) => u == v,
        (Cell(x), Cell(y)) => x == y,
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

fn alpha_binder(
    x: &Name,
    y: &Name,
    s1: &UStmt,
    s2: &UStmt,
    env: &mut Vec<(Name, Name)>,
) -> bool {
    env.push((x.clone(), y.clone()));
    let r = alpha_stmt(s1, s2, env);
    env.pop();
    r
}

fn alpha_stmt(a: &UStmt, b: &UStmt, env: &mut Vec<(Name, Name)>) -> bool {
    use UStmt::*;
    match (a, b) {
        (Skip, Skip) | (Ret, Ret) => true,
        (Seq(a1, b1), Seq(a2, b2)) => alpha_stmt(a1, a2, env) && alpha_stmt(b1, b2, env),
        (Let(x, e1, s1), Let(y, e2, s2)) => {
            alpha_expr(e1, e2, env) && alpha_binder(x, y, s1, s2, env)
        }
        (LetNew(x, e1, s1), LetNew(y, e2, s2)) => {
            alpha_expr(e1, e2, env) && alpha_binder(x, y, s1, s2, env)
        }
        (If(e1, t1, f1), If(e2, t2, f2)) => {
            alpha_expr(e1, e2, env) && alpha_stmt(t1, t2, env) && alpha_stmt(f1, f2, env)
        }
        (Call(f1, e1), Call(f2, e2)) => f1 == f2 && alpha_expr(e1, e2, env),
        (Assign(t1, e1), Assign(t2, e2)) => alpha_expr(t1, t2, env) && alpha_expr(e1, e2, env),
        (Expr(e1), Expr(e2)) => alpha_expr(e1, e2, env),
        _ => false,
    }
}

/// Structural equality of statements up to renaming of bound variables.
pub fn alpha_eq_stmt(a: &UStmt, b: &UStmt) -> bool {
    alpha_stmt(a, b, &mut Vec::new())
}

pub fn alpha_eq_fun(a: &UFun, b: &UFun) -> bool {
    let mut env = vec![(a.param.clone(), b.param.clone())];
    alpha_stmt(&a.body, &b.body, &mut env)
}

// ---------------------------------------------------------------------------
// Pretty printing. Emits surface syntax that parses back to the same AST.
// ---------------------------------------------------------------------------

/// Precedence levels: comparison 1, additive 2, multiplicative 3, prefix 4,
/// postfix 5, atoms 6.
fn expr_prec(e: &UExpr) -> u8 {
    match e {
        UExpr::Cmp(..) => 1,
        UExpr::Op(Op::Add | Op::Sub, ..) => 2,
        UExpr::Op(Op::Mul, ..) => 3,
        UExpr::Deref(..) => 4,
        UExpr::Proj(..) => 5,
        _ => 6,
    }
}

fn fmt_expr(e: &UExpr, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let p = expr_prec(e);
    if p < min {
        write!(f, "(")?;
    }
    match e {
        UExpr::Var(x) => write!(f, "{x}")?,
        UExpr::Val(v) => write!(f, "{v}")?,
        UExpr::Cell(n) => write!(f, "{n}")?,
        UExpr::Op(op, a, b) => {
            fmt_expr(a, p, f)?;
            write!(f, " {} ", op.symbol())?;
            fmt_expr(b, p + 1, f)?;
        }
        UExpr::Cmp(c, a, b) => {
            fmt_expr(a, p + 1, f)?;
            write!(f, " {} ", c.symbol())?;
            fmt_expr(b, p + 1, f)?;
        }
        UExpr::Pair(a, b) => {
            // elements print at additive level: comparisons get parenthesized
            // so the closing `>` is unambiguous
            write!(f, "<")?;
            fmt_expr(a, 2, f)?;
            write!(f, ", ")?;
            fmt_expr(b, 2, f)?;
            write!(f, ">")?;
        }
        UExpr::Proj(i, e) => {
            fmt_expr(e, 5, f)?;
            write!(f, ".{i}")?;
        }
        UExpr::Deref(e) => {
            write!(f, "!")?;
            fmt_expr(e, 4, f)?;
        }
    }
    if p < min {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for UExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_expr(self, 0, f)
    }
}

fn is_block(s: &UStmt) -> bool {
    matches!(s, UStmt::Seq(..))
}

fn fmt_stmt(s: &UStmt, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match s {
        UStmt::Skip => write!(f, "skip"),
        UStmt::Seq(a, b) => {
            fmt_stmt(a, f)?;
            write!(f, "; ")?;
            fmt_stmt(b, f)
        }
        UStmt::Let(x, e, s) => {
            write!(f, "let {x} = {e} in ")?;
            fmt_scope(s, f)
        }
        UStmt::If(e, t, els) => {
            write!(f, "if {e} then ")?;
            fmt_braced(t, f)?;
            write!(f, " else ")?;
            fmt_braced(els, f)
        }
        UStmt::Call(name, e) => write!(f, "call {name} {}", AtomExpr(e)),
        UStmt::LetNew(x, e, s) => {
            write!(f, "let {x} = new {e} in ")?;
            fmt_scope(s, f)
        }
        UStmt::Assign(t, e) => write!(f, "{} := {e}", AtomExpr(t)),
        UStmt::Expr(e) => write!(f, "{e}"),
        UStmt::Ret => write!(f, "ret"),
    }
}

/// Scope of a binder: brace it when it is a sequence so the binding scope
/// survives a round trip.
fn fmt_scope(s: &UStmt, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if is_block(s) {
        fmt_braced(s, f)
    } else {
        fmt_stmt(s, f)
    }
}

fn fmt_braced(s: &UStmt, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    write!(f, "{{ ")?;
    fmt_stmt(s, f)?;
    write!(f, " }}")
}

/// Prints an expression at atom precedence (parenthesized unless atomic).
struct AtomExpr<'a>(&'a UExpr);

impl fmt::Display for AtomExpr<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_expr(self.0, 6, f)
    }
}

impl fmt::Display for UStmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_stmt(self, f)
    }
}

impl fmt::Display for ComponentLu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "component {{")?;
        writeln!(f, "  root {};", self.root_name)?;
        if !self.imports.is_empty() {
            writeln!(f, "  import {};", self.imports.join(", "))?;
        }
        for (name, fun) in &self.funs {
            writeln!(f, "  fun {name}({}) {{ {} }}", fun.param, fun.body)?;
        }
        write!(f, "}}")
    }
}

impl fmt::Display for ContextLu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "context {{")?;
        if !self.heap.is_empty() {
            writeln!(f, "  heap {{")?;
            for (name, v) in &self.heap {
                writeln!(f, "    {name} = {v};")?;
            }
            writeln!(f, "  }}")?;
        }
        for (name, fun) in &self.funs {
            writeln!(f, "  fun {name}({}) {{ {} }}", fun.param, fun.body)?;
        }
        write!(f, "}}")
    }
}
