//! Abstract syntax of the concurrent capability target.
//!
//! Expressions and values are the capability machine's; statements add
//! `fork`, atomic sealed allocation, and `destruct` shape tests. A component
//! carries its protected initial heap, whose capabilities are written with
//! names declared by the heap block itself.

use crate::lp::ast::{fmt_expr, PExpr, PVal, Tag};
use crate::syntax::{CapId, Name};
use std::fmt;

/// Shapes a `destruct` can test for. Capability tokens match neither, so
/// they always fall through to the else branch.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Pattern {
    Nat,
    Pair,
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Nat => write!(f, "nat"),
            Pattern::Pair => write!(f, "pair"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum CStmt {
    Skip,
    Seq(Box<CStmt>, Box<CStmt>),
    Let(Name, PExpr, Box<CStmt>),
    Ifz(PExpr, Box<CStmt>, Box<CStmt>),
    Call(Name, PExpr),
    LetNew(Name, PExpr, Box<CStmt>),
    LetHide(Name, PExpr, Box<CStmt>),
    /// `letatom x = e in s`: allocate and seal behind a fresh capability in
    /// one indivisible step; `x` is bound to the `<address, capability>`
    /// pair.
    LetAtom(Name, PExpr, Box<CStmt>),
    /// `target := value with w`.
    AssignWith(PExpr, PExpr, PExpr),
    /// `destruct x = e as B in s else s'`: on a matching shape `x` is bound
    /// in the first branch; otherwise the second runs with no binding.
    Destruct(Name, PExpr, Pattern, Box<CStmt>, Box<CStmt>),
    Fork(Box<CStmt>),
    Expr(PExpr),
    Ret,
}

impl CStmt {
    pub fn seq(a: CStmt, b: CStmt) -> CStmt {
        CStmt::Seq(Box::new(a), Box::new(b))
    }

    pub fn seq_all(mut stmts: Vec<CStmt>) -> CStmt {
        let last = stmts.pop().unwrap_or(CStmt::Skip);
        stmts.into_iter().rev().fold(last, |acc, s| CStmt::seq(s, acc))
    }

    pub fn let_in(x: impl Into<Name>, e: PExpr, s: CStmt) -> CStmt {
        CStmt::Let(x.into(), e, Box::new(s))
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CFun {
    pub param: Name,
    pub body: CStmt,
}

/// One cell of the protected initial heap.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct H0Cell {
    pub addr: u64,
    pub val: PVal,
    pub tag: Tag,
}

/// Component: a protected initial heap, imports, and functions.
///
/// Capability identities are the declaration order of their names in the
/// heap block: `cap_names[i]` denotes token `i`. Function bodies refer to
/// capabilities by these names; they resolve to literals when the program is
/// plugged, with ordinary binders shadowing them.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ComponentLc {
    pub h0: Vec<H0Cell>,
    pub cap_names: Vec<Name>,
    pub imports: Vec<Name>,
    pub funs: Vec<(Name, CFun)>,
}

/// Context (attacker): functions only, no heap, no capability names.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ContextLc {
    pub funs: Vec<(Name, CFun)>,
}

impl ComponentLc {
    pub fn get_fun(&self, name: &str) -> Option<&CFun> {
        self.funs.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    pub fn cap_id(&self, name: &str) -> Option<CapId> {
        self.cap_names.iter().position(|n| n == name).map(|i| CapId(i as u64))
    }

    pub fn cap_name(&self, k: CapId) -> Option<&Name> {
        self.cap_names.get(k.0 as usize)
    }
}

impl ContextLc {
    pub fn get_fun(&self, name: &str) -> Option<&CFun> {
        self.funs.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }
}

// ---------------------------------------------------------------------------
// Alpha-equivalence
// ---------------------------------------------------------------------------

fn alpha_binder(x: &Name, y: &Name, s1: &CStmt, s2: &CStmt, env: &mut Vec<(Name, Name)>) -> bool {
    env.push((x.clone(), y.clone()));
    let r = alpha_stmt(s1, s2, env);
    env.pop();
    r
}

fn alpha_stmt(a: &CStmt, b: &CStmt, env: &mut Vec<(Name, Name)>) -> bool {
    use crate::lp::ast::alpha_expr;
    use CStmt::*;
    match (a, b) {
        (Skip, Skip) | (Ret, Ret) => true,
        (Seq(a1, b1), Seq(a2, b2)) => alpha_stmt(a1, a2, env) && alpha_stmt(b1, b2, env),
        (Let(x, e1, s1), Let(y, e2, s2))
        | (LetNew(x, e1, s1), LetNew(y, e2, s2))
        | (LetHide(x, e1, s1), LetHide(y, e2, s2))
        | (LetAtom(x, e1, s1), LetAtom(y, e2, s2)) => {
            alpha_expr(e1, e2, env) && alpha_binder(x, y, s1, s2, env)
        }
        (Ifz(e1, t1, f1), Ifz(e2, t2, f2)) => {
            alpha_expr(e1, e2, env) && alpha_stmt(t1, t2, env) && alpha_stmt(f1, f2, env)
        }
        (Call(f1, e1), Call(f2, e2)) => f1 == f2 && alpha_expr(e1, e2, env),
        (AssignWith(t1, e1, w1), AssignWith(t2, e2, w2)) => {
            alpha_expr(t1, t2, env) && alpha_expr(e1, e2, env) && alpha_expr(w1, w2, env)
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

pub fn alpha_eq_stmt(a: &CStmt, b: &CStmt) -> bool {
    alpha_stmt(a, b, &mut Vec::new())
}

pub fn alpha_eq_fun(a: &CFun, b: &CFun) -> bool {
    let mut env = vec![(a.param.clone(), b.param.clone())];
    alpha_stmt(&a.body, &b.body, &mut env)
}

pub fn alpha_eq_component(a: &ComponentLc, b: &ComponentLc) -> bool {
    a.h0 == b.h0
        && a.cap_names == b.cap_names
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

fn is_block(s: &CStmt) -> bool {
    matches!(s, CStmt::Seq(..))
}

fn fmt_scope(s: &CStmt, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if is_block(s) {
        fmt_braced(s, f)
    } else {
        fmt_stmt(s, f)
    }
}

fn fmt_braced(s: &CStmt, f: &mut fmt::Formatter<'_>) -> fmt::Result {
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

fn fmt_stmt(s: &CStmt, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match s {
        CStmt::Skip => write!(f, "skip"),
        CStmt::Seq(a, b) => {
            fmt_stmt(a, f)?;
            write!(f, "; ")?;
            fmt_stmt(b, f)
        }
        CStmt::Let(x, e, s) => {
            write!(f, "let {x} = {e} in ")?;
            fmt_scope(s, f)
        }
        CStmt::Ifz(e, t, els) => {
            write!(f, "ifz {e} then ")?;
            fmt_braced(t, f)?;
            write!(f, " else ")?;
            fmt_braced(els, f)
        }
        CStmt::Call(name, e) => write!(f, "call {name} {}", AtomExpr(e)),
        CStmt::LetNew(x, e, s) => {
            write!(f, "let {x} = new {e} in ")?;
            fmt_scope(s, f)
        }
        CStmt::LetHide(x, e, s) => {
            write!(f, "let {x} = hide {e} in ")?;
            fmt_scope(s, f)
        }
        CStmt::LetAtom(x, e, s) => {
            write!(f, "letatom {x} = {e} in ")?;
            fmt_scope(s, f)
        }
        CStmt::AssignWith(t, e, w) => {
            write!(f, "{} := {e} with {}", AtomExpr(t), AtomExpr(w))
        }
        CStmt::Destruct(x, e, pat, hit, miss) => {
            write!(f, "destruct {x} = {e} as {pat} in ")?;
            fmt_braced(hit, f)?;
            write!(f, " else ")?;
            fmt_braced(miss, f)
        }
        CStmt::Fork(body) => {
            write!(f, "fork ")?;
            fmt_braced(body, f)
        }
        CStmt::Expr(e) => write!(f, "{e}"),
        CStmt::Ret => write!(f, "ret"),
    }
}

impl fmt::Display for CStmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_stmt(self, f)
    }
}

/// Print an initial-heap value with capability tokens shown by name.
pub(crate) fn fmt_h0_val(v: &PVal, names: &[Name], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match v {
        PVal::Nat(n) => write!(f, "{n}"),
        PVal::Cap(k) => match names.get(k.0 as usize) {
            Some(n) => write!(f, "{n}"),
            None => write!(f, "{k}"),
        },
        PVal::Pair(a, b) => {
            write!(f, "<")?;
            fmt_h0_val(a, names, f)?;
            write!(f, ", ")?;
            fmt_h0_val(b, names, f)?;
            write!(f, ">")
        }
    }
}

struct H0Val<'a>(&'a PVal, &'a [Name]);

impl fmt::Display for H0Val<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_h0_val(self.0, self.1, f)
    }
}

impl fmt::Display for ComponentLc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "component {{")?;
        if !self.h0.is_empty() {
            writeln!(f, "  heap0 {{")?;
            for cell in &self.h0 {
                write!(f, "    {} = {}", cell.addr, H0Val(&cell.val, &self.cap_names))?;
                match cell.tag {
                    Tag::Bot => writeln!(f, ";")?,
                    Tag::Cap(k) => match self.cap_name(k) {
                        Some(n) => writeln!(f, " : {n};")?,
                        None => writeln!(f, " : {k};")?,
                    },
                }
            }
            writeln!(f, "  }}")?;
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

impl fmt::Display for ContextLc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "context {{")?;
        for (name, fun) in &self.funs {
            writeln!(f, "  fun {name}({}) {{ {} }}", fun.param, fun.body)?;
        }
        write!(f, "}}")
    }
}
