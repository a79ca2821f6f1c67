//! Operational semantics of the untyped source language.
//!
//! Statements reduce at the leftmost redex under sequencing; `call` inlines
//! the callee body (which carries its `ret` marker) in place and pushes the
//! callee name, `ret` pops. Cross-boundary calls and returns emit actions
//! carrying the full heap; everything else is silent.

use super::ast::*;
use crate::syntax::{LocId, Name, Side};
use crate::trace::Action;
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

pub type ActionLu = Action<UVal, (LocId, UVal)>;

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct UHeap {
    pub cells: BTreeMap<LocId, UVal>,
    next: u64,
}

impl UHeap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, l: LocId) -> Option<&UVal> {
        self.cells.get(&l)
    }

    /// Insert a cell at a chosen serial (program assembly only) and keep the
    /// allocator ahead of it.
    pub fn insert_fixed(&mut self, l: LocId, v: UVal) {
        self.cells.insert(l, v);
        self.next = self.next.max(l.0 + 1);
    }

    pub fn alloc(&mut self, v: UVal) -> LocId {
        let l = LocId(self.next);
        self.next += 1;
        self.cells.insert(l, v);
        l
    }

    /// Write an existing cell.
    pub fn set(&mut self, l: LocId, v: UVal) -> Result<(), EvalStuck> {
        match self.cells.get_mut(&l) {
            Some(slot) => {
                *slot = v;
                Ok(())
            }
            None => Err(EvalStuck::Unallocated(l)),
        }
    }

    pub fn snapshot(&self) -> Vec<(LocId, UVal)> {
        self.cells.iter().map(|(l, v)| (*l, v.clone())).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalStuck {
    #[error("unbound variable `{0}`")]
    Unbound(Name),
    #[error("unresolved cell name `{0}`")]
    UnresolvedCell(Name),
    #[error("operator applied to non-number")]
    NonNumeric,
    #[error("projection of a non-pair")]
    NonPair,
    #[error("dereference of a non-location")]
    NonLocation,
    #[error("location {0} is not allocated")]
    Unallocated(LocId),
}

/// Big-step, heap-reading, effect-free expression evaluation.
pub fn eval_expr(heap: &UHeap, e: &UExpr) -> Result<UVal, EvalStuck> {
    match e {
        UExpr::Var(x) => Err(EvalStuck::Unbound(x.clone())),
        UExpr::Val(v) => Ok(v.clone()),
        UExpr::Cell(n) => Err(EvalStuck::UnresolvedCell(n.clone())),
        UExpr::Op(op, a, b) => match (eval_expr(heap, a)?, eval_expr(heap, b)?) {
            (UVal::Nat(x), UVal::Nat(y)) => Ok(UVal::Nat(op.apply(x, y))),
            _ => Err(EvalStuck::NonNumeric),
        },
        UExpr::Cmp(c, a, b) => match (eval_expr(heap, a)?, eval_expr(heap, b)?) {
            (UVal::Nat(x), UVal::Nat(y)) => Ok(UVal::Bool(c.apply(x, y))),
            _ => Err(EvalStuck::NonNumeric),
        },
        UExpr::Pair(a, b) => Ok(UVal::pair(eval_expr(heap, a)?, eval_expr(heap, b)?)),
        UExpr::Proj(i, e) => match eval_expr(heap, e)? {
            UVal::Pair(a, b) => Ok(if *i == 1 { *a } else { *b }),
            _ => Err(EvalStuck::NonPair),
        },
        UExpr::Deref(e) => match eval_expr(heap, e)? {
            UVal::Loc(l) => heap.get(l).cloned().ok_or(EvalStuck::Unallocated(l)),
            _ => Err(EvalStuck::NonLocation),
        },
    }
}

// ---------------------------------------------------------------------------
// Substitution. Only closed values are ever substituted, so shadowing is the
// only capture concern.
// ---------------------------------------------------------------------------

pub fn subst_expr(e: &UExpr, x: &str, v: &UVal) -> UExpr {
    match e {
        UExpr::Var(y) if y == x => UExpr::Val(v.clone()),
        UExpr::Var(_) | UExpr::Val(_) | UExpr::Cell(_) => e.clone(),
        UExpr::Op(op, a, b) => {
            UExpr::Op(*op, Box::new(subst_expr(a, x, v)), Box::new(subst_expr(b, x, v)))
        }
        UExpr::Cmp(c, a, b) => {
            UExpr::Cmp(*c, Box::new(subst_expr(a, x, v)), Box::new(subst_expr(b, x, v)))
        }
        UExpr::Pair(a, b) => UExpr::pair(subst_expr(a, x, v), subst_expr(b, x, v)),
        UExpr::Proj(i, e) => UExpr::proj(*i, subst_expr(e, x, v)),
        UExpr::Deref(e) => UExpr::deref(subst_expr(e, x, v)),
    }
}

pub fn subst_stmt(s: &UStmt, x: &str, v: &UVal) -> UStmt {
    match s {
        UStmt::Skip | UStmt::Ret => s.clone(),
        UStmt::Seq(a, b) => UStmt::seq(subst_stmt(a, x, v), subst_stmt(b, x, v)),
        UStmt::Let(y, e, body) => {
            let e = subst_expr(e, x, v);
            let body = if y == x { (**body).clone() } else { subst_stmt(body, x, v) };
            UStmt::Let(y.clone(), e, Box::new(body))
        }
        UStmt::LetNew(y, e, body) => {
            let e = subst_expr(e, x, v);
            let body = if y == x { (**body).clone() } else { subst_stmt(body, x, v) };
            UStmt::LetNew(y.clone(), e, Box::new(body))
        }
        UStmt::If(e, t, f) => UStmt::If(
            subst_expr(e, x, v),
            Box::new(subst_stmt(t, x, v)),
            Box::new(subst_stmt(f, x, v)),
        ),
        UStmt::Call(f, e) => UStmt::Call(f.clone(), subst_expr(e, x, v)),
        UStmt::Assign(t, e) => UStmt::Assign(subst_expr(t, x, v), subst_expr(e, x, v)),
        UStmt::Expr(e) => UStmt::Expr(subst_expr(e, x, v)),
    }
}

// ---------------------------------------------------------------------------
// Whole programs
// ---------------------------------------------------------------------------

/// A plugged whole program: merged function table with definition sides, plus
/// the root location.
#[derive(Clone, Debug)]
pub struct ProgLu {
    pub funs: HashMap<Name, (UFun, Side)>,
    pub root: LocId,
    pub root_name: Name,
    /// Context heap-cell serials in declaration order.
    pub cell_map: Vec<(Name, LocId)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateLu {
    pub heap: UHeap,
    pub stack: Vec<Name>,
    pub stmt: UStmt,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlugError {
    #[error("function `{0}` is defined by both sides")]
    DuplicateFun(Name),
    #[error("context does not define `main`")]
    MissingMain,
    #[error("component import `{0}` is not provided by the context")]
    ImportNotProvided(Name),
    #[error("attacker mentions the component root `{0}`")]
    AttackerCondition(Name),
    #[error("unresolved name `{0}` in function `{1}`")]
    Unresolved(Name, Name),
    #[error("call target `{0}` in function `{1}` does not exist")]
    UnknownCall(Name, Name),
    #[error("component function `{1}` calls `{0}`, which is not an import or component function")]
    NonImportedCall(Name, Name),
}

/// Free variables of a function body (parameter and let-binders removed,
/// cells ignored).
fn free_vars(f: &UFun) -> Vec<Name> {
    let mut out = Vec::new();
    let mut bound = vec![f.param.clone()];
    fv_stmt(&f.body, &mut bound, &mut out);
    out
}

fn fv_stmt(s: &UStmt, bound: &mut Vec<Name>, out: &mut Vec<Name>) {
    match s {
        UStmt::Skip | UStmt::Ret => {}
        UStmt::Seq(a, b) => {
            fv_stmt(a, bound, out);
            fv_stmt(b, bound, out);
        }
        UStmt::Let(x, e, body) | UStmt::LetNew(x, e, body) => {
            fv_expr(e, bound, out);
            bound.push(x.clone());
            fv_stmt(body, bound, out);
            bound.pop();
        }
        UStmt::If(e, t, f) => {
            fv_expr(e, bound, out);
            fv_stmt(t, bound, out);
            fv_stmt(f, bound, out);
        }
        UStmt::Call(_, e) | UStmt::Expr(e) => fv_expr(e, bound, out),
        UStmt::Assign(t, e) => {
            fv_expr(t, bound, out);
            fv_expr(e, bound, out);
        }
    }
}

fn fv_expr(e: &UExpr, bound: &[Name], out: &mut Vec<Name>) {
    match e {
        UExpr::Var(x) => {
            if !bound.contains(x) {
                out.push(x.clone());
            }
        }
        UExpr::Val(_) | UExpr::Cell(_) => {}
        UExpr::Op(_, a, b) | UExpr::Cmp(_, a, b) | UExpr::Pair(a, b) => {
            fv_expr(a, bound, out);
            fv_expr(b, bound, out);
        }
        UExpr::Proj(_, e) | UExpr::Deref(e) => fv_expr(e, bound, out),
    }
}

fn call_targets(s: &UStmt, out: &mut Vec<Name>) {
    match s {
        UStmt::Skip | UStmt::Ret | UStmt::Expr(_) | UStmt::Assign(..) => {}
        UStmt::Seq(a, b) => {
            call_targets(a, out);
            call_targets(b, out);
        }
        UStmt::Let(_, _, body) | UStmt::LetNew(_, _, body) => call_targets(body, out),
        UStmt::If(_, t, f) => {
            call_targets(t, out);
            call_targets(f, out);
        }
        UStmt::Call(f, _) => out.push(f.clone()),
    }
}

fn resolve_to_loc(s: &UStmt, map: &dyn Fn(&str) -> Option<LocId>) -> UStmt {
    fn expr(e: &UExpr, map: &dyn Fn(&str) -> Option<LocId>) -> UExpr {
        match e {
            UExpr::Cell(n) => match map(n) {
                Some(l) => UExpr::Val(UVal::Loc(l)),
                None => e.clone(),
            },
            UExpr::Var(_) | UExpr::Val(_) => e.clone(),
            UExpr::Op(op, a, b) => {
                UExpr::Op(*op, Box::new(expr(a, map)), Box::new(expr(b, map)))
            }
            UExpr::Cmp(c, a, b) => {
                UExpr::Cmp(*c, Box::new(expr(a, map)), Box::new(expr(b, map)))
            }
            UExpr::Pair(a, b) => UExpr::pair(expr(a, map), expr(b, map)),
            UExpr::Proj(i, e0) => UExpr::proj(*i, expr(e0, map)),
            UExpr::Deref(e0) => UExpr::deref(expr(e0, map)),
        }
    }
    match s {
        UStmt::Skip | UStmt::Ret => s.clone(),
        UStmt::Seq(a, b) => UStmt::seq(resolve_to_loc(a, map), resolve_to_loc(b, map)),
        UStmt::Let(x, e, body) => {
            UStmt::Let(x.clone(), expr(e, map), Box::new(resolve_to_loc(body, map)))
        }
        UStmt::LetNew(x, e, body) => {
            UStmt::LetNew(x.clone(), expr(e, map), Box::new(resolve_to_loc(body, map)))
        }
        UStmt::If(e, t, f) => UStmt::If(
            expr(e, map),
            Box::new(resolve_to_loc(t, map)),
            Box::new(resolve_to_loc(f, map)),
        ),
        UStmt::Call(f, e) => UStmt::Call(f.clone(), expr(e, map)),
        UStmt::Assign(t, e) => UStmt::Assign(expr(t, map), expr(e, map)),
        UStmt::Expr(e) => UStmt::Expr(expr(e, map)),
    }
}

/// Assemble a whole program: check the whole-program conditions, assign
/// location serials (context cells in declaration order, then the root), and
/// produce the initial state `call main 0` with an empty stack.
pub fn plug_lu(ctx: &ContextLu, comp: &ComponentLu) -> Result<(ProgLu, StateLu), PlugError> {
    for (n, _) in &comp.funs {
        if ctx.get_fun(n).is_some() {
            return Err(PlugError::DuplicateFun(n.clone()));
        }
    }
    if ctx.get_fun("main").is_none() {
        return Err(PlugError::MissingMain);
    }
    for i in &comp.imports {
        if ctx.get_fun(i).is_none() {
            return Err(PlugError::ImportNotProvided(i.clone()));
        }
    }
    if ctx.heap.iter().any(|(n, _)| *n == comp.root_name) {
        return Err(PlugError::AttackerCondition(comp.root_name.clone()));
    }
    // Free variables must not remain anywhere; a context one that names the
    // root is the attacker condition.
    for (fname, fun) in ctx.funs.iter() {
        let fvs = free_vars(fun);
        if let Some(v) = fvs.iter().find(|v| **v == comp.root_name) {
            return Err(PlugError::AttackerCondition(v.clone()));
        }
        if let Some(v) = fvs.into_iter().next() {
            return Err(PlugError::Unresolved(v, fname.clone()));
        }
    }
    for (fname, fun) in comp.funs.iter() {
        if let Some(v) = free_vars(fun).into_iter().next() {
            return Err(PlugError::Unresolved(v, fname.clone()));
        }
    }
    // Call-target resolution.
    let comp_names: Vec<&Name> = comp.funs.iter().map(|(n, _)| n).collect();
    for (fname, fun) in &comp.funs {
        let mut targets = Vec::new();
        call_targets(&fun.body, &mut targets);
        for t in targets {
            if !comp_names.iter().any(|n| **n == t) && !comp.imports.contains(&t) {
                return Err(if ctx.get_fun(&t).is_some() {
                    PlugError::NonImportedCall(t, fname.clone())
                } else {
                    PlugError::UnknownCall(t, fname.clone())
                });
            }
        }
    }
    for (fname, fun) in &ctx.funs {
        let mut targets = Vec::new();
        call_targets(&fun.body, &mut targets);
        for t in targets {
            if ctx.get_fun(&t).is_none() && comp.get_fun(&t).is_none() {
                return Err(PlugError::UnknownCall(t, fname.clone()));
            }
        }
    }

    let mut heap = UHeap::new();
    let mut cell_map = Vec::new();
    for (n, v) in &ctx.heap {
        let l = heap.alloc(v.clone());
        cell_map.push((n.clone(), l));
    }
    let root = heap.alloc(UVal::Nat(0));

    let ctx_lookup = {
        let cm = cell_map.clone();
        move |n: &str| cm.iter().find(|(m, _)| m == n).map(|(_, l)| *l)
    };
    let root_name = comp.root_name.clone();
    let comp_lookup = move |n: &str| if n == root_name { Some(root) } else { None };

    let mut funs = HashMap::new();
    for (n, f) in &ctx.funs {
        let body = resolve_to_loc(&f.body, &ctx_lookup);
        funs.insert(n.clone(), (UFun { param: f.param.clone(), body }, Side::Context));
    }
    for (n, f) in &comp.funs {
        let body = resolve_to_loc(&f.body, &comp_lookup);
        funs.insert(n.clone(), (UFun { param: f.param.clone(), body }, Side::Component));
    }

    let prog = ProgLu { funs, root, root_name: comp.root_name.clone(), cell_map };
    let init = StateLu {
        heap,
        stack: Vec::new(),
        stmt: UStmt::Call("main".into(), UExpr::nat(0)),
    };
    Ok((prog, init))
}

// ---------------------------------------------------------------------------
// Small-step semantics
// ---------------------------------------------------------------------------

pub enum StepLu {
    Step { label: Option<ActionLu>, state: StateLu },
    Terminated { heap: UHeap },
    Stuck { reason: String, state: StateLu },
}

impl ProgLu {
    pub fn side(&self, f: &str) -> Option<Side> {
        self.funs.get(f).map(|(_, s)| *s)
    }

    /// Side of the currently executing code: top of the call stack, or the
    /// context for the top-level pseudo-frame.
    fn current_side(&self, stack: &[Name]) -> Side {
        stack
            .last()
            .and_then(|f| self.side(f))
            .unwrap_or(Side::Context)
    }
}

/// One deterministic step.
pub fn step_lu(prog: &ProgLu, state: StateLu) -> StepLu {
    if state.stmt == UStmt::Skip {
        return if state.stack.is_empty() {
            StepLu::Terminated { heap: state.heap }
        } else {
            StepLu::Stuck { reason: "function body ended without ret".into(), state }
        };
    }
    let StateLu { mut heap, mut stack, stmt } = state;
    match reduce(prog, &mut heap, &mut stack, stmt) {
        Ok((label, stmt)) => StepLu::Step { label, state: StateLu { heap, stack, stmt } },
        Err((reason, stmt)) => StepLu::Stuck { reason, state: StateLu { heap, stack, stmt } },
    }
}

type Reduced = Result<(Option<ActionLu>, UStmt), (String, UStmt)>;

fn reduce(prog: &ProgLu, heap: &mut UHeap, stack: &mut Vec<Name>, stmt: UStmt) -> Reduced {
    match stmt {
        UStmt::Seq(s1, s2) => {
            if *s1 == UStmt::Skip {
                return Ok((None, *s2));
            }
            match reduce(prog, heap, stack, *s1) {
                Ok((label, s1)) => Ok((label, UStmt::Seq(Box::new(s1), s2))),
                Err((reason, s1)) => Err((reason, UStmt::Seq(Box::new(s1), s2))),
            }
        }
        UStmt::Skip => Err(("skip has no reduction".into(), UStmt::Skip)),
        UStmt::Ret => {
            let popped = match stack.pop() {
                Some(f) => f,
                None => return Err(("ret with an empty call stack".into(), UStmt::Ret)),
            };
            let from = prog.side(&popped).unwrap_or(Side::Context);
            let to = prog.current_side(stack);
            let label = match (from, to) {
                (Side::Component, Side::Context) => {
                    Some(Action::ret(heap.snapshot()))
                }
                (Side::Context, Side::Component) => {
                    Some(Action::retback(heap.snapshot()))
                }
                _ => None,
            };
            Ok((label, UStmt::Skip))
        }
        UStmt::Let(x, e, body) => match eval_expr(heap, &e) {
            Ok(v) => Ok((None, subst_stmt(&body, &x, &v))),
            Err(err) => Err((err.to_string(), UStmt::Let(x, e, body))),
        },
        UStmt::LetNew(x, e, body) => match eval_expr(heap, &e) {
            Ok(v) => {
                let l = heap.alloc(v);
                Ok((None, subst_stmt(&body, &x, &UVal::Loc(l))))
            }
            Err(err) => Err((err.to_string(), UStmt::LetNew(x, e, body))),
        },
        UStmt::If(e, t, f) => match eval_expr(heap, &e) {
            Ok(UVal::Bool(true)) => Ok((None, *t)),
            Ok(UVal::Bool(false)) => Ok((None, *f)),
            Ok(_) => Err(("if guard is not a boolean".into(), UStmt::If(e, t, f))),
            Err(err) => Err((err.to_string(), UStmt::If(e, t, f))),
        },
        UStmt::Assign(tgt, e) => {
            let l = match eval_expr(heap, &tgt) {
                Ok(UVal::Loc(l)) => l,
                Ok(_) => {
                    return Err(("assignment target is not a location".into(), UStmt::Assign(tgt, e)))
                }
                Err(err) => return Err((err.to_string(), UStmt::Assign(tgt, e))),
            };
            match eval_expr(heap, &e) {
                Ok(v) => match heap.set(l, v) {
                    Ok(()) => Ok((None, UStmt::Skip)),
                    Err(err) => Err((err.to_string(), UStmt::Assign(tgt, e))),
                },
                Err(err) => Err((err.to_string(), UStmt::Assign(tgt, e))),
            }
        }
        UStmt::Expr(e) => match eval_expr(heap, &e) {
            Ok(_) => Ok((None, UStmt::Skip)),
            Err(err) => Err((err.to_string(), UStmt::Expr(e))),
        },
        UStmt::Call(fname, e) => {
            let v = match eval_expr(heap, &e) {
                Ok(v) => v,
                Err(err) => return Err((err.to_string(), UStmt::Call(fname, e))),
            };
            let (fun, callee_side) = match prog.funs.get(&fname) {
                Some((f, s)) => (f.clone(), *s),
                None => {
                    return Err((format!("call to unknown function `{fname}`"), UStmt::Call(fname, e)))
                }
            };
            let caller_side = prog.current_side(stack);
            let label = match (caller_side, callee_side) {
                (Side::Context, Side::Component) => {
                    Some(Action::call(fname.clone(), v.clone(), heap.snapshot()))
                }
                (Side::Component, Side::Context) => {
                    Some(Action::callback(fname.clone(), v.clone(), heap.snapshot()))
                }
                _ => None,
            };
            stack.push(fname);
            Ok((label, subst_stmt(&fun.body, &fun.param, &v)))
        }
    }
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub enum RunEnd {
    Terminated { heap: UHeap },
    Stuck { reason: String, state: StateLu },
    Budget { state: StateLu },
}

#[derive(Clone, Debug)]
pub struct RunLu {
    pub trace: Vec<ActionLu>,
    pub end: RunEnd,
    pub steps: u64,
}

impl RunLu {
    pub fn final_heap(&self) -> &UHeap {
        match &self.end {
            RunEnd::Terminated { heap } => heap,
            RunEnd::Stuck { state, .. } => &state.heap,
            RunEnd::Budget { state } => &state.heap,
        }
    }
}

/// Run to termination, stuckness, or budget exhaustion, accumulating the
/// non-silent labels.
pub fn run_lu(prog: &ProgLu, mut state: StateLu, max_steps: u64) -> RunLu {
    let mut trace = Vec::new();
    let mut steps = 0;
    while steps < max_steps {
        match step_lu(prog, state) {
            StepLu::Step { label, state: next } => {
                if let Some(a) = label {
                    trace.push(a);
                }
                state = next;
                steps += 1;
            }
            StepLu::Terminated { heap } => {
                return RunLu { trace, end: RunEnd::Terminated { heap }, steps };
            }
            StepLu::Stuck { reason, state } => {
                return RunLu { trace, end: RunEnd::Stuck { reason, state }, steps };
            }
        }
    }
    RunLu { trace, end: RunEnd::Budget { state }, steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lu::parse::{parse_component_lu, parse_context_lu};
    use crate::trace::{check_alternation, ActKind};

    fn demo_component() -> ComponentLu {
        parse_component_lu(
            "component {
               root lroot;
               fun deposit(x) { let amt = !lroot in lroot := amt + x; ret }
               fun balance(x) { !lroot; ret }
             }",
        )
        .unwrap()
    }

    #[test]
    fn sequence_skip_is_silent() {
        let (prog, _) = plug_lu(
            &parse_context_lu("context { fun main(x) { skip; skip } }").unwrap(),
            &demo_component(),
        )
        .unwrap();
        let init = StateLu {
            heap: UHeap::new(),
            stack: vec!["main".into()],
            stmt: UStmt::seq(UStmt::Skip, UStmt::seq(UStmt::Skip, UStmt::Ret)),
        };
        match step_lu(&prog, init) {
            StepLu::Step { label, state } => {
                assert!(label.is_none());
                assert_eq!(state.stmt, UStmt::seq(UStmt::Skip, UStmt::Ret));
            }
            _ => panic!("expected a step"),
        }
    }

    #[test]
    fn boundary_call_and_return_emit_actions() {
        let ctx = parse_context_lu("context { fun main(x) { call deposit 7 } }").unwrap();
        let (prog, init) = plug_lu(&ctx, &demo_component()).unwrap();
        let run = run_lu(&prog, init, 1000);
        assert!(matches!(run.end, RunEnd::Terminated { .. }));
        assert_eq!(run.trace.len(), 2);
        assert_eq!(run.trace[0].kind, ActKind::Call);
        assert_eq!(run.trace[0].fname.as_deref(), Some("deposit"));
        assert_eq!(run.trace[0].arg, Some(UVal::Nat(7)));
        assert_eq!(run.trace[1].kind, ActKind::Return);
        assert!(run.trace[1].arg.is_none());
        check_alternation(&run.trace).unwrap();
        // the deposit landed in the root cell
        assert_eq!(run.final_heap().get(prog.root), Some(&UVal::Nat(7)));
    }

    #[test]
    fn internal_calls_are_silent() {
        let ctx = parse_context_lu(
            "context { fun helper(y) { skip } fun main(x) { call helper 1 } }",
        )
        .unwrap();
        let comp = demo_component();
        let (prog, init) = plug_lu(&ctx, &comp).unwrap();
        let run = run_lu(&prog, init, 1000);
        assert!(matches!(run.end, RunEnd::Terminated { .. }));
        assert!(run.trace.is_empty());
    }

    #[test]
    fn attacker_condition_rejects_root_mention() {
        let ctx = parse_context_lu("context { fun main(x) { lroot := 3 } }").unwrap();
        let err = plug_lu(&ctx, &demo_component()).unwrap_err();
        assert_eq!(err, PlugError::AttackerCondition("lroot".into()));
    }

    #[test]
    fn allocation_is_fresh_and_monotone() {
        let ctx = parse_context_lu(
            "context {
               heap { l1 = 4; }
               fun main(x) { let a = new 1 in let b = new 2 in { a := !b; skip } }
             }",
        )
        .unwrap();
        let (prog, init) = plug_lu(&ctx, &demo_component()).unwrap();
        assert_eq!(prog.cell_map[0].1, LocId(0));
        assert_eq!(prog.root, LocId(1));
        let run = run_lu(&prog, init, 1000);
        let heap = run.final_heap();
        assert_eq!(heap.cells.len(), 4);
        assert_eq!(heap.get(LocId(2)), Some(&UVal::Nat(2)));
        assert_eq!(heap.get(LocId(3)), Some(&UVal::Nat(2)));
        assert!(matches!(run.end, RunEnd::Terminated { .. }));
    }

    #[test]
    fn budget_exhaustion_reported() {
        let ctx = parse_context_lu(
            "context { fun spin(x) { call spin x } fun main(x) { call spin 0 } }",
        )
        .unwrap();
        let (prog, init) = plug_lu(&ctx, &demo_component()).unwrap();
        let run = run_lu(&prog, init, 100);
        assert!(matches!(run.end, RunEnd::Budget { .. }));
        assert_eq!(run.steps, 100);
    }

    #[test]
    fn returnback_pops_to_component() {
        // component calls back into the context; the context's ret is a
        // returnback action
        let comp = parse_component_lu(
            "component {
               root lroot;
               import notify;
               fun poke(x) { call notify 1; ret }
             }",
        )
        .unwrap();
        let ctx = parse_context_lu(
            "context { fun notify(y) { skip } fun main(x) { call poke 0 } }",
        )
        .unwrap();
        let (prog, init) = plug_lu(&ctx, &comp).unwrap();
        let run = run_lu(&prog, init, 1000);
        let kinds: Vec<ActKind> = run.trace.iter().map(|a| a.kind).collect();
        assert_eq!(
            kinds,
            vec![ActKind::Call, ActKind::Callback, ActKind::Returnback, ActKind::Return]
        );
        check_alternation(&run.trace).unwrap();
    }

    #[test]
    fn assignment_to_unallocated_is_stuck() {
        let ctx = parse_context_lu("context { fun main(x) { let y = 5 in y := 1 } }").unwrap();
        let (prog, init) = plug_lu(&ctx, &demo_component()).unwrap();
        let run = run_lu(&prog, init, 1000);
        assert!(matches!(run.end, RunEnd::Stuck { .. }));
    }

    #[test]
    fn pretty_print_round_trips() {
        let comp = demo_component();
        let reparsed = parse_component_lu(&comp.to_string()).unwrap();
        assert_eq!(comp, reparsed);
        let ctx = parse_context_lu(
            "context {
               heap { l1 = <1, true>; }
               fun main(x) { let a = !l1 in if a.2 then { call f a.1 } else skip }
               fun f(z) { skip }
             }",
        )
        .unwrap();
        let reparsed = parse_context_lu(&ctx.to_string()).unwrap();
        assert_eq!(ctx, reparsed);
    }
}
