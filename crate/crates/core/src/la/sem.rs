//! Operational semantics of the typed concurrent source language.
//!
//! A running program is a soup of processes over one shared heap. Each
//! process reduces exactly like the sequential languages (leftmost redex
//! under sequencing, `call` inlines and pushes, `ret` pops and classifies);
//! `fork` appends a new process with an empty call stack, so code running in
//! a forked child is classified as context-side until it calls a function.
//! Heap cells carry the type they were allocated at, and endorsement checks
//! its scrutinee against those per-cell types at runtime.

use super::ast::*;
use super::types::{typecheck_la, typecheck_un, val_has_type, TypeError};
use crate::syntax::{LocId, Name, Side};
use crate::trace::Action;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

/// A heap cell in a snapshot: location, value, and the type the cell was
/// allocated at.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ACell {
    pub loc: LocId,
    pub val: AVal,
    pub ty: TyA,
}

pub type ActionLa = Action<AVal, ACell>;

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct AHeap {
    pub cells: BTreeMap<LocId, (AVal, TyA)>,
    next: u64,
}

impl AHeap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn val(&self, l: LocId) -> Option<&AVal> {
        self.cells.get(&l).map(|(v, _)| v)
    }

    pub fn ty(&self, l: LocId) -> Option<&TyA> {
        self.cells.get(&l).map(|(_, t)| t)
    }

    /// Insert a cell at a chosen serial (program assembly only) and keep the
    /// allocator ahead of it.
    pub fn insert_fixed(&mut self, l: LocId, v: AVal, t: TyA) {
        self.cells.insert(l, (v, t));
        self.next = self.next.max(l.0 + 1);
    }

    pub fn alloc(&mut self, v: AVal, t: TyA) -> LocId {
        let l = LocId(self.next);
        self.next += 1;
        self.cells.insert(l, (v, t));
        l
    }

    /// Write an existing cell; the recorded type is fixed at allocation.
    pub fn set(&mut self, l: LocId, v: AVal) -> Result<(), EvalStuckA> {
        match self.cells.get_mut(&l) {
            Some((slot, _)) => {
                *slot = v;
                Ok(())
            }
            None => Err(EvalStuckA::Unallocated(l)),
        }
    }

    pub fn snapshot(&self) -> Vec<ACell> {
        self.cells
            .iter()
            .map(|(l, (v, t))| ACell { loc: *l, val: v.clone(), ty: t.clone() })
            .collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalStuckA {
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
    #[error("if guard is not a boolean")]
    GuardNotBool,
    #[error("endorsement failed: value does not inhabit `{0}`")]
    EndorseFailed(TyA),
    #[error("call to unknown function `{0}`")]
    UnknownFunction(Name),
    #[error("function body ended without ret")]
    NoRet,
    #[error("ret with an empty call stack")]
    RetEmptyStack,
    #[error("process already terminated")]
    Finished,
}

/// Big-step, heap-reading, effect-free expression evaluation. Coercions are
/// erased at runtime.
pub fn eval_expr(heap: &AHeap, e: &AExpr) -> Result<AVal, EvalStuckA> {
    match e {
        AExpr::Var(x) => Err(EvalStuckA::Unbound(x.clone())),
        AExpr::Val(v) => Ok(v.clone()),
        AExpr::Cell(n) => Err(EvalStuckA::UnresolvedCell(n.clone())),
        AExpr::Op(op, a, b) => match (eval_expr(heap, a)?, eval_expr(heap, b)?) {
            (AVal::Nat(x), AVal::Nat(y)) => Ok(AVal::Nat(op.apply(x, y))),
            _ => Err(EvalStuckA::NonNumeric),
        },
        AExpr::Cmp(c, a, b) => match (eval_expr(heap, a)?, eval_expr(heap, b)?) {
            (AVal::Nat(x), AVal::Nat(y)) => Ok(AVal::Bool(c.apply(x, y))),
            _ => Err(EvalStuckA::NonNumeric),
        },
        AExpr::Pair(a, b) => Ok(AVal::pair(eval_expr(heap, a)?, eval_expr(heap, b)?)),
        AExpr::Proj(i, e) => match eval_expr(heap, e)? {
            AVal::Pair(a, b) => Ok(if *i == 1 { *a } else { *b }),
            _ => Err(EvalStuckA::NonPair),
        },
        AExpr::Deref(e) => match eval_expr(heap, e)? {
            AVal::Loc(l) => heap.val(l).cloned().ok_or(EvalStuckA::Unallocated(l)),
            _ => Err(EvalStuckA::NonLocation),
        },
        AExpr::Coerce(e) => eval_expr(heap, e),
    }
}

// ---------------------------------------------------------------------------
// Substitution. Only closed values are ever substituted, so shadowing is the
// only capture concern.
// ---------------------------------------------------------------------------

pub fn subst_expr(e: &AExpr, x: &str, v: &AVal) -> AExpr {
    match e {
        AExpr::Var(y) if y == x => AExpr::Val(v.clone()),
        AExpr::Var(_) | AExpr::Val(_) | AExpr::Cell(_) => e.clone(),
        AExpr::Op(op, a, b) => {
            AExpr::Op(*op, Box::new(subst_expr(a, x, v)), Box::new(subst_expr(b, x, v)))
        }
        AExpr::Cmp(c, a, b) => {
            AExpr::Cmp(*c, Box::new(subst_expr(a, x, v)), Box::new(subst_expr(b, x, v)))
        }
        AExpr::Pair(a, b) => AExpr::pair(subst_expr(a, x, v), subst_expr(b, x, v)),
        AExpr::Proj(i, e) => AExpr::proj(*i, subst_expr(e, x, v)),
        AExpr::Deref(e) => AExpr::deref(subst_expr(e, x, v)),
        AExpr::Coerce(e) => AExpr::coerce(subst_expr(e, x, v)),
    }
}

pub fn subst_stmt(s: &AStmt, x: &str, v: &AVal) -> AStmt {
    match s {
        AStmt::Skip | AStmt::Ret => s.clone(),
        AStmt::Seq(a, b) => AStmt::seq(subst_stmt(a, x, v), subst_stmt(b, x, v)),
        AStmt::Let(y, ann, e, body) => {
            let e = subst_expr(e, x, v);
            let body = if y == x { (**body).clone() } else { subst_stmt(body, x, v) };
            AStmt::Let(y.clone(), ann.clone(), e, Box::new(body))
        }
        AStmt::New(y, t, e, body) => {
            let e = subst_expr(e, x, v);
            let body = if y == x { (**body).clone() } else { subst_stmt(body, x, v) };
            AStmt::New(y.clone(), t.clone(), e, Box::new(body))
        }
        AStmt::Assign(t, e) => AStmt::Assign(subst_expr(t, x, v), subst_expr(e, x, v)),
        AStmt::If(e, a, b) => AStmt::If(
            subst_expr(e, x, v),
            Box::new(subst_stmt(a, x, v)),
            Box::new(subst_stmt(b, x, v)),
        ),
        AStmt::Call(f, e) => AStmt::Call(f.clone(), subst_expr(e, x, v)),
        AStmt::Fork(body) => AStmt::Fork(Box::new(subst_stmt(body, x, v))),
        AStmt::Endorse(y, e, phi, body) => {
            let e = subst_expr(e, x, v);
            let body = if y == x { (**body).clone() } else { subst_stmt(body, x, v) };
            AStmt::Endorse(y.clone(), e, phi.clone(), Box::new(body))
        }
        AStmt::Expr(e) => AStmt::Expr(subst_expr(e, x, v)),
    }
}

// ---------------------------------------------------------------------------
// Whole programs
// ---------------------------------------------------------------------------

/// A plugged whole program: merged function table with definition sides, plus
/// the trusted store layout (name, serial, type) in declaration order.
#[derive(Clone, Debug)]
pub struct ProgLa {
    pub funs: HashMap<Name, (AFun, Side)>,
    pub delta: Vec<(Name, LocId, TyA)>,
}

/// One process: its statement and its call stack of function names.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ProcA {
    pub stmt: AStmt,
    pub stack: Vec<Name>,
}

impl ProcA {
    /// A finished process stays in the soup but can no longer step.
    pub fn is_done(&self) -> bool {
        self.stmt == AStmt::Skip && self.stack.is_empty()
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StateLa {
    pub heap: AHeap,
    pub procs: Vec<ProcA>,
}

impl StateLa {
    pub fn live_indices(&self) -> Vec<usize> {
        (0..self.procs.len()).filter(|&i| !self.procs[i].is_done()).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlugErrorLa {
    #[error("component: {0}")]
    Component(TypeError),
    #[error("attacker: {0}")]
    Attacker(TypeError),
    #[error("function `{0}` is defined by both sides")]
    DuplicateFun(Name),
    #[error("context does not define `main`")]
    MissingMain,
    #[error("component import `{0}` is not provided by the context")]
    ImportNotProvided(Name),
    #[error("call target `{0}` in function `{1}` does not exist")]
    UnknownCall(Name, Name),
    #[error("store entry `{0}` of type `{1}` has no other entry to point at")]
    StoreInitUnsupported(Name, TyA),
}

/// Canonical initial value for a store entry: `true` for booleans, `0` for
/// numbers, componentwise for products, and for references the first *other*
/// store entry of the referent type.
fn synth_val(i: usize, t: &TyA, delta: &[(Name, TyA)]) -> Result<AVal, PlugErrorLa> {
    match t {
        TyA::Bool => Ok(AVal::Bool(true)),
        TyA::Nat => Ok(AVal::Nat(0)),
        TyA::Prod(a, b) => {
            Ok(AVal::pair(synth_val(i, a, delta)?, synth_val(i, b, delta)?))
        }
        TyA::Ref(inner) => delta
            .iter()
            .enumerate()
            .find(|(j, (_, tj))| *j != i && tj == &**inner)
            .map(|(j, _)| AVal::Loc(LocId(j as u64)))
            .ok_or_else(|| {
                PlugErrorLa::StoreInitUnsupported(delta[i].0.clone(), t.clone())
            }),
        TyA::Un => Err(PlugErrorLa::StoreInitUnsupported(delta[i].0.clone(), t.clone())),
    }
}

fn resolve_cells_to_locs(s: &AStmt, delta: &[(Name, LocId, TyA)]) -> AStmt {
    fn expr(e: &AExpr, delta: &[(Name, LocId, TyA)]) -> AExpr {
        match e {
            AExpr::Cell(n) => match delta.iter().find(|(m, _, _)| m == n) {
                Some((_, l, _)) => AExpr::Val(AVal::Loc(*l)),
                None => e.clone(),
            },
            AExpr::Var(_) | AExpr::Val(_) => e.clone(),
            AExpr::Op(op, a, b) => {
                AExpr::Op(*op, Box::new(expr(a, delta)), Box::new(expr(b, delta)))
            }
            AExpr::Cmp(c, a, b) => {
                AExpr::Cmp(*c, Box::new(expr(a, delta)), Box::new(expr(b, delta)))
            }
            AExpr::Pair(a, b) => AExpr::pair(expr(a, delta), expr(b, delta)),
            AExpr::Proj(i, e0) => AExpr::proj(*i, expr(e0, delta)),
            AExpr::Deref(e0) => AExpr::deref(expr(e0, delta)),
            AExpr::Coerce(e0) => AExpr::coerce(expr(e0, delta)),
        }
    }
    match s {
        AStmt::Skip | AStmt::Ret => s.clone(),
        AStmt::Seq(a, b) => {
            AStmt::seq(resolve_cells_to_locs(a, delta), resolve_cells_to_locs(b, delta))
        }
        AStmt::Let(x, ann, e, body) => AStmt::Let(
            x.clone(),
            ann.clone(),
            expr(e, delta),
            Box::new(resolve_cells_to_locs(body, delta)),
        ),
        AStmt::New(x, t, e, body) => AStmt::New(
            x.clone(),
            t.clone(),
            expr(e, delta),
            Box::new(resolve_cells_to_locs(body, delta)),
        ),
        AStmt::Assign(t, e) => AStmt::Assign(expr(t, delta), expr(e, delta)),
        AStmt::If(e, a, b) => AStmt::If(
            expr(e, delta),
            Box::new(resolve_cells_to_locs(a, delta)),
            Box::new(resolve_cells_to_locs(b, delta)),
        ),
        AStmt::Call(f, e) => AStmt::Call(f.clone(), expr(e, delta)),
        AStmt::Fork(body) => AStmt::Fork(Box::new(resolve_cells_to_locs(body, delta))),
        AStmt::Endorse(x, e, phi, body) => AStmt::Endorse(
            x.clone(),
            expr(e, delta),
            phi.clone(),
            Box::new(resolve_cells_to_locs(body, delta)),
        ),
        AStmt::Expr(e) => AStmt::Expr(expr(e, delta)),
    }
}

/// Assemble a whole program: typecheck the component (elaborating it), check
/// the context against the attacker discipline, build the initial trusted
/// store (serials in declaration order, canonical values), and start one
/// process at `call main 0`.
pub fn plug_la(ctx: &ContextLa, comp: &ComponentLa) -> Result<(ProgLa, StateLa), PlugErrorLa> {
    let comp = typecheck_la(comp).map_err(PlugErrorLa::Component)?;
    let delta_names: Vec<Name> = comp.delta.iter().map(|(n, _)| n.clone()).collect();
    typecheck_un(ctx, &delta_names).map_err(PlugErrorLa::Attacker)?;

    for (n, _) in &comp.funs {
        if ctx.get_fun(n).is_some() {
            return Err(PlugErrorLa::DuplicateFun(n.clone()));
        }
    }
    if ctx.get_fun("main").is_none() {
        return Err(PlugErrorLa::MissingMain);
    }
    for i in &comp.imports {
        if ctx.get_fun(i).is_none() {
            return Err(PlugErrorLa::ImportNotProvided(i.clone()));
        }
    }
    for (fname, fun) in &ctx.funs {
        let mut targets = Vec::new();
        stmt_call_targets(&fun.body, &mut targets);
        for t in targets {
            if ctx.get_fun(&t).is_none() && comp.get_fun(&t).is_none() {
                return Err(PlugErrorLa::UnknownCall(t, fname.clone()));
            }
        }
    }

    let mut heap = AHeap::new();
    let mut delta = Vec::with_capacity(comp.delta.len());
    for (i, (n, t)) in comp.delta.iter().enumerate() {
        let v = synth_val(i, t, &comp.delta)?;
        let l = LocId(i as u64);
        heap.insert_fixed(l, v, t.clone());
        delta.push((n.clone(), l, t.clone()));
    }

    let mut funs = HashMap::new();
    for (n, f) in &ctx.funs {
        funs.insert(n.clone(), (f.clone(), Side::Context));
    }
    for (n, f) in &comp.funs {
        let body = resolve_cells_to_locs(&f.body, &delta);
        funs.insert(n.clone(), (AFun { param: f.param.clone(), body }, Side::Component));
    }

    let prog = ProgLa { funs, delta };
    let init = StateLa {
        heap,
        procs: vec![ProcA {
            stmt: AStmt::Call("main".into(), AExpr::nat(0)),
            stack: Vec::new(),
        }],
    };
    Ok((prog, init))
}

fn stmt_call_targets(s: &AStmt, out: &mut Vec<Name>) {
    match s {
        AStmt::Skip | AStmt::Ret | AStmt::Expr(_) | AStmt::Assign(..) => {}
        AStmt::Seq(a, b) => {
            stmt_call_targets(a, out);
            stmt_call_targets(b, out);
        }
        AStmt::Let(_, _, _, body)
        | AStmt::New(_, _, _, body)
        | AStmt::Endorse(_, _, _, body)
        | AStmt::Fork(body) => stmt_call_targets(body, out),
        AStmt::If(_, a, b) => {
            stmt_call_targets(a, out);
            stmt_call_targets(b, out);
        }
        AStmt::Call(f, _) => out.push(f.clone()),
    }
}

// ---------------------------------------------------------------------------
// Small-step semantics
// ---------------------------------------------------------------------------

impl ProgLa {
    pub fn side(&self, f: &str) -> Option<Side> {
        self.funs.get(f).map(|(_, s)| *s)
    }

    /// Side of the currently executing code: top of the call stack, or the
    /// context for the top-level pseudo-frame. A forked child starts with an
    /// empty stack, so it counts as context until it calls.
    fn current_side(&self, stack: &[Name]) -> Side {
        stack.last().and_then(|f| self.side(f)).unwrap_or(Side::Context)
    }
}

type ReducedA = Result<(Option<ActionLa>, AStmt, Option<AStmt>), EvalStuckA>;

fn reduce(prog: &ProgLa, heap: &mut AHeap, stack: &mut Vec<Name>, stmt: &AStmt) -> ReducedA {
    match stmt {
        AStmt::Seq(s1, s2) => {
            if **s1 == AStmt::Skip {
                return Ok((None, (**s2).clone(), None));
            }
            let (label, s1, forked) = reduce(prog, heap, stack, s1)?;
            Ok((label, AStmt::Seq(Box::new(s1), s2.clone()), forked))
        }
        AStmt::Skip => Err(EvalStuckA::NoRet),
        AStmt::Ret => {
            let popped = stack.pop().ok_or(EvalStuckA::RetEmptyStack)?;
            let from = prog.side(&popped).unwrap_or(Side::Context);
            let to = prog.current_side(stack);
            let label = match (from, to) {
                (Side::Component, Side::Context) => Some(Action::ret(heap.snapshot())),
                (Side::Context, Side::Component) => Some(Action::retback(heap.snapshot())),
                _ => None,
            };
            Ok((label, AStmt::Skip, None))
        }
        AStmt::Let(x, _, e, body) => {
            let v = eval_expr(heap, e)?;
            Ok((None, subst_stmt(body, x, &v), None))
        }
        AStmt::New(x, t, e, body) => {
            let v = eval_expr(heap, e)?;
            let l = heap.alloc(v, t.clone());
            Ok((None, subst_stmt(body, x, &AVal::Loc(l)), None))
        }
        AStmt::Assign(tgt, e) => {
            let l = match eval_expr(heap, tgt)? {
                AVal::Loc(l) => l,
                _ => return Err(EvalStuckA::NonLocation),
            };
            let v = eval_expr(heap, e)?;
            heap.set(l, v)?;
            Ok((None, AStmt::Skip, None))
        }
        AStmt::If(e, a, b) => match eval_expr(heap, e)? {
            AVal::Bool(true) => Ok((None, (**a).clone(), None)),
            AVal::Bool(false) => Ok((None, (**b).clone(), None)),
            _ => Err(EvalStuckA::GuardNotBool),
        },
        AStmt::Call(fname, e) => {
            let v = eval_expr(heap, e)?;
            let (fun, callee_side) = match prog.funs.get(fname) {
                Some((f, s)) => (f.clone(), *s),
                None => return Err(EvalStuckA::UnknownFunction(fname.clone())),
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
            stack.push(fname.clone());
            Ok((label, subst_stmt(&fun.body, &fun.param, &v), None))
        }
        AStmt::Fork(body) => Ok((None, AStmt::Skip, Some((**body).clone()))),
        AStmt::Endorse(x, e, phi, body) => {
            let v = eval_expr(heap, e)?;
            if val_has_type(&|l| heap.ty(l).cloned(), &v, phi) {
                Ok((None, subst_stmt(body, x, &v), None))
            } else {
                Err(EvalStuckA::EndorseFailed(phi.clone()))
            }
        }
        AStmt::Expr(e) => {
            eval_expr(heap, e)?;
            Ok((None, AStmt::Skip, None))
        }
    }
}

/// Attempt one step of process `i`. On success the returned state has the
/// stepped process updated and any forked child appended (with an empty
/// stack). Finished processes are left in the soup and cannot step.
pub fn try_step_la(
    prog: &ProgLa,
    state: &StateLa,
    i: usize,
) -> Result<(Option<ActionLa>, StateLa), EvalStuckA> {
    let proc = &state.procs[i];
    if proc.is_done() {
        return Err(EvalStuckA::Finished);
    }
    let mut heap = state.heap.clone();
    let mut stack = proc.stack.clone();
    let (label, stmt, forked) = reduce(prog, &mut heap, &mut stack, &proc.stmt)?;
    let mut procs = state.procs.clone();
    procs[i] = ProcA { stmt, stack };
    if let Some(child) = forked {
        procs.push(ProcA { stmt: child, stack: Vec::new() });
    }
    Ok((label, StateLa { heap, procs }))
}

// ---------------------------------------------------------------------------
// Scheduled runs
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub enum RunEndLa {
    /// Every process in the soup finished.
    Terminated { heap: AHeap },
    /// No live process can step; reasons per stuck process index.
    StuckSoup { reasons: Vec<(usize, EvalStuckA)>, state: StateLa },
    Budget { state: StateLa },
}

#[derive(Clone, Debug)]
pub struct RunLa {
    pub trace: Vec<ActionLa>,
    pub end: RunEndLa,
    pub steps: u64,
    /// First step index at which the trusted store stopped conforming to its
    /// declared types, when the run was asked to watch for that. The
    /// semantics is meant to make this impossible.
    pub conformance_violation: Option<u64>,
}

impl RunLa {
    pub fn final_heap(&self) -> &AHeap {
        match &self.end {
            RunEndLa::Terminated { heap } => heap,
            RunEndLa::StuckSoup { state, .. } => &state.heap,
            RunEndLa::Budget { state } => &state.heap,
        }
    }

    pub fn stuck_reasons(&self) -> Option<&[(usize, EvalStuckA)]> {
        match &self.end {
            RunEndLa::StuckSoup { reasons, .. } => Some(reasons),
            _ => None,
        }
    }
}

/// Does the heap satisfy the trusted-store typing: every declared entry
/// present, at its declared type, holding a value of that type?
pub fn heap_conforms(heap: &AHeap, delta: &[(Name, LocId, TyA)]) -> bool {
    delta.iter().all(|(_, l, t)| match heap.cells.get(l) {
        Some((v, cell_t)) => cell_t == t && val_has_type(&|l| heap.ty(l).cloned(), v, t),
        None => false,
    })
}

/// Run under a seeded scheduler: at each step the set of steppable processes
/// is computed and one is chosen uniformly. Identical (program, state, seed)
/// triples replay identical runs. With `check_conformance` the trusted-store
/// typing is verified after every step and the first violation recorded.
pub fn schedule_run(
    prog: &ProgLa,
    mut state: StateLa,
    seed: u64,
    max_steps: u64,
    check_conformance: bool,
) -> RunLa {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::new();
    let mut steps = 0;
    let mut conformance_violation = None;
    loop {
        if steps >= max_steps {
            return RunLa { trace, end: RunEndLa::Budget { state }, steps, conformance_violation };
        }
        let live = state.live_indices();
        if live.is_empty() {
            return RunLa {
                trace,
                end: RunEndLa::Terminated { heap: state.heap },
                steps,
                conformance_violation,
            };
        }
        let mut candidates = Vec::new();
        let mut stuck = Vec::new();
        for &i in &live {
            match try_step_la(prog, &state, i) {
                Ok(next) => candidates.push(next),
                Err(reason) => stuck.push((i, reason)),
            }
        }
        if candidates.is_empty() {
            return RunLa {
                trace,
                end: RunEndLa::StuckSoup { reasons: stuck, state },
                steps,
                conformance_violation,
            };
        }
        let (label, next) = candidates.swap_remove(rng.gen_range(0..candidates.len()));
        if let Some(a) = label {
            trace.push(a);
        }
        state = next;
        steps += 1;
        if check_conformance
            && conformance_violation.is_none()
            && !heap_conforms(&state.heap, &prog.delta)
        {
            conformance_violation = Some(steps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::la::parse::{parse_component_la, parse_context_la};
    use crate::trace::ActKind;

    fn counter_component() -> ComponentLa {
        parse_component_la(
            "component {
               delta { count : Nat; }
               fun add(x) {
                 endorse amt = x as Nat in count := !count + amt;
                 ret
               }
             }",
        )
        .unwrap()
    }

    #[test]
    fn store_synthesis_is_canonical() {
        let comp = parse_component_la(
            "component {
               delta { a : Nat; b : Ref Nat; c : Bool * Nat; }
               fun f(x) { skip }
             }",
        )
        .unwrap();
        let ctx = parse_context_la("context { fun main(z) { skip } }").unwrap();
        let (prog, init) = plug_la(&ctx, &comp).unwrap();
        assert_eq!(init.heap.val(LocId(0)), Some(&AVal::Nat(0)));
        assert_eq!(init.heap.val(LocId(1)), Some(&AVal::Loc(LocId(0))));
        assert_eq!(init.heap.ty(LocId(1)), Some(&TyA::reference(TyA::Nat)));
        assert_eq!(
            init.heap.val(LocId(2)),
            Some(&AVal::pair(AVal::Bool(true), AVal::Nat(0)))
        );
        assert!(heap_conforms(&init.heap, &prog.delta));
    }

    #[test]
    fn dangling_store_reference_is_rejected() {
        let comp = parse_component_la(
            "component { delta { a : Ref Bool; } fun f(x) { skip } }",
        )
        .unwrap();
        let ctx = parse_context_la("context { fun main(z) { skip } }").unwrap();
        assert!(matches!(
            plug_la(&ctx, &comp),
            Err(PlugErrorLa::StoreInitUnsupported(..))
        ));
    }

    #[test]
    fn endorse_admits_a_number() {
        let ctx = parse_context_la("context { fun main(z) { call add 3 } }").unwrap();
        let (prog, init) = plug_la(&ctx, &counter_component()).unwrap();
        let run = schedule_run(&prog, init, 7, 1000, true);
        assert!(matches!(run.end, RunEndLa::Terminated { .. }));
        assert_eq!(run.final_heap().val(LocId(0)), Some(&AVal::Nat(3)));
        assert_eq!(run.conformance_violation, None);
        let kinds: Vec<ActKind> = run.trace.iter().map(|a| a.kind).collect();
        assert_eq!(kinds, vec![ActKind::Call, ActKind::Return]);
    }

    #[test]
    fn endorse_refuses_a_pair_and_the_process_sticks() {
        let ctx = parse_context_la("context { fun main(z) { call add <1, 2> } }").unwrap();
        let (prog, init) = plug_la(&ctx, &counter_component()).unwrap();
        let run = schedule_run(&prog, init, 7, 1000, true);
        let reasons = run.stuck_reasons().expect("soup should be stuck");
        assert_eq!(reasons.len(), 1);
        assert_eq!(reasons[0].1, EvalStuckA::EndorseFailed(TyA::Nat));
    }

    #[test]
    fn endorse_checks_refs_against_cell_types() {
        // an attacker-made UN cell endorses as Ref UN; a bare number does not
        let comp = parse_component_la(
            "component {
               delta { sink : Nat; }
               fun keep(x) { endorse r = x as Ref UN in sink := !sink + 1; ret }
             }",
        )
        .unwrap();
        let ctx = parse_context_la(
            "context { fun main(z) { let c = new 9 : UN in { call keep c; call keep 9 } } }",
        )
        .unwrap();
        let (prog, init) = plug_la(&ctx, &comp).unwrap();
        let run = schedule_run(&prog, init, 1, 1000, true);
        let reasons = run.stuck_reasons().expect("second endorse should refuse");
        assert_eq!(reasons[0].1, EvalStuckA::EndorseFailed(TyA::reference(TyA::Un)));
        // the first endorse went through
        assert_eq!(run.final_heap().val(LocId(0)), Some(&AVal::Nat(1)));
    }

    #[test]
    fn fork_appends_a_context_classified_child() {
        // the child has an empty stack, so its call into the component is a
        // context-to-component call, not a callback
        let comp = parse_component_la(
            "component {
               delta { count : Nat; }
               fun bump(x) { count := !count + 1; ret }
               fun spawn(x) { fork { call bump 0 }; ret }
             }",
        )
        .unwrap();
        let ctx = parse_context_la("context { fun main(z) { call spawn 0 } }").unwrap();
        let (prog, init) = plug_la(&ctx, &comp).unwrap();
        let run = schedule_run(&prog, init, 11, 1000, true);
        assert!(matches!(run.end, RunEndLa::Terminated { .. }));
        assert_eq!(run.final_heap().val(LocId(0)), Some(&AVal::Nat(1)));
        let kinds: Vec<ActKind> = run.trace.iter().map(|a| a.kind).collect();
        // spawn's call/return plus the child's own call/return
        assert_eq!(kinds.iter().filter(|k| **k == ActKind::Call).count(), 2);
        assert_eq!(kinds.iter().filter(|k| **k == ActKind::Return).count(), 2);
    }

    #[test]
    fn soup_only_grows() {
        let comp = parse_component_la(
            "component {
               delta { count : Nat; }
               fun burst(x) { fork { skip }; fork { skip }; ret }
             }",
        )
        .unwrap();
        let ctx = parse_context_la("context { fun main(z) { call burst 0 } }").unwrap();
        let (prog, mut state) = plug_la(&ctx, &comp).unwrap();
        let mut sizes = vec![state.procs.len()];
        for _ in 0..200 {
            let live = state.live_indices();
            let Some(&i) = live.first() else { break };
            match try_step_la(&prog, &state, i) {
                Ok((_, next)) => {
                    state = next;
                    sizes.push(state.procs.len());
                }
                Err(_) => break,
            }
        }
        assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*sizes.last().unwrap(), 3);
    }

    #[test]
    fn schedules_replay_bit_for_bit() {
        let comp = parse_component_la(
            "component {
               delta { count : Nat; }
               fun add(x) {
                 endorse amt = x as Nat in count := !count + amt;
                 ret
               }
               fun race(x) { fork { call add 1 }; fork { call add 2 }; ret }
             }",
        )
        .unwrap();
        let ctx = parse_context_la("context { fun main(z) { call race 0 } }").unwrap();
        let (prog, init) = plug_la(&ctx, &comp).unwrap();
        for seed in [0u64, 1, 42] {
            let a = schedule_run(&prog, init.clone(), seed, 10_000, true);
            let b = schedule_run(&prog, init.clone(), seed, 10_000, true);
            assert_eq!(a.trace, b.trace);
            assert_eq!(a.steps, b.steps);
            assert_eq!(a.final_heap(), b.final_heap());
            assert_eq!(a.conformance_violation, None);
            assert_eq!(a.final_heap().val(LocId(0)), Some(&AVal::Nat(3)));
        }
    }

    #[test]
    fn boundary_process_alternates_while_another_runs_internally() {
        let comp = parse_component_la(
            "component {
               delta { count : Nat; }
               import tick;
               fun add(x) {
                 endorse amt = x as Nat in count := !count + amt;
                 ret
               }
               fun chatter(x) { call tick 0; call tick 1; ret }
             }",
        )
        .unwrap();
        let ctx = parse_context_la(
            "context {
               fun tick(z) { skip }
               fun main(z) { fork { let i = new 0 : UN in { i := !i + 1; i := !i + 2 } }; call chatter 0 }
             }",
        )
        .unwrap();
        let (prog, init) = plug_la(&ctx, &comp).unwrap();
        let run = schedule_run(&prog, init, 3, 10_000, true);
        assert!(matches!(run.end, RunEndLa::Terminated { .. }));
        // the boundary-crossing process produces a strictly alternating trace
        // even though a second process is interleaved silently
        let kinds: Vec<ActKind> = run.trace.iter().map(|a| a.kind).collect();
        assert_eq!(
            kinds,
            vec![
                ActKind::Call,
                ActKind::Callback,
                ActKind::Returnback,
                ActKind::Callback,
                ActKind::Returnback,
                ActKind::Return,
            ]
        );
    }

    #[test]
    fn snapshots_carry_cell_types() {
        let ctx = parse_context_la("context { fun main(z) { call add 5 } }").unwrap();
        let (prog, init) = plug_la(&ctx, &counter_component()).unwrap();
        let run = schedule_run(&prog, init, 0, 1000, false);
        let first = &run.trace[0];
        assert_eq!(first.kind, ActKind::Call);
        assert_eq!(
            first.heap,
            vec![ACell { loc: LocId(0), val: AVal::Nat(0), ty: TyA::Nat }]
        );
        assert_eq!(prog.side("add"), Some(Side::Component));
        assert_eq!(prog.side("main"), Some(Side::Context));
    }

    #[test]
    fn pretty_print_round_trips() {
        let comp = counter_component();
        let reparsed = parse_component_la(&comp.to_string()).unwrap();
        assert_eq!(comp, reparsed);
        let ctx = parse_context_la(
            "context {
               fun main(z) {
                 let c = new <1, 2> : UN in
                 if z < 1 then { fork { call main 0 } } else skip
               }
             }",
        )
        .unwrap();
        let reparsed = parse_context_la(&ctx.to_string()).unwrap();
        assert_eq!(ctx, reparsed);
    }
}
