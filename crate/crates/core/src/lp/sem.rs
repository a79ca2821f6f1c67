//! Operational semantics of the capability machine.
//!
//! The heap maps natural-number addresses to tagged cells `n -> v : t` where
//! the tag is either `bot` (open) or a capability. Every read and write names
//! a witness expression; a tagged cell only moves when the witness evaluates
//! to exactly its capability. Capabilities are unforgeable: they enter a
//! program only through `hide` or by being read out of a reachable cell.

use super::ast::*;
use crate::lu::sem::PlugError;
use crate::syntax::{CapId, Name, Side, KROOT};
use crate::trace::{Action, PCell};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

pub type ActionLp = Action<PVal, PCell>;

// ---------------------------------------------------------------------------
// Heap
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PHeap {
    pub cells: BTreeMap<u64, (PVal, Tag)>,
    /// Capabilities minted so far. `hide` draws from `next_cap`.
    pub caps: BTreeSet<CapId>,
    next_cap: u64,
}

impl PHeap {
    /// The fixed starting heap: the root capability guarding address 0.
    pub fn initial() -> Self {
        let mut cells = BTreeMap::new();
        cells.insert(0, (PVal::Nat(0), Tag::Cap(KROOT)));
        PHeap { cells, caps: BTreeSet::from([KROOT]), next_cap: KROOT.0 + 1 }
    }

    pub fn empty() -> Self {
        PHeap { cells: BTreeMap::new(), caps: BTreeSet::new(), next_cap: KROOT.0 + 1 }
    }

    pub fn get(&self, addr: u64) -> Option<&(PVal, Tag)> {
        self.cells.get(&addr)
    }

    /// Install a cell directly (test and relation setup; not a program step).
    pub fn insert_fixed(&mut self, addr: u64, v: PVal, tag: Tag) {
        if let Tag::Cap(k) = tag {
            self.caps.insert(k);
            self.next_cap = self.next_cap.max(k.0 + 1);
        }
        self.cells.insert(addr, (v, tag));
    }

    /// Allocate an open cell one past the current top address.
    pub fn alloc(&mut self, v: PVal) -> u64 {
        let addr = self.cells.keys().next_back().map_or(0, |a| a + 1);
        self.cells.insert(addr, (v, Tag::Bot));
        addr
    }

    /// Make a capability known to the heap without attaching it to a cell.
    /// Initial heaps that embed tokens inside cell values need this so later
    /// mints stay fresh.
    pub fn register_cap(&mut self, k: CapId) {
        self.caps.insert(k);
        self.next_cap = self.next_cap.max(k.0 + 1);
    }

    /// Allocate one past the top address and seal the new cell behind a fresh
    /// capability, as a single step: no intermediate open cell ever exists.
    pub fn alloc_sealed(&mut self, v: PVal) -> (u64, CapId) {
        let addr = self.cells.keys().next_back().map_or(0, |a| a + 1);
        let k = CapId(self.next_cap);
        self.next_cap += 1;
        self.caps.insert(k);
        self.cells.insert(addr, (v, Tag::Cap(k)));
        (addr, k)
    }

    /// Mint a fresh capability and seal the (currently open) cell with it.
    pub fn hide(&mut self, addr: u64) -> Result<CapId, EvalStuckP> {
        match self.cells.get_mut(&addr) {
            None => Err(EvalStuckP::Unallocated(addr)),
            Some((_, Tag::Cap(_))) => Err(EvalStuckP::AlreadyHidden(addr)),
            Some((_, tag @ Tag::Bot)) => {
                let k = CapId(self.next_cap);
                self.next_cap += 1;
                self.caps.insert(k);
                *tag = Tag::Cap(k);
                Ok(k)
            }
        }
    }

    /// Check a witness against a cell's tag.
    fn admit(&self, addr: u64, witness: &PVal) -> Result<(), EvalStuckP> {
        match self.cells.get(&addr) {
            None => Err(EvalStuckP::Unallocated(addr)),
            Some((_, Tag::Bot)) => Ok(()),
            Some((_, Tag::Cap(k))) => match witness {
                PVal::Cap(w) if w == k => Ok(()),
                _ => Err(EvalStuckP::CapabilityCheck(addr)),
            },
        }
    }

    pub fn read(&self, addr: u64, witness: &PVal) -> Result<PVal, EvalStuckP> {
        self.admit(addr, witness)?;
        Ok(self.cells[&addr].0.clone())
    }

    pub fn write(&mut self, addr: u64, witness: &PVal, v: PVal) -> Result<(), EvalStuckP> {
        self.admit(addr, witness)?;
        self.cells.get_mut(&addr).expect("admitted cell exists").0 = v;
        Ok(())
    }

    pub fn snapshot(&self) -> Vec<PCell> {
        self.cells
            .iter()
            .map(|(&addr, (v, tag))| PCell { addr, val: v.clone(), tag: tag.clone() })
            .collect()
    }
}

/// Addresses an observer holding `(0, kroot)` can access: starting from the
/// root, follow numbers as addresses and collected capabilities as keys until
/// nothing new opens.
pub fn reach_lp(heap: &PHeap) -> BTreeSet<u64> {
    let mut addrs: BTreeSet<u64> = BTreeSet::from([0]);
    let mut caps: BTreeSet<CapId> = BTreeSet::from([KROOT]);
    let mut open: BTreeSet<u64> = BTreeSet::new();
    loop {
        let mut grew = false;
        for (&addr, (v, tag)) in &heap.cells {
            if open.contains(&addr) || !addrs.contains(&addr) {
                continue;
            }
            let accessible = match tag {
                Tag::Bot => true,
                Tag::Cap(k) => caps.contains(k),
            };
            if !accessible {
                continue;
            }
            open.insert(addr);
            grew = true;
            for n in v.nats() {
                addrs.insert(n);
            }
            for k in v.caps() {
                caps.insert(k);
            }
        }
        if !grew {
            return open;
        }
    }
}

// ---------------------------------------------------------------------------
// Expression evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalStuckP {
    #[error("unbound variable `{0}`")]
    Unbound(Name),
    #[error("arithmetic on a non-number")]
    NonNumeric,
    #[error("projection from a non-pair")]
    NonPair,
    #[error("address position did not evaluate to a number")]
    BadAddress,
    #[error("no cell at address {0}")]
    Unallocated(u64),
    #[error("witness does not match the capability guarding address {0}")]
    CapabilityCheck(u64),
    #[error("hide on an already hidden cell at address {0}")]
    AlreadyHidden(u64),
    #[error("call to unknown function `{0}`")]
    UnknownFunction(Name),
    #[error("function body ended without ret")]
    NoRet,
    #[error("ret with an empty call stack")]
    RetEmptyStack,
    /// Concurrent targets only: the chosen process already terminated.
    #[error("process already terminated")]
    Finished,
}

pub fn eval_expr(e: &PExpr, heap: &PHeap) -> Result<PVal, EvalStuckP> {
    match e {
        PExpr::Var(x) => Err(EvalStuckP::Unbound(x.clone())),
        PExpr::Val(v) => Ok(v.clone()),
        PExpr::Op(op, a, b) => match (eval_expr(a, heap)?, eval_expr(b, heap)?) {
            (PVal::Nat(x), PVal::Nat(y)) => Ok(PVal::Nat(op.apply(x, y))),
            _ => Err(EvalStuckP::NonNumeric),
        },
        PExpr::Cmp(c, a, b) => match (eval_expr(a, heap)?, eval_expr(b, heap)?) {
            // comparison encodes truth numerically: 0 holds, 1 fails
            (PVal::Nat(x), PVal::Nat(y)) => {
                Ok(PVal::Nat(if c.apply(x, y) { 0 } else { 1 }))
            }
            _ => Err(EvalStuckP::NonNumeric),
        },
        PExpr::Pair(a, b) => Ok(PVal::pair(eval_expr(a, heap)?, eval_expr(b, heap)?)),
        PExpr::Proj(i, e0) => match eval_expr(e0, heap)? {
            PVal::Pair(a, b) => Ok(if *i == 1 { *a } else { *b }),
            _ => Err(EvalStuckP::NonPair),
        },
        PExpr::DerefWith(e0, w) => {
            let addr = match eval_expr(e0, heap)? {
                PVal::Nat(n) => n,
                _ => return Err(EvalStuckP::BadAddress),
            };
            let witness = eval_expr(w, heap)?;
            heap.read(addr, &witness)
        }
    }
}

// ---------------------------------------------------------------------------
// Substitution (closed values only, binders shadow)
// ---------------------------------------------------------------------------

pub fn subst_expr(e: &PExpr, x: &str, v: &PVal) -> PExpr {
    match e {
        PExpr::Var(y) if y == x => PExpr::Val(v.clone()),
        PExpr::Var(_) | PExpr::Val(_) => e.clone(),
        PExpr::Op(op, a, b) => {
            PExpr::Op(*op, Box::new(subst_expr(a, x, v)), Box::new(subst_expr(b, x, v)))
        }
        PExpr::Cmp(c, a, b) => {
            PExpr::Cmp(*c, Box::new(subst_expr(a, x, v)), Box::new(subst_expr(b, x, v)))
        }
        PExpr::Pair(a, b) => PExpr::pair(subst_expr(a, x, v), subst_expr(b, x, v)),
        PExpr::Proj(i, e0) => PExpr::proj(*i, subst_expr(e0, x, v)),
        PExpr::DerefWith(e0, w) => PExpr::deref_with(subst_expr(e0, x, v), subst_expr(w, x, v)),
    }
}

pub fn subst_stmt(s: &PStmt, x: &str, v: &PVal) -> PStmt {
    match s {
        PStmt::Skip | PStmt::Ret => s.clone(),
        PStmt::Seq(a, b) => PStmt::seq(subst_stmt(a, x, v), subst_stmt(b, x, v)),
        PStmt::Let(y, e, body) => {
            let body = if y == x { (**body).clone() } else { subst_stmt(body, x, v) };
            PStmt::Let(y.clone(), subst_expr(e, x, v), Box::new(body))
        }
        PStmt::LetNew(y, e, body) => {
            let body = if y == x { (**body).clone() } else { subst_stmt(body, x, v) };
            PStmt::LetNew(y.clone(), subst_expr(e, x, v), Box::new(body))
        }
        PStmt::LetHide(y, e, body) => {
            let body = if y == x { (**body).clone() } else { subst_stmt(body, x, v) };
            PStmt::LetHide(y.clone(), subst_expr(e, x, v), Box::new(body))
        }
        PStmt::Ifz(e, t, f) => PStmt::Ifz(
            subst_expr(e, x, v),
            Box::new(subst_stmt(t, x, v)),
            Box::new(subst_stmt(f, x, v)),
        ),
        PStmt::Call(f, e) => PStmt::Call(f.clone(), subst_expr(e, x, v)),
        PStmt::AssignWith(t, e, w) => PStmt::AssignWith(
            subst_expr(t, x, v),
            subst_expr(e, x, v),
            subst_expr(w, x, v),
        ),
        PStmt::Expr(e) => PStmt::Expr(subst_expr(e, x, v)),
    }
}

// ---------------------------------------------------------------------------
// Whole programs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ProgLp {
    pub funs: HashMap<Name, (PFun, Side)>,
}

#[derive(Debug, Clone)]
pub struct StateLp {
    pub heap: PHeap,
    pub stack: Vec<Name>,
    pub stmt: PStmt,
}

impl ProgLp {
    pub fn side(&self, f: &str) -> Side {
        self.funs.get(f).map_or(Side::Context, |(_, s)| *s)
    }

    pub fn current_side(&self, stack: &[Name]) -> Side {
        stack.last().map_or(Side::Context, |f| self.side(f))
    }
}

pub(crate) fn fv_expr(e: &PExpr, bound: &mut Vec<Name>, out: &mut Vec<Name>) {
    match e {
        PExpr::Var(x) => {
            if !bound.iter().any(|b| b == x) && !out.contains(x) {
                out.push(x.clone());
            }
        }
        PExpr::Val(_) => {}
        PExpr::Op(_, a, b) | PExpr::Cmp(_, a, b) | PExpr::Pair(a, b) => {
            fv_expr(a, bound, out);
            fv_expr(b, bound, out);
        }
        PExpr::Proj(_, e0) => fv_expr(e0, bound, out),
        PExpr::DerefWith(e0, w) => {
            fv_expr(e0, bound, out);
            fv_expr(w, bound, out);
        }
    }
}

fn fv_stmt(s: &PStmt, bound: &mut Vec<Name>, out: &mut Vec<Name>) {
    match s {
        PStmt::Skip | PStmt::Ret => {}
        PStmt::Seq(a, b) => {
            fv_stmt(a, bound, out);
            fv_stmt(b, bound, out);
        }
        PStmt::Let(x, e, body) | PStmt::LetNew(x, e, body) | PStmt::LetHide(x, e, body) => {
            fv_expr(e, bound, out);
            bound.push(x.clone());
            fv_stmt(body, bound, out);
            bound.pop();
        }
        PStmt::Ifz(e, t, f) => {
            fv_expr(e, bound, out);
            fv_stmt(t, bound, out);
            fv_stmt(f, bound, out);
        }
        PStmt::Call(_, e) | PStmt::Expr(e) => fv_expr(e, bound, out),
        PStmt::AssignWith(t, e, w) => {
            fv_expr(t, bound, out);
            fv_expr(e, bound, out);
            fv_expr(w, bound, out);
        }
    }
}

pub fn free_vars(f: &PFun) -> Vec<Name> {
    let mut bound = vec![f.param.clone()];
    let mut out = Vec::new();
    fv_stmt(&f.body, &mut bound, &mut out);
    out
}

fn call_targets(s: &PStmt, out: &mut BTreeSet<Name>) {
    match s {
        PStmt::Skip | PStmt::Ret | PStmt::Expr(_) | PStmt::AssignWith(..) => {}
        PStmt::Seq(a, b) => {
            call_targets(a, out);
            call_targets(b, out);
        }
        PStmt::Let(_, _, body) | PStmt::LetNew(_, _, body) | PStmt::LetHide(_, _, body) => {
            call_targets(body, out)
        }
        PStmt::Ifz(_, t, f) => {
            call_targets(t, out);
            call_targets(f, out);
        }
        PStmt::Call(f, _) => {
            out.insert(f.clone());
        }
    }
}

/// Link a component against a context. The context is function-only; the
/// initial heap is exactly the root cell. A context whose code mentions
/// `kroot` (necessarily as a free variable) is rejected as an attacker that
/// assumes the root capability.
pub fn plug_lp(comp: &ComponentLp, ctx: &ContextLp) -> Result<(ProgLp, StateLp), PlugError> {
    let mut funs: HashMap<Name, (PFun, Side)> = HashMap::new();
    for (n, f) in &comp.funs {
        funs.insert(n.clone(), (f.clone(), Side::Component));
    }
    for (n, f) in &ctx.funs {
        if funs.insert(n.clone(), (f.clone(), Side::Context)).is_some() {
            return Err(PlugError::DuplicateFun(n.clone()));
        }
    }
    let ctx_has_main = ctx.funs.iter().any(|(n, _)| n == "main");
    if !ctx_has_main {
        return Err(PlugError::MissingMain);
    }
    for imp in &comp.imports {
        if !ctx.funs.iter().any(|(n, _)| n == imp) {
            return Err(PlugError::ImportNotProvided(imp.clone()));
        }
    }
    for (n, f) in &ctx.funs {
        let fvs = free_vars(f);
        if fvs.iter().any(|v| v == "kroot") {
            return Err(PlugError::AttackerCondition("kroot".into()));
        }
        if let Some(v) = fvs.first() {
            return Err(PlugError::Unresolved(v.clone(), n.clone()));
        }
        let mut calls = BTreeSet::new();
        call_targets(&f.body, &mut calls);
        for c in &calls {
            if !funs.contains_key(c) {
                return Err(PlugError::UnknownCall(c.clone(), n.clone()));
            }
        }
    }
    for (n, f) in &comp.funs {
        if let Some(v) = free_vars(f).first() {
            return Err(PlugError::Unresolved(v.clone(), n.clone()));
        }
        let mut calls = BTreeSet::new();
        call_targets(&f.body, &mut calls);
        for c in &calls {
            let in_comp = comp.funs.iter().any(|(m, _)| m == c);
            let imported = comp.imports.contains(c);
            if !in_comp && !imported {
                if funs.contains_key(c) {
                    return Err(PlugError::NonImportedCall(c.clone(), n.clone()));
                }
                return Err(PlugError::UnknownCall(c.clone(), n.clone()));
            }
        }
    }
    let state = StateLp {
        heap: PHeap::initial(),
        stack: Vec::new(),
        stmt: PStmt::Call("main".into(), PExpr::nat(0)),
    };
    Ok((ProgLp { funs }, state))
}

// ---------------------------------------------------------------------------
// Small-step execution
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum StepLp {
    Step { label: Option<ActionLp>, state: StateLp },
    Terminated { heap: PHeap },
    Stuck { reason: EvalStuckP, state: StateLp },
}

pub fn step_lp(prog: &ProgLp, state: StateLp) -> StepLp {
    if state.stmt == PStmt::Skip {
        return if state.stack.is_empty() {
            StepLp::Terminated { heap: state.heap }
        } else {
            StepLp::Stuck { reason: EvalStuckP::NoRet, state }
        };
    }
    let StateLp { mut heap, mut stack, stmt } = state;
    match reduce(prog, &mut heap, &mut stack, stmt) {
        Ok((label, stmt)) => StepLp::Step { label, state: StateLp { heap, stack, stmt } },
        Err((reason, stmt)) => StepLp::Stuck { reason, state: StateLp { heap, stack, stmt } },
    }
}

type Reduced = Result<(Option<ActionLp>, PStmt), (EvalStuckP, PStmt)>;

fn reduce(prog: &ProgLp, heap: &mut PHeap, stack: &mut Vec<Name>, stmt: PStmt) -> Reduced {
    match stmt {
        PStmt::Skip => Err((EvalStuckP::NoRet, PStmt::Skip)),
        PStmt::Seq(a, b) => {
            if *a == PStmt::Skip {
                return Ok((None, *b));
            }
            match reduce(prog, heap, stack, *a) {
                Ok((label, a2)) => Ok((label, PStmt::Seq(Box::new(a2), b))),
                Err((r, a2)) => Err((r, PStmt::Seq(Box::new(a2), b))),
            }
        }
        PStmt::Ret => {
            let popped = match stack.pop() {
                Some(f) => f,
                None => return Err((EvalStuckP::RetEmptyStack, PStmt::Ret)),
            };
            let from = prog.side(&popped);
            let to = prog.current_side(stack);
            let label = match (from, to) {
                (Side::Component, Side::Context) => Some(Action::ret(heap.snapshot())),
                (Side::Context, Side::Component) => Some(Action::retback(heap.snapshot())),
                _ => None,
            };
            Ok((label, PStmt::Skip))
        }
        PStmt::Let(x, e, body) => match eval_expr(&e, heap) {
            Ok(v) => Ok((None, subst_stmt(&body, &x, &v))),
            Err(r) => Err((r, PStmt::Let(x, e, body))),
        },
        PStmt::LetNew(x, e, body) => match eval_expr(&e, heap) {
            Ok(v) => {
                let addr = heap.alloc(v);
                Ok((None, subst_stmt(&body, &x, &PVal::Nat(addr))))
            }
            Err(r) => Err((r, PStmt::LetNew(x, e, body))),
        },
        PStmt::LetHide(x, e, body) => {
            let addr = match eval_expr(&e, heap) {
                Ok(PVal::Nat(n)) => n,
                Ok(_) => return Err((EvalStuckP::BadAddress, PStmt::LetHide(x, e, body))),
                Err(r) => return Err((r, PStmt::LetHide(x, e, body))),
            };
            match heap.hide(addr) {
                Ok(k) => Ok((None, subst_stmt(&body, &x, &PVal::Cap(k)))),
                Err(r) => Err((r, PStmt::LetHide(x, e, body))),
            }
        }
        PStmt::Ifz(e, t, f) => match eval_expr(&e, heap) {
            Ok(PVal::Nat(0)) => Ok((None, *t)),
            Ok(PVal::Nat(_)) => Ok((None, *f)),
            Ok(_) => Err((EvalStuckP::NonNumeric, PStmt::Ifz(e, t, f))),
            Err(r) => Err((r, PStmt::Ifz(e, t, f))),
        },
        PStmt::Call(fname, e) => {
            let v = match eval_expr(&e, heap) {
                Ok(v) => v,
                Err(r) => return Err((r, PStmt::Call(fname, e))),
            };
            let (fun, callee_side) = match prog.funs.get(&fname) {
                Some((f, s)) => (f.clone(), *s),
                None => {
                    return Err((
                        EvalStuckP::UnknownFunction(fname.clone()),
                        PStmt::Call(fname, e),
                    ))
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
        PStmt::AssignWith(t, e, w) => {
            let addr = match eval_expr(&t, heap) {
                Ok(PVal::Nat(n)) => n,
                Ok(_) => return Err((EvalStuckP::BadAddress, PStmt::AssignWith(t, e, w))),
                Err(r) => return Err((r, PStmt::AssignWith(t, e, w))),
            };
            let v = match eval_expr(&e, heap) {
                Ok(v) => v,
                Err(r) => return Err((r, PStmt::AssignWith(t, e, w))),
            };
            let witness = match eval_expr(&w, heap) {
                Ok(v) => v,
                Err(r) => return Err((r, PStmt::AssignWith(t, e, w))),
            };
            match heap.write(addr, &witness, v) {
                Ok(()) => Ok((None, PStmt::Skip)),
                Err(r) => Err((r, PStmt::AssignWith(t, e, w))),
            }
        }
        PStmt::Expr(e) => match eval_expr(&e, heap) {
            Ok(_) => Ok((None, PStmt::Skip)),
            Err(r) => Err((r, PStmt::Expr(e))),
        },
    }
}

#[derive(Debug, Clone)]
pub enum RunEnd {
    Terminated { heap: PHeap },
    Stuck { reason: EvalStuckP, state: StateLp },
    Budget { state: StateLp },
}

#[derive(Debug, Clone)]
pub struct RunLp {
    pub trace: Vec<ActionLp>,
    pub end: RunEnd,
    pub steps: u64,
}

impl RunLp {
    pub fn final_heap(&self) -> &PHeap {
        match &self.end {
            RunEnd::Terminated { heap } => heap,
            RunEnd::Stuck { state, .. } => &state.heap,
            RunEnd::Budget { state } => &state.heap,
        }
    }

    pub fn stuck_reason(&self) -> Option<&EvalStuckP> {
        match &self.end {
            RunEnd::Stuck { reason, .. } => Some(reason),
            _ => None,
        }
    }
}

pub fn run_lp(prog: &ProgLp, mut state: StateLp, max_steps: u64) -> RunLp {
    let mut trace = Vec::new();
    let mut steps = 0;
    while steps < max_steps {
        match step_lp(prog, state) {
            StepLp::Step { label, state: next } => {
                if let Some(a) = label {
                    trace.push(a);
                }
                state = next;
                steps += 1;
            }
            StepLp::Terminated { heap } => {
                return RunLp { trace, end: RunEnd::Terminated { heap }, steps };
            }
            StepLp::Stuck { reason, state } => {
                return RunLp { trace, end: RunEnd::Stuck { reason, state }, steps };
            }
        }
    }
    RunLp { trace, end: RunEnd::Budget { state }, steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::parse::{parse_component_lp, parse_context_lp};
    use crate::trace::ActKind;

    fn plug(comp: &str, ctx: &str) -> (ProgLp, StateLp) {
        let c = parse_component_lp(comp).expect("component parses");
        let a = parse_context_lp(ctx).expect("context parses");
        plug_lp(&c, &a).expect("plugs")
    }

    #[test]
    fn capability_gates_the_root_cell() {
        // attacker writes to address 0 with a guessed witness: stuck
        let (prog, st) = plug(
            "component { fun poke(x) { 0 := x with kroot } }",
            "context { fun main(z) { 0 := 9 with 0 } }",
        );
        let run = run_lp(&prog, st, 100);
        assert_eq!(run.stuck_reason(), Some(&EvalStuckP::CapabilityCheck(0)));
        assert_eq!(run.final_heap().get(0).unwrap().0, PVal::Nat(0));

        // the component holds kroot and the same write succeeds
        let (prog, st) = plug(
            "component { fun poke(x) { 0 := x with kroot } }",
            "context { fun main(z) { call poke 9 } }",
        );
        let run = run_lp(&prog, st, 100);
        assert!(matches!(run.end, RunEnd::Terminated { .. }));
        assert_eq!(run.final_heap().get(0).unwrap().0, PVal::Nat(9));
    }

    #[test]
    fn hide_mints_distinct_capabilities() {
        let (prog, st) = plug(
            "component { fun f(x) { skip } }",
            "context { fun main(z) {
                let a = new 1 in
                let b = new 2 in
                let ka = hide a in
                let kb = hide b in
                ifz ka == kb then skip else a := !b with kb with ka
             } }",
        );
        let run = run_lp(&prog, st, 100);
        // ka == kb compares capabilities: arithmetic on non-numbers is stuck,
        // so distinctness is observable only through the heap
        assert_eq!(run.stuck_reason(), Some(&EvalStuckP::NonNumeric));
        let heap = run.final_heap();
        let (_, tag_a) = heap.get(1).unwrap();
        let (_, tag_b) = heap.get(2).unwrap();
        assert!(matches!(tag_a, Tag::Cap(_)));
        assert!(matches!(tag_b, Tag::Cap(_)));
        assert_ne!(tag_a, tag_b);
    }

    #[test]
    fn hide_on_hidden_cell_is_stuck() {
        let (prog, st) = plug(
            "component { fun f(x) { skip } }",
            "context { fun main(z) { let a = new 1 in let k = hide a in let j = hide a in skip } }",
        );
        let run = run_lp(&prog, st, 100);
        assert_eq!(run.stuck_reason(), Some(&EvalStuckP::AlreadyHidden(1)));
    }

    #[test]
    fn allocation_extends_the_top_of_the_heap() {
        let (prog, st) = plug(
            "component { fun f(x) { skip } }",
            "context { fun main(z) { let a = new 10 in let b = new 11 in let c = new 12 in skip } }",
        );
        let run = run_lp(&prog, st, 100);
        assert!(matches!(run.end, RunEnd::Terminated { .. }));
        let heap = run.final_heap();
        let addrs: Vec<u64> = heap.cells.keys().copied().collect();
        assert_eq!(addrs, vec![0, 1, 2, 3]);
        assert_eq!(heap.get(3).unwrap(), &(PVal::Nat(12), Tag::Bot));
    }

    #[test]
    fn boundary_actions_carry_tagged_snapshots() {
        let (prog, st) = plug(
            "component { fun bump(x) { 0 := x with kroot } }",
            "context { fun main(z) { call bump 7 } }",
        );
        let run = run_lp(&prog, st, 100);
        assert!(matches!(run.end, RunEnd::Terminated { .. }));
        let kinds: Vec<ActKind> = run.trace.iter().map(|a| a.kind).collect();
        assert_eq!(kinds, vec![ActKind::Call, ActKind::Return]);
        let ret_heap = &run.trace[1].heap;
        assert_eq!(ret_heap.len(), 1);
        assert_eq!(ret_heap[0].addr, 0);
        assert_eq!(ret_heap[0].val, PVal::Nat(7));
        assert_eq!(ret_heap[0].tag, Tag::Cap(KROOT));
    }

    #[test]
    fn context_mentioning_kroot_is_rejected() {
        let c = parse_component_lp("component { fun f(x) { skip } }").unwrap();
        let a = parse_context_lp("context { fun main(z) { 0 := 1 with kroot } }").unwrap();
        match plug_lp(&c, &a) {
            Err(PlugError::AttackerCondition(_)) => {}
            other => panic!("expected attacker rejection, got {other:?}"),
        }
    }

    #[test]
    fn ifz_branches_on_zero() {
        let (prog, st) = plug(
            "component { fun f(x) { ifz x then 0 := 1 with kroot else 0 := 2 with kroot } }",
            "context { fun main(z) { call f 0; call f 5 } }",
        );
        let run = run_lp(&prog, st, 100);
        assert!(matches!(run.end, RunEnd::Terminated { .. }));
        assert_eq!(run.final_heap().get(0).unwrap().0, PVal::Nat(2));
    }

    #[test]
    fn reachability_follows_numbers_and_collected_capabilities() {
        let mut heap = PHeap::empty();
        let k1 = CapId(7);
        let k9 = CapId(9);
        heap.insert_fixed(0, PVal::Nat(2), Tag::Cap(KROOT));
        heap.insert_fixed(1, PVal::Nat(99), Tag::Cap(k1));
        heap.insert_fixed(2, PVal::pair(PVal::Nat(1), PVal::Cap(k1)), Tag::Bot);
        heap.insert_fixed(5, PVal::Nat(0), Tag::Cap(k9));
        let open = reach_lp(&heap);
        assert_eq!(open, BTreeSet::from([0, 1, 2]));
    }

    #[test]
    fn deref_with_witness_reads_hidden_cells() {
        let (prog, st) = plug(
            "component { fun get(x) { 0 := !0 with kroot + 1 with kroot } }",
            "context { fun main(z) { call get 0; call get 0 } }",
        );
        let run = run_lp(&prog, st, 100);
        assert!(matches!(run.end, RunEnd::Terminated { .. }));
        assert_eq!(run.final_heap().get(0).unwrap().0, PVal::Nat(2));
    }

    #[test]
    fn pretty_print_round_trips() {
        let src = "component { fun f(x) { let v = !x.1 with x.2 in ifz v == 3 then 0 := v * 2 with kroot else skip } }";
        let c = parse_component_lp(src).unwrap();
        let printed = c.to_string();
        let again = parse_component_lp(&printed).unwrap();
        assert!(alpha_eq_component(&c, &again), "printed form differs:\n{printed}");
    }
}
