//! Operational semantics of the concurrent capability machine.
//!
//! A state is a soup of processes over one shared tagged heap. Scheduling is
//! explicit: `try_step_lc` attempts one step of one process, and
//! `schedule_run_lc` drives a whole soup with a seeded uniform scheduler.
//! `fork` appends a process with an empty call stack, so forked code is
//! classified as context-side until it calls a function. Terminated
//! processes stay in the soup; `letatom` allocates and seals in one
//! indivisible step, so no interleaving ever observes the open cell that the
//! `new`/`hide` sequence goes through.

use super::ast::*;
use crate::lp::ast::{PExpr, PVal, Tag};
use crate::lp::sem::{eval_expr, fv_expr, subst_expr, ActionLp, EvalStuckP, PHeap};
use crate::lu::sem::PlugError;
use crate::syntax::{CapId, Name, Side};
use crate::trace::Action;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

// ---------------------------------------------------------------------------
// Substitution (closed values only, binders shadow)
// ---------------------------------------------------------------------------

pub fn subst_stmt(s: &CStmt, x: &str, v: &PVal) -> CStmt {
    let under = |y: &Name, body: &CStmt| -> Box<CStmt> {
        Box::new(if y == x { body.clone() } else { subst_stmt(body, x, v) })
    };
    match s {
        CStmt::Skip | CStmt::Ret => s.clone(),
        CStmt::Seq(a, b) => CStmt::seq(subst_stmt(a, x, v), subst_stmt(b, x, v)),
        CStmt::Let(y, e, body) => CStmt::Let(y.clone(), subst_expr(e, x, v), under(y, body)),
        CStmt::LetNew(y, e, body) => {
            CStmt::LetNew(y.clone(), subst_expr(e, x, v), under(y, body))
        }
        CStmt::LetHide(y, e, body) => {
            CStmt::LetHide(y.clone(), subst_expr(e, x, v), under(y, body))
        }
        CStmt::LetAtom(y, e, body) => {
            CStmt::LetAtom(y.clone(), subst_expr(e, x, v), under(y, body))
        }
        CStmt::Ifz(e, t, f) => CStmt::Ifz(
            subst_expr(e, x, v),
            Box::new(subst_stmt(t, x, v)),
            Box::new(subst_stmt(f, x, v)),
        ),
        CStmt::Call(f, e) => CStmt::Call(f.clone(), subst_expr(e, x, v)),
        CStmt::AssignWith(t, e, w) => CStmt::AssignWith(
            subst_expr(t, x, v),
            subst_expr(e, x, v),
            subst_expr(w, x, v),
        ),
        CStmt::Destruct(y, e, pat, hit, miss) => CStmt::Destruct(
            y.clone(),
            subst_expr(e, x, v),
            *pat,
            under(y, hit),
            Box::new(subst_stmt(miss, x, v)),
        ),
        CStmt::Fork(body) => CStmt::Fork(Box::new(subst_stmt(body, x, v))),
        CStmt::Expr(e) => CStmt::Expr(subst_expr(e, x, v)),
    }
}

fn fv_stmt(s: &CStmt, bound: &mut Vec<Name>, out: &mut Vec<Name>) {
    match s {
        CStmt::Skip | CStmt::Ret => {}
        CStmt::Seq(a, b) => {
            fv_stmt(a, bound, out);
            fv_stmt(b, bound, out);
        }
        CStmt::Let(x, e, body)
        | CStmt::LetNew(x, e, body)
        | CStmt::LetHide(x, e, body)
        | CStmt::LetAtom(x, e, body) => {
            fv_expr(e, bound, out);
            bound.push(x.clone());
            fv_stmt(body, bound, out);
            bound.pop();
        }
        CStmt::Ifz(e, t, f) => {
            fv_expr(e, bound, out);
            fv_stmt(t, bound, out);
            fv_stmt(f, bound, out);
        }
        CStmt::Call(_, e) | CStmt::Expr(e) => fv_expr(e, bound, out),
        CStmt::AssignWith(t, e, w) => {
            fv_expr(t, bound, out);
            fv_expr(e, bound, out);
            fv_expr(w, bound, out);
        }
        CStmt::Destruct(x, e, _, hit, miss) => {
            fv_expr(e, bound, out);
            bound.push(x.clone());
            fv_stmt(hit, bound, out);
            bound.pop();
            fv_stmt(miss, bound, out);
        }
        CStmt::Fork(body) => fv_stmt(body, bound, out),
    }
}

pub fn free_vars(f: &CFun) -> Vec<Name> {
    let mut bound = vec![f.param.clone()];
    let mut out = Vec::new();
    fv_stmt(&f.body, &mut bound, &mut out);
    out
}

fn call_targets(s: &CStmt, out: &mut Vec<Name>) {
    match s {
        CStmt::Skip | CStmt::Ret | CStmt::Expr(_) | CStmt::AssignWith(..) => {}
        CStmt::Seq(a, b) => {
            call_targets(a, out);
            call_targets(b, out);
        }
        CStmt::Let(_, _, body)
        | CStmt::LetNew(_, _, body)
        | CStmt::LetHide(_, _, body)
        | CStmt::LetAtom(_, _, body)
        | CStmt::Fork(body) => call_targets(body, out),
        CStmt::Ifz(_, t, f) => {
            call_targets(t, out);
            call_targets(f, out);
        }
        CStmt::Destruct(_, _, _, hit, miss) => {
            call_targets(hit, out);
            call_targets(miss, out);
        }
        CStmt::Call(f, _) => out.push(f.clone()),
    }
}

// ---------------------------------------------------------------------------
// Capability-name resolution
// ---------------------------------------------------------------------------

fn resolve_expr(e: &PExpr, names: &[Name], bound: &mut Vec<Name>) -> PExpr {
    match e {
        PExpr::Var(x) => {
            if !bound.iter().any(|b| b == x) {
                if let Some(i) = names.iter().position(|n| n == x) {
                    return PExpr::Val(PVal::Cap(CapId(i as u64)));
                }
            }
            e.clone()
        }
        PExpr::Val(_) => e.clone(),
        PExpr::Op(op, a, b) => PExpr::Op(
            *op,
            Box::new(resolve_expr(a, names, bound)),
            Box::new(resolve_expr(b, names, bound)),
        ),
        PExpr::Cmp(c, a, b) => PExpr::Cmp(
            *c,
            Box::new(resolve_expr(a, names, bound)),
            Box::new(resolve_expr(b, names, bound)),
        ),
        PExpr::Pair(a, b) => {
            PExpr::pair(resolve_expr(a, names, bound), resolve_expr(b, names, bound))
        }
        PExpr::Proj(i, e0) => PExpr::proj(*i, resolve_expr(e0, names, bound)),
        PExpr::DerefWith(e0, w) => {
            PExpr::deref_with(resolve_expr(e0, names, bound), resolve_expr(w, names, bound))
        }
    }
}

/// Replace unshadowed occurrences of declared capability names with their
/// token literals. Binders (including `destruct`'s hit branch) shadow.
fn resolve_stmt(s: &CStmt, names: &[Name], bound: &mut Vec<Name>) -> CStmt {
    let shadowed = |y: &Name, body: &CStmt, bound: &mut Vec<Name>| -> Box<CStmt> {
        bound.push(y.clone());
        let r = resolve_stmt(body, names, bound);
        bound.pop();
        Box::new(r)
    };
    match s {
        CStmt::Skip | CStmt::Ret => s.clone(),
        CStmt::Seq(a, b) => {
            CStmt::seq(resolve_stmt(a, names, bound), resolve_stmt(b, names, bound))
        }
        CStmt::Let(x, e, body) => {
            CStmt::Let(x.clone(), resolve_expr(e, names, bound), shadowed(x, body, bound))
        }
        CStmt::LetNew(x, e, body) => {
            CStmt::LetNew(x.clone(), resolve_expr(e, names, bound), shadowed(x, body, bound))
        }
        CStmt::LetHide(x, e, body) => {
            CStmt::LetHide(x.clone(), resolve_expr(e, names, bound), shadowed(x, body, bound))
        }
        CStmt::LetAtom(x, e, body) => {
            CStmt::LetAtom(x.clone(), resolve_expr(e, names, bound), shadowed(x, body, bound))
        }
        CStmt::Ifz(e, t, f) => CStmt::Ifz(
            resolve_expr(e, names, bound),
            Box::new(resolve_stmt(t, names, bound)),
            Box::new(resolve_stmt(f, names, bound)),
        ),
        CStmt::Call(f, e) => CStmt::Call(f.clone(), resolve_expr(e, names, bound)),
        CStmt::AssignWith(t, e, w) => CStmt::AssignWith(
            resolve_expr(t, names, bound),
            resolve_expr(e, names, bound),
            resolve_expr(w, names, bound),
        ),
        CStmt::Destruct(x, e, pat, hit, miss) => CStmt::Destruct(
            x.clone(),
            resolve_expr(e, names, bound),
            *pat,
            shadowed(x, hit, bound),
            Box::new(resolve_stmt(miss, names, bound)),
        ),
        CStmt::Fork(body) => CStmt::Fork(Box::new(resolve_stmt(body, names, bound))),
        CStmt::Expr(e) => CStmt::Expr(resolve_expr(e, names, bound)),
    }
}

// ---------------------------------------------------------------------------
// Whole programs
// ---------------------------------------------------------------------------

/// A plugged whole program: merged function table with definition sides,
/// plus the protected initial heap for monitors to agree on.
#[derive(Clone, Debug)]
pub struct ProgLc {
    pub funs: HashMap<Name, (CFun, Side)>,
    pub h0: PHeap,
}

impl ProgLc {
    pub fn side(&self, f: &str) -> Option<Side> {
        self.funs.get(f).map(|(_, s)| *s)
    }

    fn current_side(&self, stack: &[Name]) -> Side {
        stack.last().and_then(|f| self.side(f)).unwrap_or(Side::Context)
    }
}

/// One process: its statement and its call stack of function names.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ProcC {
    pub stmt: CStmt,
    pub stack: Vec<Name>,
}

impl ProcC {
    /// A finished process stays in the soup but can no longer step.
    pub fn is_done(&self) -> bool {
        self.stmt == CStmt::Skip && self.stack.is_empty()
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StateLc {
    pub heap: PHeap,
    pub procs: Vec<ProcC>,
}

impl StateLc {
    pub fn live_indices(&self) -> Vec<usize> {
        (0..self.procs.len()).filter(|&i| !self.procs[i].is_done()).collect()
    }
}

/// Link a component against a context. The initial heap is exactly the
/// component's declared protected heap, with every declared capability
/// registered (so later mints stay fresh even for tokens that only occur
/// inside cell values). A context whose code mentions a declared capability
/// name, or `kroot`, necessarily as a free variable, is rejected as an
/// attacker that assumes a protected token.
pub fn plug_lc(comp: &ComponentLc, ctx: &ContextLc) -> Result<(ProgLc, StateLc), PlugError> {
    let mut funs: HashMap<Name, (CFun, Side)> = HashMap::new();
    for (n, f) in &ctx.funs {
        funs.insert(n.clone(), (f.clone(), Side::Context));
    }
    for (n, f) in &comp.funs {
        let mut bound = vec![f.param.clone()];
        let body = resolve_stmt(&f.body, &comp.cap_names, &mut bound);
        let resolved = CFun { param: f.param.clone(), body };
        if funs.insert(n.clone(), (resolved, Side::Component)).is_some() {
            return Err(PlugError::DuplicateFun(n.clone()));
        }
    }
    if ctx.get_fun("main").is_none() {
        return Err(PlugError::MissingMain);
    }
    for imp in &comp.imports {
        if ctx.get_fun(imp).is_none() {
            return Err(PlugError::ImportNotProvided(imp.clone()));
        }
    }
    for (n, f) in &ctx.funs {
        let fvs = free_vars(f);
        if let Some(v) = fvs.iter().find(|v| *v == "kroot" || comp.cap_names.contains(v)) {
            return Err(PlugError::AttackerCondition(v.clone()));
        }
        if let Some(v) = fvs.first() {
            return Err(PlugError::Unresolved(v.clone(), n.clone()));
        }
        let mut calls = Vec::new();
        call_targets(&f.body, &mut calls);
        for c in calls {
            if !funs.contains_key(&c) {
                return Err(PlugError::UnknownCall(c, n.clone()));
            }
        }
    }
    for (n, _) in &comp.funs {
        let (f, _) = &funs[n];
        if let Some(v) = free_vars(f).first() {
            return Err(PlugError::Unresolved(v.clone(), n.clone()));
        }
        let mut calls = Vec::new();
        call_targets(&f.body, &mut calls);
        for c in calls {
            let in_comp = comp.funs.iter().any(|(m, _)| m == &c);
            let imported = comp.imports.contains(&c);
            if !in_comp && !imported {
                if funs.contains_key(&c) {
                    return Err(PlugError::NonImportedCall(c, n.clone()));
                }
                return Err(PlugError::UnknownCall(c, n.clone()));
            }
        }
    }
    let mut heap = PHeap::empty();
    for cell in &comp.h0 {
        heap.insert_fixed(cell.addr, cell.val.clone(), cell.tag);
        for k in cell.val.caps() {
            heap.register_cap(k);
        }
    }
    for i in 0..comp.cap_names.len() {
        heap.register_cap(CapId(i as u64));
    }
    let prog = ProgLc { funs, h0: heap.clone() };
    let init = StateLc {
        heap,
        procs: vec![ProcC {
            stmt: CStmt::Call("main".into(), PExpr::nat(0)),
            stack: Vec::new(),
        }],
    };
    Ok((prog, init))
}

// ---------------------------------------------------------------------------
// Small-step semantics
// ---------------------------------------------------------------------------

type ReducedC = Result<(Option<ActionLp>, CStmt, Option<CStmt>), EvalStuckP>;

fn reduce(prog: &ProgLc, heap: &mut PHeap, stack: &mut Vec<Name>, stmt: &CStmt) -> ReducedC {
    match stmt {
        CStmt::Seq(s1, s2) => {
            if **s1 == CStmt::Skip {
                return Ok((None, (**s2).clone(), None));
            }
            let (label, s1, forked) = reduce(prog, heap, stack, s1)?;
            Ok((label, CStmt::Seq(Box::new(s1), s2.clone()), forked))
        }
        CStmt::Skip => Err(EvalStuckP::NoRet),
        CStmt::Ret => {
            let popped = stack.pop().ok_or(EvalStuckP::RetEmptyStack)?;
            let from = prog.side(&popped).unwrap_or(Side::Context);
            let to = prog.current_side(stack);
            let label = match (from, to) {
                (Side::Component, Side::Context) => Some(Action::ret(heap.snapshot())),
                (Side::Context, Side::Component) => Some(Action::retback(heap.snapshot())),
                _ => None,
            };
            Ok((label, CStmt::Skip, None))
        }
        CStmt::Let(x, e, body) => {
            let v = eval_expr(e, heap)?;
            Ok((None, subst_stmt(body, x, &v), None))
        }
        CStmt::LetNew(x, e, body) => {
            let v = eval_expr(e, heap)?;
            let addr = heap.alloc(v);
            Ok((None, subst_stmt(body, x, &PVal::Nat(addr)), None))
        }
        CStmt::LetHide(x, e, body) => {
            let addr = match eval_expr(e, heap)? {
                PVal::Nat(n) => n,
                _ => return Err(EvalStuckP::BadAddress),
            };
            let k = heap.hide(addr)?;
            Ok((None, subst_stmt(body, x, &PVal::Cap(k)), None))
        }
        CStmt::LetAtom(x, e, body) => {
            let v = eval_expr(e, heap)?;
            let (addr, k) = heap.alloc_sealed(v);
            let handle = PVal::pair(PVal::Nat(addr), PVal::Cap(k));
            Ok((None, subst_stmt(body, x, &handle), None))
        }
        CStmt::Ifz(e, t, f) => match eval_expr(e, heap)? {
            PVal::Nat(0) => Ok((None, (**t).clone(), None)),
            PVal::Nat(_) => Ok((None, (**f).clone(), None)),
            _ => Err(EvalStuckP::NonNumeric),
        },
        CStmt::Call(fname, e) => {
            let v = eval_expr(e, heap)?;
            let (fun, callee_side) = match prog.funs.get(fname) {
                Some((f, s)) => (f.clone(), *s),
                None => return Err(EvalStuckP::UnknownFunction(fname.clone())),
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
        CStmt::AssignWith(t, e, w) => {
            let addr = match eval_expr(t, heap)? {
                PVal::Nat(n) => n,
                _ => return Err(EvalStuckP::BadAddress),
            };
            let v = eval_expr(e, heap)?;
            let witness = eval_expr(w, heap)?;
            heap.write(addr, &witness, v)?;
            Ok((None, CStmt::Skip, None))
        }
        CStmt::Destruct(x, e, pat, hit, miss) => {
            let v = eval_expr(e, heap)?;
            match (pat, &v) {
                (Pattern::Nat, PVal::Nat(_)) | (Pattern::Pair, PVal::Pair(..)) => {
                    Ok((None, subst_stmt(hit, x, &v), None))
                }
                _ => Ok((None, (**miss).clone(), None)),
            }
        }
        CStmt::Fork(body) => Ok((None, CStmt::Skip, Some((**body).clone()))),
        CStmt::Expr(e) => {
            eval_expr(e, heap)?;
            Ok((None, CStmt::Skip, None))
        }
    }
}

/// Attempt one step of process `i`. On success the returned state has the
/// stepped process updated and any forked child appended (with an empty
/// stack). Finished processes are left in the soup and cannot step.
pub fn try_step_lc(
    prog: &ProgLc,
    state: &StateLc,
    i: usize,
) -> Result<(Option<ActionLp>, StateLc), EvalStuckP> {
    let proc = &state.procs[i];
    if proc.is_done() {
        return Err(EvalStuckP::Finished);
    }
    let mut heap = state.heap.clone();
    let mut stack = proc.stack.clone();
    let (label, stmt, forked) = reduce(prog, &mut heap, &mut stack, &proc.stmt)?;
    let mut procs = state.procs.clone();
    procs[i] = ProcC { stmt, stack };
    if let Some(child) = forked {
        procs.push(ProcC { stmt: child, stack: Vec::new() });
    }
    Ok((label, StateLc { heap, procs }))
}

// ---------------------------------------------------------------------------
// Scheduled runs
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub enum RunEndLc {
    /// Every process in the soup finished.
    Terminated { heap: PHeap },
    /// No live process can step; reasons per stuck process index.
    StuckSoup { reasons: Vec<(usize, EvalStuckP)>, state: StateLc },
    Budget { state: StateLc },
}

#[derive(Clone, Debug)]
pub struct RunLc {
    pub trace: Vec<ActionLp>,
    pub end: RunEndLc,
    pub steps: u64,
}

impl RunLc {
    pub fn final_heap(&self) -> &PHeap {
        match &self.end {
            RunEndLc::Terminated { heap } => heap,
            RunEndLc::StuckSoup { state, .. } => &state.heap,
            RunEndLc::Budget { state } => &state.heap,
        }
    }

    pub fn stuck_reasons(&self) -> Option<&[(usize, EvalStuckP)]> {
        match &self.end {
            RunEndLc::StuckSoup { reasons, .. } => Some(reasons),
            _ => None,
        }
    }
}

/// Run under a seeded scheduler: at each step the set of steppable processes
/// is computed and one is chosen uniformly. Identical (program, state, seed)
/// triples replay identical runs.
pub fn schedule_run_lc(prog: &ProgLc, mut state: StateLc, seed: u64, max_steps: u64) -> RunLc {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::new();
    let mut steps = 0;
    loop {
        if steps >= max_steps {
            return RunLc { trace, end: RunEndLc::Budget { state }, steps };
        }
        let live = state.live_indices();
        if live.is_empty() {
            return RunLc { trace, end: RunEndLc::Terminated { heap: state.heap }, steps };
        }
        let mut candidates = Vec::new();
        let mut stuck = Vec::new();
        for &i in &live {
            match try_step_lc(prog, &state, i) {
                Ok(next) => candidates.push(next),
                Err(reason) => stuck.push((i, reason)),
            }
        }
        if candidates.is_empty() {
            return RunLc { trace, end: RunEndLc::StuckSoup { reasons: stuck, state }, steps };
        }
        let (label, next) = candidates.swap_remove(rng.gen_range(0..candidates.len()));
        if let Some(a) = label {
            trace.push(a);
        }
        state = next;
        steps += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lc::parse::{parse_component_lc, parse_context_lc};
    use crate::trace::ActKind;

    fn plug(comp: &str, ctx: &str) -> (ProgLc, StateLc) {
        let c = parse_component_lc(comp).expect("component parses");
        let a = parse_context_lc(ctx).expect("context parses");
        plug_lc(&c, &a).expect("plugs")
    }

    /// A leaf of the interleaving tree: the final state plus the stuck
    /// reasons of any processes that can no longer step (empty when all
    /// terminated).
    struct Leaf {
        state: StateLc,
        stuck: Vec<(usize, EvalStuckP)>,
    }

    /// Walk every interleaving, recording each reachable state and each
    /// maximal outcome.
    fn explore(
        prog: &ProgLc,
        state: &StateLc,
        depth: u64,
        states: &mut Vec<StateLc>,
        leaves: &mut Vec<Leaf>,
    ) {
        assert!(depth > 0, "interleaving budget exhausted");
        let live = state.live_indices();
        if live.is_empty() {
            leaves.push(Leaf { state: state.clone(), stuck: Vec::new() });
            return;
        }
        let mut stuck = Vec::new();
        let mut stepped = false;
        for &i in &live {
            match try_step_lc(prog, state, i) {
                Ok((_, next)) => {
                    stepped = true;
                    states.push(next.clone());
                    explore(prog, &next, depth - 1, states, leaves);
                }
                Err(reason) => stuck.push((i, reason)),
            }
        }
        if !stepped {
            leaves.push(Leaf { state: state.clone(), stuck });
        }
    }

    #[test]
    fn initial_heap_is_exactly_the_declared_one() {
        let (prog, init) = plug(
            "component { heap0 { 0 = <1, kv> : k0; 1 = 8; } fun f(x) { skip } }",
            "context { fun main(z) { let a = new 5 in let k = hide a in skip } }",
        );
        // first appearance order: kv (value of cell 0), then k0 (its tag)
        assert_eq!(
            init.heap.get(0),
            Some(&(PVal::pair(PVal::Nat(1), PVal::Cap(CapId(0))), Tag::Cap(CapId(1))))
        );
        assert_eq!(init.heap.get(1), Some(&(PVal::Nat(8), Tag::Bot)));
        assert!(init.heap.caps.contains(&CapId(0)));
        assert!(init.heap.caps.contains(&CapId(1)));
        assert_eq!(prog.h0, init.heap);

        // both declared tokens are registered, so the first mint is serial 2
        let run = schedule_run_lc(&prog, init, 0, 100);
        assert!(matches!(run.end, RunEndLc::Terminated { .. }));
        assert_eq!(run.final_heap().get(2).unwrap().1, Tag::Cap(CapId(2)));
    }

    #[test]
    fn letatom_allocates_past_the_high_water_mark_and_seals() {
        let (prog, init) = plug(
            "component {
               heap0 { 0 = 0 : k0; 1 = 1; 2 = 2; 3 = 3; }
               fun stash(x) {
                 letatom c = 7 in { 0 := c.1 with k0; let a = c.1 in a := x with c.2 }
               }
             }",
            "context { fun main(z) { call stash 42 } }",
        );
        let run = schedule_run_lc(&prog, init, 0, 200);
        assert!(matches!(run.end, RunEndLc::Terminated { .. }), "end: {:?}", run.end);
        let heap = run.final_heap();
        // high-water address was 3, so the new cell landed at 4
        assert_eq!(heap.get(0).unwrap().0, PVal::Nat(4));
        let (v, tag) = heap.get(4).unwrap();
        assert_eq!(*v, PVal::Nat(42));
        assert_eq!(*tag, Tag::Cap(CapId(1)));
    }

    #[test]
    fn destruct_sorts_numbers_pairs_and_capabilities() {
        let (prog, init) = plug(
            "component {
               heap0 { 0 = 0 : k0; }
               fun classify(x) {
                 destruct n = x as nat in {
                   0 := (!0 with k0) * 100 + n with k0
                 } else {
                   destruct p = x as pair in {
                     0 := (!0 with k0) * 100 + p.1 + p.2 with k0
                   } else {
                     0 := (!0 with k0) * 100 + 99 with k0
                   }
                 }
               }
             }",
            "context {
               fun main(z) {
                 call classify 5;
                 call classify <2, 4>;
                 let a = new 1 in
                 let k = hide a in
                 call classify k
               }
             }",
        );
        let run = schedule_run_lc(&prog, init, 0, 400);
        assert!(matches!(run.end, RunEndLc::Terminated { .. }), "end: {:?}", run.end);
        // 5 then <2,4> then a token: 5, then 506, then 50699
        assert_eq!(run.final_heap().get(0).unwrap().0, PVal::Nat(50699));
    }

    #[test]
    fn context_naming_a_protected_capability_is_rejected() {
        let comp = parse_component_lc(
            "component { heap0 { 0 = 0 : k0; } fun f(x) { skip } }",
        )
        .unwrap();
        let ctx = parse_context_lc("context { fun main(z) { 0 := 9 with k0 } }").unwrap();
        let err = plug_lc(&comp, &ctx).unwrap_err();
        assert_eq!(err, PlugError::AttackerCondition("k0".into()));

        let ctx = parse_context_lc("context { fun main(z) { 0 := 9 with kroot } }").unwrap();
        let err = plug_lc(&comp, &ctx).unwrap_err();
        assert_eq!(err, PlugError::AttackerCondition("kroot".into()));
    }

    #[test]
    fn binders_shadow_capability_names() {
        let (prog, init) = plug(
            "component {
               heap0 { 0 = 0 : k0; }
               fun f(k0) { 0 := 1 with k0 }
               fun g(x) { 0 := x with k0 }
             }",
            "context { fun main(z) { call g 9; call f 5 } }",
        );
        // g's k0 resolved to the token: the write lands
        // f's k0 is its parameter (5): the write is refused
        let run = schedule_run_lc(&prog, init, 0, 100);
        assert_eq!(run.stuck_reasons(), Some(&[(0, EvalStuckP::CapabilityCheck(0))][..]));
        assert_eq!(run.final_heap().get(0).unwrap().0, PVal::Nat(9));
    }

    #[test]
    fn guessed_witnesses_do_not_open_the_heap() {
        let (prog, init) = plug(
            "component { heap0 { 0 = 0 : k0; } fun f(x) { skip } }",
            "context { fun main(z) { 0 := 9 with 0 } }",
        );
        let run = schedule_run_lc(&prog, init, 0, 100);
        assert_eq!(run.stuck_reasons(), Some(&[(0, EvalStuckP::CapabilityCheck(0))][..]));
        assert_eq!(run.final_heap().get(0).unwrap().0, PVal::Nat(0));
    }

    #[test]
    fn forked_children_run_as_context() {
        let (prog, init) = plug(
            "component {
               heap0 { 0 = 0 : k0; }
               fun spawn(x) { fork { call bump 1 }; ret }
               fun bump(y) { 0 := !0 with k0 + y with k0 }
             }",
            "context { fun main(z) { call spawn 0 } }",
        );
        let run = schedule_run_lc(&prog, init, 3, 200);
        assert!(matches!(run.end, RunEndLc::Terminated { .. }), "end: {:?}", run.end);
        assert_eq!(run.final_heap().get(0).unwrap().0, PVal::Nat(1));
        let kinds: Vec<ActKind> = run.trace.iter().map(|a| a.kind).collect();
        // the child's call into the component is a boundary crossing
        assert_eq!(kinds.iter().filter(|k| **k == ActKind::Call).count(), 2);
        assert_eq!(kinds.iter().filter(|k| **k == ActKind::Return).count(), 2);
    }

    #[test]
    fn schedules_replay_bit_for_bit() {
        let comp = "component {
           heap0 { 0 = 0 : k0; }
           fun add(x) { destruct n = x as nat in { 0 := !0 with k0 + n with k0 } else { skip } }
         }";
        let ctx = "context {
           fun main(z) { fork { call add 1 }; fork { call add 2 }; call add 4 }
         }";
        for seed in [0u64, 1, 42] {
            let (prog, init) = plug(comp, ctx);
            let a = schedule_run_lc(&prog, init.clone(), seed, 500);
            let b = schedule_run_lc(&prog, init, seed, 500);
            assert_eq!(a.steps, b.steps);
            assert_eq!(a.trace, b.trace);
            assert_eq!(a.final_heap(), b.final_heap());
            assert_eq!(a.final_heap().get(0).unwrap().0, PVal::Nat(7));
        }
    }

    const RACE_CTX: &str = "context {
       fun main(z) {
         fork { let j = hide 1 in skip };
         call stash 7
       }
     }";

    #[test]
    fn separate_new_and_hide_lose_a_race_under_some_interleaving() {
        let (prog, init) = plug(
            "component {
               heap0 { 0 = 0 : k0; }
               fun stash(x) {
                 let xo = new x in
                 let xk = hide xo in
                 skip
               }
             }",
            RACE_CTX,
        );
        let mut states = vec![init.clone()];
        let mut leaves = Vec::new();
        explore(&prog, &init, 40, &mut states, &mut leaves);

        // the component's own hide can find its fresh cell already sealed
        let attacker_won = leaves.iter().any(|l| {
            l.stuck.iter().any(|(i, r)| *i == 0 && *r == EvalStuckP::AlreadyHidden(1))
        });
        // and under other schedules the component finishes untouched
        let component_won = leaves.iter().any(|l| {
            l.state.procs[0].is_done()
                && l.stuck.iter().all(|(i, _)| *i == 1)
        });
        assert!(attacker_won, "no interleaving let the attacker capture the cell");
        assert!(component_won, "no interleaving let the component finish");

        // the unprotected window is real: some reachable state has the fresh
        // cell open
        let window = states
            .iter()
            .any(|s| matches!(s.heap.get(1), Some((_, Tag::Bot))));
        assert!(window, "expected an intermediate state with the new cell open");
    }

    #[test]
    fn letatom_closes_the_window_under_every_interleaving() {
        let (prog, init) = plug(
            "component {
               heap0 { 0 = 0 : k0; }
               fun stash(x) { letatom c = x in skip }
             }",
            RACE_CTX,
        );
        let mut states = vec![init.clone()];
        let mut leaves = Vec::new();
        explore(&prog, &init, 40, &mut states, &mut leaves);

        assert!(!leaves.is_empty());
        for leaf in &leaves {
            // the component always finishes; only the attacker ever sticks
            assert!(leaf.state.procs[0].is_done(), "component blocked: {:?}", leaf.stuck);
            assert!(leaf.stuck.iter().all(|(i, _)| *i == 1));
            assert!(leaf.stuck.iter().all(|(_, r)| matches!(
                r,
                EvalStuckP::AlreadyHidden(1) | EvalStuckP::Unallocated(1)
            )));
        }
        // no reachable state exposes an open cell at the raced address
        for s in &states {
            if let Some((_, tag)) = s.heap.get(1) {
                assert!(matches!(tag, Tag::Cap(_)), "open window at address 1: {s:?}");
            }
        }
    }

    #[test]
    fn soup_only_grows_and_finished_processes_stay() {
        let (prog, init) = plug(
            "component { heap0 { } fun burst(x) { fork { skip }; fork { skip }; ret } }",
            "context { fun main(z) { call burst 0 } }",
        );
        let mut state = init;
        let mut sizes = vec![state.procs.len()];
        loop {
            let live = state.live_indices();
            let mut next = None;
            for i in live {
                if let Ok((_, n)) = try_step_lc(&prog, &state, i) {
                    next = Some(n);
                    break;
                }
            }
            match next {
                Some(n) => {
                    sizes.push(n.procs.len());
                    state = n;
                }
                None => break,
            }
        }
        assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(state.procs.len(), 3);
        assert!(state.procs.iter().all(|p| p.is_done()));
    }
}
