//! Operational semantics of the enclave machine.
//!
//! One shared integer-addressed heap, a soup of processes, and a single
//! access rule: negative addresses answer only to functions on the enclave
//! list. The evaluator threads the currently executing function (the top of
//! the call stack; top-level code counts as a non-enclave pseudo-function),
//! so rights follow identity, not values. Addresses are plain integers that
//! anyone can compute; what the gate refuses is the access, not the name.
//!
//! `fork` gives the child a singleton stack holding the forking function, so
//! forked enclave code keeps its rights; the child's body is closed with a
//! return that pops that frame. Children forked from top-level code start
//! with an empty stack as in the capability target.

use super::ast::*;
use crate::lc::ast::Pattern;
use crate::syntax::{Name, Side};
use crate::trace::Action;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

/// A heap cell in an enclave-machine snapshot.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ICell {
    pub addr: i64,
    pub val: IVal,
}

pub type ActionLi = Action<IVal, ICell>;
pub type TraceLi = Vec<ActionLi>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalStuckI {
    #[error("unbound variable `{0}`")]
    Unbound(Name),
    #[error("arithmetic on a non-number")]
    NonNumeric,
    #[error("projection from a non-pair")]
    NonPair,
    #[error("address is not an integer")]
    BadAddress,
    #[error("address {0} is not allocated")]
    Unallocated(i64),
    #[error("enclave refuses access to address {0}")]
    EnclaveViolation(i64),
    #[error("isolated allocation outside the enclave")]
    IsolateOutsideEnclave,
    #[error("unknown function `{0}`")]
    UnknownFunction(Name),
    #[error("function body ran out without ret")]
    NoRet,
    #[error("ret with an empty call stack")]
    RetEmptyStack,
    #[error("process already terminated")]
    Finished,
}

// ---------------------------------------------------------------------------
// Heap
// ---------------------------------------------------------------------------

/// Integer-addressed heap. Negative addresses form the enclave; reads and
/// writes below zero carry an `enc` witness bit computed from the accessing
/// process's current function. The gate is checked before existence, so a
/// refused probe does not reveal whether the cell is allocated.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct HeapLi {
    pub cells: BTreeMap<i64, IVal>,
}

impl HeapLi {
    pub fn empty() -> HeapLi {
        HeapLi::default()
    }

    pub fn get(&self, addr: i64) -> Option<&IVal> {
        self.cells.get(&addr)
    }

    pub fn insert_fixed(&mut self, addr: i64, v: IVal) {
        self.cells.insert(addr, v);
    }

    /// Public allocation: one past the largest non-negative address, 0 first.
    pub fn alloc_new(&mut self, v: IVal) -> i64 {
        let addr = self.cells.range(0..).next_back().map_or(0, |(a, _)| a + 1);
        self.cells.insert(addr, v);
        addr
    }

    /// Enclave allocation: one below the smallest negative address, -1 first.
    pub fn alloc_iso(&mut self, v: IVal) -> i64 {
        let addr = self.cells.range(..0).next().map_or(-1, |(a, _)| a - 1);
        self.cells.insert(addr, v);
        addr
    }

    pub fn read(&self, addr: i64, enc: bool) -> Result<IVal, EvalStuckI> {
        if addr < 0 && !enc {
            return Err(EvalStuckI::EnclaveViolation(addr));
        }
        self.cells.get(&addr).cloned().ok_or(EvalStuckI::Unallocated(addr))
    }

    pub fn write(&mut self, addr: i64, v: IVal, enc: bool) -> Result<(), EvalStuckI> {
        if addr < 0 && !enc {
            return Err(EvalStuckI::EnclaveViolation(addr));
        }
        match self.cells.get_mut(&addr) {
            Some(slot) => {
                *slot = v;
                Ok(())
            }
            None => Err(EvalStuckI::Unallocated(addr)),
        }
    }

    /// The enclave's view: every cell below zero.
    pub fn negatives(&self) -> BTreeMap<i64, IVal> {
        self.cells.range(..0).map(|(a, v)| (*a, v.clone())).collect()
    }

    pub fn snapshot(&self) -> Vec<ICell> {
        self.cells.iter().map(|(a, v)| ICell { addr: *a, val: v.clone() }).collect()
    }
}

// ---------------------------------------------------------------------------
// Substitution and free variables
// ---------------------------------------------------------------------------

pub fn subst_expr(e: &IExpr, x: &str, v: &IVal) -> IExpr {
    match e {
        IExpr::Var(y) => {
            if y == x {
                IExpr::Val(v.clone())
            } else {
                e.clone()
            }
        }
        IExpr::Val(_) => e.clone(),
        IExpr::Op(op, a, b) => {
            IExpr::Op(*op, Box::new(subst_expr(a, x, v)), Box::new(subst_expr(b, x, v)))
        }
        IExpr::Cmp(c, a, b) => {
            IExpr::Cmp(*c, Box::new(subst_expr(a, x, v)), Box::new(subst_expr(b, x, v)))
        }
        IExpr::Pair(a, b) => IExpr::pair(subst_expr(a, x, v), subst_expr(b, x, v)),
        IExpr::Proj(i, e0) => IExpr::proj(*i, subst_expr(e0, x, v)),
        IExpr::Deref(e0) => IExpr::deref(subst_expr(e0, x, v)),
    }
}

pub fn subst_stmt(s: &IStmt, x: &str, v: &IVal) -> IStmt {
    let under = |y: &Name, body: &IStmt| -> Box<IStmt> {
        Box::new(if y == x { body.clone() } else { subst_stmt(body, x, v) })
    };
    match s {
        IStmt::Skip | IStmt::Ret => s.clone(),
        IStmt::Seq(a, b) => IStmt::seq(subst_stmt(a, x, v), subst_stmt(b, x, v)),
        IStmt::Let(y, e, body) => IStmt::Let(y.clone(), subst_expr(e, x, v), under(y, body)),
        IStmt::LetNew(y, e, body) => {
            IStmt::LetNew(y.clone(), subst_expr(e, x, v), under(y, body))
        }
        IStmt::LetIso(y, e, body) => {
            IStmt::LetIso(y.clone(), subst_expr(e, x, v), under(y, body))
        }
        IStmt::Ifz(e, t, f) => IStmt::Ifz(
            subst_expr(e, x, v),
            Box::new(subst_stmt(t, x, v)),
            Box::new(subst_stmt(f, x, v)),
        ),
        IStmt::Call(f, e) => IStmt::Call(f.clone(), subst_expr(e, x, v)),
        IStmt::Assign(t, e) => IStmt::Assign(subst_expr(t, x, v), subst_expr(e, x, v)),
        IStmt::Destruct(y, e, pat, hit, miss) => IStmt::Destruct(
            y.clone(),
            subst_expr(e, x, v),
            *pat,
            under(y, hit),
            Box::new(subst_stmt(miss, x, v)),
        ),
        IStmt::Fork(body) => IStmt::Fork(Box::new(subst_stmt(body, x, v))),
        IStmt::Expr(e) => IStmt::Expr(subst_expr(e, x, v)),
    }
}

fn fv_expr(e: &IExpr, bound: &mut Vec<Name>, out: &mut Vec<Name>) {
    match e {
        IExpr::Var(x) => {
            if !bound.iter().any(|b| b == x) && !out.iter().any(|o| o == x) {
                out.push(x.clone());
            }
        }
        IExpr::Val(_) => {}
        IExpr::Op(_, a, b) | IExpr::Cmp(_, a, b) | IExpr::Pair(a, b) => {
            fv_expr(a, bound, out);
            fv_expr(b, bound, out);
        }
        IExpr::Proj(_, e0) | IExpr::Deref(e0) => fv_expr(e0, bound, out),
    }
}

fn fv_stmt(s: &IStmt, bound: &mut Vec<Name>, out: &mut Vec<Name>) {
    match s {
        IStmt::Skip | IStmt::Ret => {}
        IStmt::Seq(a, b) => {
            fv_stmt(a, bound, out);
            fv_stmt(b, bound, out);
        }
        IStmt::Let(x, e, body) | IStmt::LetNew(x, e, body) | IStmt::LetIso(x, e, body) => {
            fv_expr(e, bound, out);
            bound.push(x.clone());
            fv_stmt(body, bound, out);
            bound.pop();
        }
        IStmt::Ifz(e, t, f) => {
            fv_expr(e, bound, out);
            fv_stmt(t, bound, out);
            fv_stmt(f, bound, out);
        }
        IStmt::Call(_, e) | IStmt::Expr(e) => fv_expr(e, bound, out),
        IStmt::Assign(t, e) => {
            fv_expr(t, bound, out);
            fv_expr(e, bound, out);
        }
        IStmt::Destruct(x, e, _, hit, miss) => {
            fv_expr(e, bound, out);
            bound.push(x.clone());
            fv_stmt(hit, bound, out);
            bound.pop();
            fv_stmt(miss, bound, out);
        }
        IStmt::Fork(body) => fv_stmt(body, bound, out),
    }
}

pub fn free_vars(f: &IFun) -> Vec<Name> {
    let mut bound = vec![f.param.clone()];
    let mut out = Vec::new();
    fv_stmt(&f.body, &mut bound, &mut out);
    out
}

fn call_targets(s: &IStmt, out: &mut Vec<Name>) {
    match s {
        IStmt::Skip | IStmt::Ret | IStmt::Expr(_) | IStmt::Assign(..) => {}
        IStmt::Seq(a, b) => {
            call_targets(a, out);
            call_targets(b, out);
        }
        IStmt::Let(_, _, body)
        | IStmt::LetNew(_, _, body)
        | IStmt::LetIso(_, _, body)
        | IStmt::Fork(body) => call_targets(body, out),
        IStmt::Ifz(_, t, f) => {
            call_targets(t, out);
            call_targets(f, out);
        }
        IStmt::Destruct(_, _, _, hit, miss) => {
            call_targets(hit, out);
            call_targets(miss, out);
        }
        IStmt::Call(f, _) => out.push(f.clone()),
    }
}

// ---------------------------------------------------------------------------
// Expression evaluation
// ---------------------------------------------------------------------------

/// Evaluate under the access rights of the current function: `enc` says
/// whether that function is on the enclave list. Subtraction is exact, so
/// any integer address is computable; the gate in `read` is what protects
/// the enclave.
pub fn eval_expr(e: &IExpr, heap: &HeapLi, enc: bool) -> Result<IVal, EvalStuckI> {
    match e {
        IExpr::Var(x) => Err(EvalStuckI::Unbound(x.clone())),
        IExpr::Val(v) => Ok(v.clone()),
        IExpr::Op(op, a, b) => {
            match (eval_expr(a, heap, enc)?, eval_expr(b, heap, enc)?) {
                (IVal::Int(x), IVal::Int(y)) => Ok(IVal::Int(op.apply_int(x, y))),
                _ => Err(EvalStuckI::NonNumeric),
            }
        }
        IExpr::Cmp(c, a, b) => {
            match (eval_expr(a, heap, enc)?, eval_expr(b, heap, enc)?) {
                (IVal::Int(x), IVal::Int(y)) => Ok(IVal::of_bool(c.apply_int(x, y))),
                _ => Err(EvalStuckI::NonNumeric),
            }
        }
        IExpr::Pair(a, b) => Ok(IVal::pair(eval_expr(a, heap, enc)?, eval_expr(b, heap, enc)?)),
        IExpr::Proj(i, e0) => match eval_expr(e0, heap, enc)? {
            IVal::Pair(a, b) => Ok(if *i == 1 { *a } else { *b }),
            _ => Err(EvalStuckI::NonPair),
        },
        IExpr::Deref(e0) => match eval_expr(e0, heap, enc)? {
            IVal::Int(n) => heap.read(n, enc),
            _ => Err(EvalStuckI::BadAddress),
        },
    }
}

// ---------------------------------------------------------------------------
// Whole programs
// ---------------------------------------------------------------------------

/// A plugged whole program: merged function table with definition sides, the
/// enclave list, and the protected initial heap for monitors to agree on.
#[derive(Clone, Debug)]
pub struct ProgLi {
    pub funs: HashMap<Name, (IFun, Side)>,
    pub enclave: BTreeSet<Name>,
    pub h0: HeapLi,
}

impl ProgLi {
    pub fn side(&self, f: &str) -> Option<Side> {
        self.funs.get(f).map(|(_, s)| *s)
    }

    fn current_side(&self, stack: &[Name]) -> Side {
        stack.last().and_then(|f| self.side(f)).unwrap_or(Side::Context)
    }

    /// Whether the current function may touch negative addresses. An empty
    /// stack is top-level code: the non-enclave pseudo-function.
    pub fn in_enclave(&self, stack: &[Name]) -> bool {
        stack.last().is_some_and(|f| self.enclave.contains(f))
    }
}

/// One process: its statement and its call stack of function names.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ProcI {
    pub stmt: IStmt,
    pub stack: Vec<Name>,
}

impl ProcI {
    /// A finished process stays in the soup but can no longer step.
    pub fn is_done(&self) -> bool {
        self.stmt == IStmt::Skip && self.stack.is_empty()
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StateLi {
    pub heap: HeapLi,
    pub procs: Vec<ProcI>,
}

impl StateLi {
    pub fn live_indices(&self) -> Vec<usize> {
        (0..self.procs.len()).filter(|&i| !self.procs[i].is_done()).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlugErrorLi {
    #[error("function `{0}` is defined by both sides")]
    DuplicateFun(Name),
    #[error("context does not define `main`")]
    MissingMain,
    #[error("component import `{0}` is not provided by the context")]
    ImportNotProvided(Name),
    #[error("unresolved name `{0}` in function `{1}`")]
    Unresolved(Name, Name),
    #[error("call target `{0}` in function `{1}` does not exist")]
    UnknownCall(Name, Name),
    #[error("component function `{1}` calls `{0}`, which is not an import or component function")]
    NonImportedCall(Name, Name),
    #[error("enclave lists `{0}`, which is not a component function")]
    EnclaveNotAFunction(Name),
    #[error("protected initial address {0} is not negative")]
    ProtectedAddressNotNegative(i64),
}

/// Link a component against a context. The initial heap is exactly the
/// component's declared protected heap and must live entirely below zero.
/// Nothing about the context is restricted beyond closedness: attackers may
/// write any address they can compute, including negative ones; those
/// accesses are refused at run time, not at link time.
pub fn plug_li(comp: &ComponentLi, ctx: &ContextLi) -> Result<(ProgLi, StateLi), PlugErrorLi> {
    let mut funs: HashMap<Name, (IFun, Side)> = HashMap::new();
    for (n, f) in &ctx.funs {
        funs.insert(n.clone(), (f.clone(), Side::Context));
    }
    for (n, f) in &comp.funs {
        if funs.insert(n.clone(), (f.clone(), Side::Component)).is_some() {
            return Err(PlugErrorLi::DuplicateFun(n.clone()));
        }
    }
    if ctx.get_fun("main").is_none() {
        return Err(PlugErrorLi::MissingMain);
    }
    for imp in &comp.imports {
        if ctx.get_fun(imp).is_none() {
            return Err(PlugErrorLi::ImportNotProvided(imp.clone()));
        }
    }
    for e in &comp.enclave {
        if comp.get_fun(e).is_none() {
            return Err(PlugErrorLi::EnclaveNotAFunction(e.clone()));
        }
    }
    for (addr, _) in &comp.h0 {
        if *addr >= 0 {
            return Err(PlugErrorLi::ProtectedAddressNotNegative(*addr));
        }
    }
    for (n, f) in &ctx.funs {
        if let Some(v) = free_vars(f).first() {
            return Err(PlugErrorLi::Unresolved(v.clone(), n.clone()));
        }
        let mut calls = Vec::new();
        call_targets(&f.body, &mut calls);
        for c in calls {
            if !funs.contains_key(&c) {
                return Err(PlugErrorLi::UnknownCall(c, n.clone()));
            }
        }
    }
    for (n, f) in &comp.funs {
        if let Some(v) = free_vars(f).first() {
            return Err(PlugErrorLi::Unresolved(v.clone(), n.clone()));
        }
        let mut calls = Vec::new();
        call_targets(&f.body, &mut calls);
        for c in calls {
            let in_comp = comp.funs.iter().any(|(m, _)| m == &c);
            let imported = comp.imports.contains(&c);
            if !in_comp && !imported {
                if funs.contains_key(&c) {
                    return Err(PlugErrorLi::NonImportedCall(c, n.clone()));
                }
                return Err(PlugErrorLi::UnknownCall(c, n.clone()));
            }
        }
    }
    let mut heap = HeapLi::empty();
    for (addr, val) in &comp.h0 {
        heap.insert_fixed(*addr, val.clone());
    }
    let prog = ProgLi {
        funs,
        enclave: comp.enclave.iter().cloned().collect(),
        h0: heap.clone(),
    };
    let init = StateLi {
        heap,
        procs: vec![ProcI {
            stmt: IStmt::Call("main".into(), IExpr::int(0)),
            stack: Vec::new(),
        }],
    };
    Ok((prog, init))
}

// ---------------------------------------------------------------------------
// Small-step semantics
// ---------------------------------------------------------------------------

type ReducedI = Result<(Option<ActionLi>, IStmt, Option<ProcI>), EvalStuckI>;

fn reduce(prog: &ProgLi, heap: &mut HeapLi, stack: &mut Vec<Name>, stmt: &IStmt) -> ReducedI {
    let enc = prog.in_enclave(stack);
    match stmt {
        IStmt::Seq(s1, s2) => {
            if **s1 == IStmt::Skip {
                return Ok((None, (**s2).clone(), None));
            }
            let (label, s1, forked) = reduce(prog, heap, stack, s1)?;
            Ok((label, IStmt::Seq(Box::new(s1), s2.clone()), forked))
        }
        IStmt::Skip => Err(EvalStuckI::NoRet),
        IStmt::Ret => {
            let popped = stack.pop().ok_or(EvalStuckI::RetEmptyStack)?;
            let from = prog.side(&popped).unwrap_or(Side::Context);
            let to = prog.current_side(stack);
            let label = match (from, to) {
                (Side::Component, Side::Context) => Some(Action::ret(heap.snapshot())),
                (Side::Context, Side::Component) => Some(Action::retback(heap.snapshot())),
                _ => None,
            };
            Ok((label, IStmt::Skip, None))
        }
        IStmt::Let(x, e, body) => {
            let v = eval_expr(e, heap, enc)?;
            Ok((None, subst_stmt(body, x, &v), None))
        }
        IStmt::LetNew(x, e, body) => {
            let v = eval_expr(e, heap, enc)?;
            let addr = heap.alloc_new(v);
            Ok((None, subst_stmt(body, x, &IVal::Int(addr)), None))
        }
        IStmt::LetIso(x, e, body) => {
            if !enc {
                return Err(EvalStuckI::IsolateOutsideEnclave);
            }
            let v = eval_expr(e, heap, enc)?;
            let addr = heap.alloc_iso(v);
            Ok((None, subst_stmt(body, x, &IVal::Int(addr)), None))
        }
        IStmt::Ifz(e, t, f) => match eval_expr(e, heap, enc)? {
            IVal::Int(0) => Ok((None, (**t).clone(), None)),
            IVal::Int(_) => Ok((None, (**f).clone(), None)),
            _ => Err(EvalStuckI::NonNumeric),
        },
        IStmt::Call(fname, e) => {
            let v = eval_expr(e, heap, enc)?;
            let (fun, callee_side) = match prog.funs.get(fname) {
                Some((f, s)) => (f.clone(), *s),
                None => return Err(EvalStuckI::UnknownFunction(fname.clone())),
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
        IStmt::Assign(t, e) => {
            let addr = match eval_expr(t, heap, enc)? {
                IVal::Int(n) => n,
                _ => return Err(EvalStuckI::BadAddress),
            };
            let v = eval_expr(e, heap, enc)?;
            heap.write(addr, v, enc)?;
            Ok((None, IStmt::Skip, None))
        }
        IStmt::Destruct(x, e, pat, hit, miss) => {
            let v = eval_expr(e, heap, enc)?;
            match (pat, &v) {
                (Pattern::Nat, IVal::Int(_)) | (Pattern::Pair, IVal::Pair(..)) => {
                    Ok((None, subst_stmt(hit, x, &v), None))
                }
                _ => Ok((None, (**miss).clone(), None)),
            }
        }
        IStmt::Fork(body) => {
            // the child inherits the forking function's identity so enclave
            // code keeps its rights; the closing ret pops that frame
            let child = match stack.last() {
                Some(f) => ProcI {
                    stmt: IStmt::seq((**body).clone(), IStmt::Ret),
                    stack: vec![f.clone()],
                },
                None => ProcI { stmt: (**body).clone(), stack: Vec::new() },
            };
            Ok((None, IStmt::Skip, Some(child)))
        }
        IStmt::Expr(e) => {
            eval_expr(e, heap, enc)?;
            Ok((None, IStmt::Skip, None))
        }
    }
}

/// Attempt one step of process `i`. On success the returned state has the
/// stepped process updated and any forked child appended. Finished processes
/// are left in the soup and cannot step.
pub fn try_step_li(
    prog: &ProgLi,
    state: &StateLi,
    i: usize,
) -> Result<(Option<ActionLi>, StateLi), EvalStuckI> {
    let proc = &state.procs[i];
    if proc.is_done() {
        return Err(EvalStuckI::Finished);
    }
    let mut heap = state.heap.clone();
    let mut stack = proc.stack.clone();
    let (label, stmt, forked) = reduce(prog, &mut heap, &mut stack, &proc.stmt)?;
    let mut procs = state.procs.clone();
    procs[i] = ProcI { stmt, stack };
    if let Some(child) = forked {
        procs.push(child);
    }
    Ok((label, StateLi { heap, procs }))
}

// ---------------------------------------------------------------------------
// Scheduled runs
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub enum RunEndLi {
    /// Every process in the soup finished.
    Terminated { heap: HeapLi },
    /// No live process can step; reasons per stuck process index.
    StuckSoup { reasons: Vec<(usize, EvalStuckI)>, state: StateLi },
    Budget { state: StateLi },
}

#[derive(Clone, Debug)]
pub struct RunLi {
    pub trace: Vec<ActionLi>,
    pub end: RunEndLi,
    pub steps: u64,
}

impl RunLi {
    pub fn final_heap(&self) -> &HeapLi {
        match &self.end {
            RunEndLi::Terminated { heap } => heap,
            RunEndLi::StuckSoup { state, .. } => &state.heap,
            RunEndLi::Budget { state } => &state.heap,
        }
    }

    pub fn stuck_reasons(&self) -> Option<&[(usize, EvalStuckI)]> {
        match &self.end {
            RunEndLi::StuckSoup { reasons, .. } => Some(reasons),
            _ => None,
        }
    }
}

/// Run under a seeded scheduler: at each step the set of steppable processes
/// is computed and one is chosen uniformly. Identical (program, state, seed)
/// triples replay identical runs.
pub fn schedule_run_li(prog: &ProgLi, mut state: StateLi, seed: u64, max_steps: u64) -> RunLi {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::new();
    let mut steps = 0;
    loop {
        if steps >= max_steps {
            return RunLi { trace, end: RunEndLi::Budget { state }, steps };
        }
        let live = state.live_indices();
        if live.is_empty() {
            return RunLi { trace, end: RunEndLi::Terminated { heap: state.heap }, steps };
        }
        let mut candidates = Vec::new();
        let mut stuck = Vec::new();
        for &i in &live {
            match try_step_li(prog, &state, i) {
                Ok(next) => candidates.push(next),
                Err(reason) => stuck.push((i, reason)),
            }
        }
        if candidates.is_empty() {
            return RunLi { trace, end: RunEndLi::StuckSoup { reasons: stuck, state }, steps };
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
    use crate::li::parse::{parse_component_li, parse_context_li};
    use crate::trace::ActKind;

    fn plug(comp: &str, ctx: &str) -> (ProgLi, StateLi) {
        let c = parse_component_li(comp).expect("component parses");
        let a = parse_context_li(ctx).expect("context parses");
        plug_li(&c, &a).expect("plugs")
    }

    const COUNTER: &str = "component {
       heap0 { -1 = 0; }
       enclave bump, get;
       import give;
       fun bump(x) { (-1) := !(-1) + x; ret }
       fun get(x) { call give !(-1) }
     }";

    #[test]
    fn enclave_functions_reach_the_protected_heap() {
        let (prog, init) = plug(
            COUNTER,
            "context {
               fun main(z) { call bump 3; call bump 4; call get 0 }
               fun give(v) { let a = new v in skip }
             }",
        );
        let run = schedule_run_li(&prog, init, 0, 300);
        assert!(matches!(run.end, RunEndLi::Terminated { .. }), "end: {:?}", run.end);
        assert_eq!(run.final_heap().get(-1), Some(&IVal::Int(7)));
        // the callback carried the protected value out
        let cb = run.trace.iter().find(|a| a.kind == ActKind::Callback).unwrap();
        assert_eq!(cb.arg, Some(IVal::Int(7)));
    }

    #[test]
    fn context_probes_of_negative_addresses_refuse_and_preserve_the_heap() {
        for probe in [
            "(0 - 1) := 9",
            "let x = 0 - 1 in x := 9",
            "!(-1)",
            "let p = <0 - 1, 5> in p.1 := p.2",
            "let d = !(0 - 1) in skip",
        ] {
            let (prog, init) = plug(
                COUNTER,
                &format!("context {{ fun main(z) {{ {probe} }} fun give(v) {{ skip }} }}"),
            );
            let before = init.heap.clone();
            let run = schedule_run_li(&prog, init, 0, 100);
            let reasons = run.stuck_reasons().unwrap_or_else(|| {
                panic!("probe `{probe}` did not stick: {:?}", run.end)
            });
            assert_eq!(reasons, &[(0, EvalStuckI::EnclaveViolation(-1))], "probe `{probe}`");
            assert_eq!(run.final_heap(), &before, "probe `{probe}` mutated the heap");
        }
    }

    #[test]
    fn the_gate_is_identity_not_secrecy() {
        // the attacker computes the exact protected address; arithmetic
        // succeeds, the access is what gets refused
        let (prog, init) = plug(
            COUNTER,
            "context {
               fun main(z) { let a = 5 - 6 in let d = !a in skip }
               fun give(v) { skip }
             }",
        );
        let run = schedule_run_li(&prog, init, 0, 100);
        assert_eq!(
            run.stuck_reasons(),
            Some(&[(0, EvalStuckI::EnclaveViolation(-1))][..])
        );
    }

    #[test]
    fn subtraction_is_exact_not_monus() {
        let heap = HeapLi::empty();
        let e = IExpr::Op(
            crate::syntax::Op::Sub,
            Box::new(IExpr::int(2)),
            Box::new(IExpr::int(5)),
        );
        assert_eq!(eval_expr(&e, &heap, false), Ok(IVal::Int(-3)));
    }

    #[test]
    fn new_allocates_upward_from_zero_iso_downward_from_the_heap_floor() {
        let (prog, init) = plug(
            "component {
               heap0 { -1 = 10; -2 = 20; }
               enclave stash;
               import give;
               fun stash(x) { let p = iso x in call give p }
             }",
            "context {
               fun main(z) { let a = new 1 in let b = new 2 in call stash 30 }
               fun give(p) { let c = new p in skip }
             }",
        );
        let run = schedule_run_li(&prog, init, 0, 300);
        assert!(matches!(run.end, RunEndLi::Terminated { .. }), "end: {:?}", run.end);
        let heap = run.final_heap();
        assert_eq!(heap.get(0), Some(&IVal::Int(1)));
        assert_eq!(heap.get(1), Some(&IVal::Int(2)));
        // floor was -2, so the isolated cell landed at -3
        assert_eq!(heap.get(-3), Some(&IVal::Int(30)));
        // and the handle the component chose to reveal is just that integer
        assert_eq!(heap.get(2), Some(&IVal::Int(-3)));
    }

    #[test]
    fn iso_floor_is_minus_one_when_no_negative_cell_exists() {
        let (prog, init) = plug(
            "component { enclave stash; fun stash(x) { let p = iso x in (0 - 1) := !p + 1 } }",
            "context { fun main(z) { call stash 6 } }",
        );
        let run = schedule_run_li(&prog, init, 0, 100);
        assert!(matches!(run.end, RunEndLi::Terminated { .. }), "end: {:?}", run.end);
        assert_eq!(run.final_heap().get(-1), Some(&IVal::Int(7)));
    }

    #[test]
    fn iso_outside_the_enclave_refuses() {
        // context code
        let (prog, init) = plug(
            COUNTER,
            "context { fun main(z) { let p = iso 1 in skip } fun give(v) { skip } }",
        );
        let run = schedule_run_li(&prog, init, 0, 100);
        assert_eq!(
            run.stuck_reasons(),
            Some(&[(0, EvalStuckI::IsolateOutsideEnclave)][..])
        );

        // component function that is not on the enclave list
        let (prog, init) = plug(
            "component {
               heap0 { -1 = 0; }
               enclave real;
               fun real(x) { skip }
               fun fake(x) { let p = iso 1 in skip }
             }",
            "context { fun main(z) { call fake 0 } fun give(v) { skip } }",
        );
        let run = schedule_run_li(&prog, init, 0, 100);
        assert_eq!(
            run.stuck_reasons(),
            Some(&[(0, EvalStuckI::IsolateOutsideEnclave)][..])
        );
    }

    #[test]
    fn isolation_invariant_without_enclave_execution() {
        // the component has enclave functions, but this context never calls
        // them: the negative heap must stay bit-identical at every step
        let (prog, mut state) = plug(
            COUNTER,
            "context {
               fun main(z) {
                 let a = new 3 in {
                   fork { a := !a + 1 };
                   a := !a * 2;
                   (0 - 1) := 99
                 }
               }
               fun give(v) { skip }
             }",
        );
        let frozen = state.heap.negatives();
        for _ in 0..200 {
            let live = state.live_indices();
            let mut advanced = false;
            for i in live {
                if let Ok((_, next)) = try_step_li(&prog, &state, i) {
                    assert_eq!(next.heap.negatives(), frozen);
                    state = next;
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                break;
            }
        }
        assert_eq!(state.heap.negatives(), frozen);
    }

    #[test]
    fn forked_enclave_children_keep_their_rights() {
        let (prog, init) = plug(
            "component {
               heap0 { -1 = 0; }
               enclave spawn;
               fun spawn(x) { fork { (-1) := x }; ret }
             }",
            "context { fun main(z) { call spawn 8 } }",
        );
        let run = schedule_run_li(&prog, init, 0, 200);
        assert!(matches!(run.end, RunEndLi::Terminated { .. }), "end: {:?}", run.end);
        assert_eq!(run.final_heap().get(-1), Some(&IVal::Int(8)));
        // the child's closing ret pops its inherited component frame
        let returns = run.trace.iter().filter(|a| a.kind == ActKind::Return).count();
        assert_eq!(returns, 2);
    }

    #[test]
    fn forked_context_children_stay_outside() {
        let (prog, init) = plug(
            COUNTER,
            "context {
               fun main(z) { fork { (0 - 1) := 5 }; skip }
               fun give(v) { skip }
             }",
        );
        let run = schedule_run_li(&prog, init, 0, 200);
        let reasons = run.stuck_reasons().expect("child probe must stick");
        assert_eq!(reasons.len(), 1);
        assert_eq!(reasons[0].1, EvalStuckI::EnclaveViolation(-1));
        assert_eq!(run.final_heap().get(-1), Some(&IVal::Int(0)));
    }

    #[test]
    fn schedules_replay_bit_for_bit() {
        let comp = "component {
           heap0 { -1 = 0; }
           enclave add;
           fun add(x) { (-1) := !(-1) + x; ret }
         }";
        let ctx = "context {
           fun main(z) { fork { call add 1 }; fork { call add 2 }; call add 4 }
         }";
        for seed in [0u64, 1, 42] {
            let (prog, init) = plug(comp, ctx);
            let a = schedule_run_li(&prog, init.clone(), seed, 500);
            let b = schedule_run_li(&prog, init, seed, 500);
            assert_eq!(a.steps, b.steps);
            assert_eq!(a.trace, b.trace);
            assert_eq!(a.final_heap(), b.final_heap());
            assert_eq!(a.final_heap().get(-1), Some(&IVal::Int(7)));
        }
    }

    #[test]
    fn plug_rejects_malformed_protection() {
        let ctx = parse_context_li("context { fun main(z) { skip } }").unwrap();

        let comp = ComponentLi {
            h0: vec![(0, IVal::Int(1))],
            enclave: vec![],
            imports: vec![],
            funs: vec![("f".into(), IFun { param: "x".into(), body: IStmt::Ret })],
        };
        assert_eq!(
            plug_li(&comp, &ctx).unwrap_err(),
            PlugErrorLi::ProtectedAddressNotNegative(0)
        );

        let comp = ComponentLi {
            h0: vec![(-1, IVal::Int(1))],
            enclave: vec!["ghost".into()],
            imports: vec![],
            funs: vec![("f".into(), IFun { param: "x".into(), body: IStmt::Ret })],
        };
        assert_eq!(
            plug_li(&comp, &ctx).unwrap_err(),
            PlugErrorLi::EnclaveNotAFunction("ghost".into())
        );
    }

    #[test]
    fn destruct_sorts_integers_and_pairs() {
        let (prog, init) = plug(
            "component {
               heap0 { -1 = 0; }
               enclave classify;
               fun classify(x) {
                 destruct n = x as nat in { (-1) := !(-1) * 100 + n }
                 else { destruct p = x as pair in { (-1) := !(-1) * 100 + p.1 + p.2 } else { skip } }
               }
             }",
            "context { fun main(z) { call classify 0 - 5; call classify <2, 4> } }",
        );
        let run = schedule_run_li(&prog, init, 0, 300);
        assert!(matches!(run.end, RunEndLi::Terminated { .. }), "end: {:?}", run.end);
        // -5 is an integer: the nat shape covers all integers here
        assert_eq!(run.final_heap().get(-1), Some(&IVal::Int(-494)));
    }
}
