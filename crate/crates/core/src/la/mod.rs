//! The typed, concurrent source language: a statement language with
//! first-class dynamic sealing of trust (endorsement), typed heap cells, and
//! fork-based concurrency. Components declare a trusted store and are
//! statically typed; contexts are attacker code typed at `UN` throughout.

pub mod ast;
pub mod parse;
pub mod sem;
pub mod types;

pub use ast::{AExpr, AFun, AStmt, AVal, ComponentLa, ContextLa, TyA};
pub use parse::{parse_component_la, parse_context_la, parse_la, ParsedLa};
pub use sem::{
    heap_conforms, plug_la, schedule_run, try_step_la, ACell, ActionLa, AHeap, ProcA, ProgLa,
    RunEndLa, RunLa, StateLa,
};
pub use types::{typecheck_la, typecheck_un, val_has_type, TypeError};
