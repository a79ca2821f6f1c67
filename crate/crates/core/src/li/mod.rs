//! Enclave-isolation target: integer addresses, one enclave below zero,
//! access gated by the identity of the currently executing function.

pub mod ast;
pub mod parse;
pub mod sem;

pub use ast::{
    alpha_eq_component, alpha_eq_fun, alpha_eq_stmt, ComponentLi, ContextLi, IExpr, IFun,
    IStmt, IVal,
};
pub use parse::{parse_component_li, parse_context_li, parse_li, ParsedLi};
pub use sem::{
    plug_li, schedule_run_li, try_step_li, ActionLi, EvalStuckI, HeapLi, ICell, PlugErrorLi,
    ProcI, ProgLi, RunEndLi, RunLi, StateLi, TraceLi,
};
