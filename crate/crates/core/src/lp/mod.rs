//! The sequential capability target: numeric addresses, tagged cells, and
//! witness-checked reads and writes.

pub mod ast;
pub mod parse;
pub mod sem;

pub use ast::{ComponentLp, ContextLp, PExpr, PFun, PStmt, PVal, Tag};
pub use parse::{parse_component_lp, parse_context_lp, parse_lp, ParsedLp};
pub use sem::{plug_lp, reach_lp, run_lp, step_lp, ActionLp, PHeap, ProgLp, RunLp, StateLp};
