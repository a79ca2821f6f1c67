//! Concurrent capability target: the capability machine extended with
//! `fork`, atomic sealed allocation (`letatom`), and `destruct` shape tests.
//! Components carry their protected initial heap; capability tokens are
//! named by that heap block and resolved to literals at plug time.

pub mod ast;
pub mod parse;
pub mod sem;

pub use ast::{
    alpha_eq_component, alpha_eq_fun, alpha_eq_stmt, CFun, CStmt, ComponentLc, ContextLc,
    H0Cell, Pattern,
};
pub use parse::{parse_component_lc, parse_context_lc, parse_lc, ParsedLc};
pub use sem::{
    plug_lc, schedule_run_lc, try_step_lc, ProcC, ProgLc, RunEndLc, RunLc, StateLc,
};
