//! The untyped source language: locations are opaque, the component guards a
//! single root cell, contexts may declare their own starting heap.

pub mod ast;
pub mod parse;
pub mod sem;

pub use ast::{ComponentLu, ContextLu, UExpr, UFun, UStmt, UVal};
pub use parse::{parse_component_lu, parse_context_lu, parse_lu, ParsedLu};
pub use sem::{plug_lu, run_lu, step_lu, ActionLu, ProgLu, RunLu, StateLu, UHeap};
