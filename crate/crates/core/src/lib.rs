//! Secure-compilation workbench.
//!
//! Five small imperative languages (an untyped source, a capability target,
//! a typed concurrent source, a concurrent capability target, and an enclave
//! target), three compilers between them, heap-guarded safety monitors,
//! cross-language relations, trace-based backtranslation of target attackers,
//! and a fuzzing harness that exercises the whole stack.

pub mod la;
pub mod lc;
pub mod lex;
pub mod li;
pub mod lp;
pub mod lu;
pub mod syntax;
pub mod trace;

pub use syntax::{CapId, Cmp, LocId, Name, Op};
