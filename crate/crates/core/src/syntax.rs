//! Atoms shared by every language: names, operators, location and capability
//! identifiers.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Function, variable, and heap-cell names.
pub type Name = String;

/// Abstract location identifier (untyped and typed source languages).
///
/// Locations are opaque serials: equality is identity and programs cannot
/// compute on them. Serials are assigned at plug time and grow monotonically
/// with each allocation.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LocId(pub u64);

impl fmt::Debug for LocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

impl fmt::Display for LocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

/// Capability token (capability-machine targets).
///
/// Tokens are unforgeable opaque serials; the only sources are the hide rule,
/// atomic allocation, and reading a token out of the heap. Serial 0 is the
/// root capability.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CapId(pub u64);

/// The root capability protecting address 0.
pub const KROOT: CapId = CapId(0);

impl fmt::Debug for CapId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            write!(f, "kroot")
        } else {
            write!(f, "k{}", self.0)
        }
    }
}

impl fmt::Display for CapId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Arithmetic operators. Subtraction is natural-number monus (saturating at
/// zero) in the languages that compute on naturals; the enclave target
/// computes on integers and subtracts exactly.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Op {
    Add,
    Sub,
    Mul,
}

impl Op {
    pub fn apply(self, a: u64, b: u64) -> u64 {
        match self {
            Op::Add => a.wrapping_add(b),
            Op::Sub => a.saturating_sub(b),
            Op::Mul => a.wrapping_mul(b),
        }
    }

    /// Integer arithmetic: subtraction is exact, so negative addresses are
    /// computable.
    pub fn apply_int(self, a: i64, b: i64) -> i64 {
        match self {
            Op::Add => a.wrapping_add(b),
            Op::Sub => a.wrapping_sub(b),
            Op::Mul => a.wrapping_mul(b),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
        }
    }
}

/// Comparison operators. They produce booleans in the source languages and
/// 0 (true) / 1 (false) in the numeric targets.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Cmp {
    Eq,
    Lt,
    Gt,
}

impl Cmp {
    pub fn apply(self, a: u64, b: u64) -> bool {
        match self {
            Cmp::Eq => a == b,
            Cmp::Lt => a < b,
            Cmp::Gt => a > b,
        }
    }

    pub fn apply_int(self, a: i64, b: i64) -> bool {
        match self {
            Cmp::Eq => a == b,
            Cmp::Lt => a < b,
            Cmp::Gt => a > b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Eq => "==",
            Cmp::Lt => "<",
            Cmp::Gt => ">",
        }
    }
}

/// Which side of the component/context boundary a function was defined on.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Side {
    Component,
    Context,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Component => Side::Context,
            Side::Context => Side::Component,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monus_saturates() {
        assert_eq!(Op::Sub.apply(2, 5), 0);
        assert_eq!(Op::Sub.apply(5, 2), 3);
    }

    #[test]
    fn cap_zero_prints_as_root() {
        assert_eq!(format!("{}", KROOT), "kroot");
        assert_eq!(format!("{}", CapId(3)), "k3");
    }
}
