//! Heap patterns: the guard language of monitor transitions.
//!
//! A pattern is a finite conjunction of constraints over paths. A path
//! starts at one of the monitored root cells (by position, `root` or
//! `root[i]`) and walks `.1` / `.2` projections and `.val` dereferences. A
//! constraint is a shape test (`is nat|bool|pair|loc`), or a comparison
//! against a literal or another path.
//!
//! Patterns evaluate over a `MonView`: a language-neutral restriction of a
//! heap in which locations have been canonicalized to opaque keys. Patterns
//! have no syntax for concrete addresses or capability tokens, and
//! comparisons refuse values containing locations, so a pattern's verdict is
//! invariant under bijective renaming of locations by construction.

use crate::lex::{lex, Cursor, ParseError, Tok};
use std::collections::BTreeMap;
use std::fmt;

/// Monitor-view values. `Loc` keys are meaningful only inside one view;
/// `Cap` marks an opaque token (target languages), unobservable to patterns
/// beyond failing every test.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum MVal {
    Num(i128),
    Bool(bool),
    Unit,
    Pair(Box<MVal>, Box<MVal>),
    Loc(u64),
    Cap(u64),
}

impl MVal {
    pub fn pair(a: MVal, b: MVal) -> MVal {
        MVal::Pair(Box::new(a), Box::new(b))
    }

    fn loc_free(&self) -> bool {
        match self {
            MVal::Loc(_) | MVal::Cap(_) => false,
            MVal::Pair(a, b) => a.loc_free() && b.loc_free(),
            _ => true,
        }
    }
}

/// A restricted heap, canonicalized for pattern evaluation: the monitored
/// root cells in descriptor order, and every in-view cell keyed opaquely.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct MonView {
    pub roots: Vec<u64>,
    pub cells: BTreeMap<u64, MVal>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PathStep {
    Proj1,
    Proj2,
    Deref,
}

/// `root[i]` followed by steps. The bare root denotes the cell's location,
/// so `root.val` is the stored value.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Path {
    pub root: usize,
    pub steps: Vec<PathStep>,
}

impl Path {
    pub fn root(i: usize) -> Path {
        Path { root: i, steps: Vec::new() }
    }

    pub fn step(mut self, s: PathStep) -> Path {
        self.steps.push(s);
        self
    }

    pub fn val(self) -> Path {
        self.step(PathStep::Deref)
    }

    pub fn proj(self, i: u8) -> Path {
        self.step(if i == 1 { PathStep::Proj1 } else { PathStep::Proj2 })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Shape {
    Nat,
    Bool,
    Pair,
    Loc,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CmpOp {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

/// Literal values for exact tests. Locations and tokens have no literal
/// form.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum PatLit {
    Num(i128),
    Bool(bool),
    Unit,
    Pair(Box<PatLit>, Box<PatLit>),
}

impl PatLit {
    pub fn pair(a: PatLit, b: PatLit) -> PatLit {
        PatLit::Pair(Box::new(a), Box::new(b))
    }

    fn to_mval(&self) -> MVal {
        match self {
            PatLit::Num(n) => MVal::Num(*n),
            PatLit::Bool(b) => MVal::Bool(*b),
            PatLit::Unit => MVal::Unit,
            PatLit::Pair(a, b) => MVal::pair(a.to_mval(), b.to_mval()),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Rhs {
    Lit(PatLit),
    Path(Path),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Constraint {
    Is(Path, Shape),
    Cmp(Path, CmpOp, Rhs),
}

/// A conjunction of constraints; the empty conjunction matches every view.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Pattern {
    pub all: Vec<Constraint>,
}

impl Pattern {
    pub fn always() -> Pattern {
        Pattern::default()
    }

    pub fn of(all: Vec<Constraint>) -> Pattern {
        Pattern { all }
    }

    /// The largest root index any path mentions, if one does.
    pub fn max_root(&self) -> Option<usize> {
        let mut m = None;
        let mut see = |p: &Path| m = Some(m.map_or(p.root, |x: usize| x.max(p.root)));
        for c in &self.all {
            match c {
                Constraint::Is(p, _) => see(p),
                Constraint::Cmp(p, _, rhs) => {
                    see(p);
                    if let Rhs::Path(q) = rhs {
                        see(q);
                    }
                }
            }
        }
        m
    }

    pub fn matches(&self, view: &MonView) -> bool {
        self.all.iter().all(|c| check(c, view))
    }
}

/// Walk a path through the view. `None` when the path falls off: missing
/// root, projection of a non-pair, dereference of a non-location or of a
/// cell outside the view.
pub fn eval_path(path: &Path, view: &MonView) -> Option<MVal> {
    let mut v = MVal::Loc(*view.roots.get(path.root)?);
    for s in &path.steps {
        v = match (s, v) {
            (PathStep::Proj1, MVal::Pair(a, _)) => *a,
            (PathStep::Proj2, MVal::Pair(_, b)) => *b,
            (PathStep::Deref, MVal::Loc(k)) => view.cells.get(&k)?.clone(),
            _ => return None,
        };
    }
    Some(v)
}

fn check(c: &Constraint, view: &MonView) -> bool {
    match c {
        Constraint::Is(p, shape) => match (eval_path(p, view), shape) {
            (Some(MVal::Num(_)), Shape::Nat) => true,
            (Some(MVal::Bool(_)), Shape::Bool) => true,
            (Some(MVal::Pair(..)), Shape::Pair) => true,
            (Some(MVal::Loc(_)), Shape::Loc) => true,
            _ => false,
        },
        Constraint::Cmp(p, op, rhs) => {
            let Some(a) = eval_path(p, view) else { return false };
            let b = match rhs {
                Rhs::Lit(l) => l.to_mval(),
                Rhs::Path(q) => match eval_path(q, view) {
                    Some(v) => v,
                    None => return false,
                },
            };
            match op {
                // exact test on location-free values only
                CmpOp::Eq => a.loc_free() && b.loc_free() && a == b,
                _ => match (a, b) {
                    (MVal::Num(x), MVal::Num(y)) => match op {
                        CmpOp::Lt => x < y,
                        CmpOp::Le => x <= y,
                        CmpOp::Gt => x > y,
                        CmpOp::Ge => x >= y,
                        CmpOp::Eq => unreachable!(),
                    },
                    _ => false,
                },
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Text form
// ---------------------------------------------------------------------------

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.root == 0 {
            write!(f, "root")?;
        } else {
            write!(f, "root[{}]", self.root)?;
        }
        for s in &self.steps {
            match s {
                PathStep::Proj1 => write!(f, ".1")?,
                PathStep::Proj2 => write!(f, ".2")?,
                PathStep::Deref => write!(f, ".val")?,
            }
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Shape::Nat => "nat",
            Shape::Bool => "bool",
            Shape::Pair => "pair",
            Shape::Loc => "loc",
        };
        write!(f, "{s}")
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CmpOp::Eq => "==",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        };
        write!(f, "{s}")
    }
}

impl fmt::Display for PatLit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatLit::Num(n) => write!(f, "{n}"),
            PatLit::Bool(true) => write!(f, "true"),
            PatLit::Bool(false) => write!(f, "false"),
            PatLit::Unit => write!(f, "unit"),
            PatLit::Pair(a, b) => write!(f, "<{a}, {b}>"),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Is(p, s) => write!(f, "{p} is {s}"),
            Constraint::Cmp(p, op, Rhs::Lit(l)) => write!(f, "{p} {op} {l}"),
            Constraint::Cmp(p, op, Rhs::Path(q)) => write!(f, "{p} {op} {q}"),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.all.is_empty() {
            return write!(f, "true");
        }
        for (i, c) in self.all.iter().enumerate() {
            if i > 0 {
                write!(f, " && ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

pub fn parse_pattern(src: &str) -> Result<Pattern, ParseError> {
    let mut cur = Cursor::new(lex(src)?);
    let p = parse_pattern_at(&mut cur)?;
    cur.expect_end()?;
    Ok(p)
}

/// Parse a guard: `true` for the empty conjunction, otherwise constraints
/// joined with `&&`.
pub(crate) fn parse_pattern_at(cur: &mut Cursor) -> Result<Pattern, ParseError> {
    if cur.eat_kw("true") {
        return Ok(Pattern::always());
    }
    let mut all = vec![parse_constraint(cur)?];
    while cur.eat(Tok::AndAnd) {
        all.push(parse_constraint(cur)?);
    }
    Ok(Pattern { all })
}

fn parse_constraint(cur: &mut Cursor) -> Result<Constraint, ParseError> {
    let p = parse_path(cur)?;
    if cur.eat_kw("is") {
        let shape = if cur.eat_kw("nat") {
            Shape::Nat
        } else if cur.eat_kw("bool") {
            Shape::Bool
        } else if cur.eat_kw("pair") {
            Shape::Pair
        } else if cur.eat_kw("loc") {
            Shape::Loc
        } else {
            return Err(cur.error("expected `nat`, `bool`, `pair`, or `loc`"));
        };
        return Ok(Constraint::Is(p, shape));
    }
    let op = match cur.next() {
        Some(Tok::EqEq) => CmpOp::Eq,
        Some(Tok::Lt) => {
            if cur.eat(Tok::Eq) {
                CmpOp::Le
            } else {
                CmpOp::Lt
            }
        }
        Some(Tok::Gt) => {
            if cur.eat(Tok::Eq) {
                CmpOp::Ge
            } else {
                CmpOp::Gt
            }
        }
        Some(t) => {
            return Err(ParseError::Unexpected {
                expected: "`is` or a comparison".into(),
                found: t.describe(),
                line: cur.line(),
            })
        }
        None => return Err(ParseError::Eof { expected: "`is` or a comparison".into() }),
    };
    let rhs = if cur.peek_kw("root") {
        Rhs::Path(parse_path(cur)?)
    } else {
        Rhs::Lit(parse_lit(cur)?)
    };
    Ok(Constraint::Cmp(p, op, rhs))
}

fn parse_path(cur: &mut Cursor) -> Result<Path, ParseError> {
    cur.expect_kw("root")?;
    let root = if cur.eat(Tok::LBracket) {
        let i = cur.nat()?;
        cur.expect(Tok::RBracket)?;
        i as usize
    } else {
        0
    };
    let mut steps = Vec::new();
    while cur.eat(Tok::Dot) {
        match cur.peek() {
            Some(Tok::Nat(1)) => {
                cur.next();
                steps.push(PathStep::Proj1);
            }
            Some(Tok::Nat(2)) => {
                cur.next();
                steps.push(PathStep::Proj2);
            }
            Some(Tok::Ident(s)) if s == "val" => {
                cur.next();
                steps.push(PathStep::Deref);
            }
            Some(t) => {
                return Err(ParseError::Unexpected {
                    expected: "`1`, `2`, or `val`".into(),
                    found: t.describe(),
                    line: cur.line(),
                })
            }
            None => return Err(ParseError::Eof { expected: "`1`, `2`, or `val`".into() }),
        }
    }
    Ok(Path { root, steps })
}

fn parse_lit(cur: &mut Cursor) -> Result<PatLit, ParseError> {
    if cur.eat_kw("true") {
        return Ok(PatLit::Bool(true));
    }
    if cur.eat_kw("false") {
        return Ok(PatLit::Bool(false));
    }
    if cur.eat_kw("unit") {
        return Ok(PatLit::Unit);
    }
    match cur.peek() {
        Some(Tok::Nat(_)) => Ok(PatLit::Num(cur.nat()? as i128)),
        Some(Tok::Minus) => {
            cur.next();
            Ok(PatLit::Num(-(cur.nat()? as i128)))
        }
        Some(Tok::Lt) => {
            cur.next();
            let a = parse_lit(cur)?;
            cur.expect(Tok::Comma)?;
            let b = parse_lit(cur)?;
            cur.expect(Tok::Gt)?;
            Ok(PatLit::pair(a, b))
        }
        Some(t) => Err(ParseError::Unexpected {
            expected: "a literal".into(),
            found: t.describe(),
            line: cur.line(),
        }),
        None => Err(ParseError::Eof { expected: "a literal".into() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// root[0] -> cell 10 holding <5, loc 11>; cell 11 holding true;
    /// root[1] -> cell 12 holding -2
    fn view() -> MonView {
        MonView {
            roots: vec![10, 12],
            cells: BTreeMap::from([
                (10, MVal::pair(MVal::Num(5), MVal::Loc(11))),
                (11, MVal::Bool(true)),
                (12, MVal::Num(-2)),
            ]),
        }
    }

    fn matches(src: &str) -> bool {
        parse_pattern(src).expect("parses").matches(&view())
    }

    #[test]
    fn paths_walk_projections_and_dereferences() {
        assert!(matches("root.val is pair"));
        assert!(matches("root.val.1 == 5"));
        assert!(matches("root.val.2 is loc"));
        assert!(matches("root.val.2.val == true"));
        assert!(matches("root[1].val == -2"));
        assert!(!matches("root.val.1 is bool"));
        assert!(!matches("root.val.2 == true"), "deref is explicit, not implicit");
    }

    #[test]
    fn falling_off_a_path_never_matches() {
        assert!(!matches("root.val.1.val is nat"), "deref of a number");
        assert!(!matches("root.val.1.1 is nat"), "projection of a number");
        assert!(!matches("root[2].val is nat"), "no such root");
    }

    #[test]
    fn numeric_comparisons_are_ordered_and_typed() {
        assert!(matches("root.val.1 > 4"));
        assert!(matches("root.val.1 <= 5"));
        assert!(matches("root[1].val < 0"));
        assert!(matches("root.val.1 >= root.val.1"));
        assert!(matches("root[1].val < root.val.1"));
        assert!(!matches("root.val.2.val < 1"), "booleans have no order");
        assert!(!matches("root.val < 9"), "pairs have no order");
    }

    #[test]
    fn exact_tests_refuse_locations() {
        // the root itself is a location and the pair contains one
        assert!(!matches("root == 10"));
        assert!(!matches("root.val == <5, 11>"));
        // location-free pairs compare structurally
        let v = MonView {
            roots: vec![0],
            cells: BTreeMap::from([(0, MVal::pair(MVal::Num(1), MVal::Bool(false)))]),
        };
        let p = parse_pattern("root.val == <1, false>").unwrap();
        assert!(p.matches(&v));
    }

    #[test]
    fn empty_conjunction_always_matches() {
        let p = parse_pattern("true").unwrap();
        assert!(p.matches(&view()));
        assert!(p.matches(&MonView::default()));
        assert_eq!(p.to_string(), "true");
    }

    #[test]
    fn guards_round_trip() {
        for src in [
            "true",
            "root.val >= 0",
            "root is loc && root.val is pair && root.val.2.val == true",
            "root[1].val == -2 && root.val.1 < root[1].val",
            "root.val == <1, <true, unit>>",
        ] {
            let p = parse_pattern(src).expect("parses");
            let printed = p.to_string();
            let again = parse_pattern(&printed)
                .unwrap_or_else(|e| panic!("reparse failed: {e}\n{printed}"));
            assert_eq!(p, again, "round trip changed:\n{printed}");
            assert_eq!(printed, src, "canonical form drifted");
        }
    }

    #[test]
    fn verdicts_ignore_location_keys() {
        // the same view under a different location naming
        let renamed = MonView {
            roots: vec![70, 71],
            cells: BTreeMap::from([
                (70, MVal::pair(MVal::Num(5), MVal::Loc(72))),
                (72, MVal::Bool(true)),
                (71, MVal::Num(-2)),
            ]),
        };
        for src in [
            "root.val is pair",
            "root.val.2.val == true",
            "root[1].val < 0",
            "root == 10",
            "root.val.2 is loc",
        ] {
            let p = parse_pattern(src).unwrap();
            assert_eq!(p.matches(&view()), p.matches(&renamed), "guard `{src}`");
        }
    }

    #[test]
    fn max_root_spans_both_sides_of_a_comparison() {
        let p = parse_pattern("root.val < root[3].val").unwrap();
        assert_eq!(p.max_root(), Some(3));
        assert_eq!(parse_pattern("true").unwrap().max_root(), None);
    }
}
