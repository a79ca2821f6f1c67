//! Actions and traces.
//!
//! An action records a boundary crossing: a context-to-component call (`?`),
//! a component-to-context callback (`!`), a component return (`!`), or a
//! context returnback (`?`). Calls and callbacks carry the function name and
//! argument; returns carry neither. Every action snapshots the full heap.

use crate::syntax::{CapId, Name};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ActKind {
    Call,
    Callback,
    Return,
    Returnback,
}

/// `?` marks input to the component (context-initiated), `!` output.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Dir {
    In,
    Out,
}

impl ActKind {
    pub fn dir(self) -> Dir {
        match self {
            ActKind::Call | ActKind::Returnback => Dir::In,
            ActKind::Callback | ActKind::Return => Dir::Out,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ActKind::Call => "call",
            ActKind::Callback => "callback",
            ActKind::Return => "return",
            ActKind::Returnback => "returnback",
        }
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dir::In => write!(f, "?"),
            Dir::Out => write!(f, "!"),
        }
    }
}

/// An action over value type `V` with heap-snapshot cells `C`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Action<V, C> {
    pub kind: ActKind,
    /// Present for call/callback.
    pub fname: Option<Name>,
    /// Present for call/callback.
    pub arg: Option<V>,
    pub heap: Vec<C>,
}

impl<V, C> Action<V, C> {
    pub fn call(fname: Name, arg: V, heap: Vec<C>) -> Self {
        Action { kind: ActKind::Call, fname: Some(fname), arg: Some(arg), heap }
    }

    pub fn callback(fname: Name, arg: V, heap: Vec<C>) -> Self {
        Action { kind: ActKind::Callback, fname: Some(fname), arg: Some(arg), heap }
    }

    pub fn ret(heap: Vec<C>) -> Self {
        Action { kind: ActKind::Return, fname: None, arg: None, heap }
    }

    pub fn retback(heap: Vec<C>) -> Self {
        Action { kind: ActKind::Returnback, fname: None, arg: None, heap }
    }

    pub fn dir(&self) -> Dir {
        self.kind.dir()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceShapeError {
    #[error("trace must start with a ? action, starts with {0}")]
    StartsWithOutput(&'static str),
    #[error("actions {0} and {1} have the same direction")]
    NotAlternating(usize, usize),
}

/// Well-formed traces alternate `?` and `!`, starting with `?`.
pub fn check_alternation<V, C>(trace: &[Action<V, C>]) -> Result<(), TraceShapeError> {
    if let Some(first) = trace.first() {
        if first.dir() != Dir::In {
            return Err(TraceShapeError::StartsWithOutput(first.kind.label()));
        }
    }
    for i in 1..trace.len() {
        if trace[i].dir() == trace[i - 1].dir() {
            return Err(TraceShapeError::NotAlternating(i - 1, i));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Capability-target traces and their JSON form
// ---------------------------------------------------------------------------

use crate::lp::ast::{PVal, Tag};

/// A heap cell in a capability-machine snapshot.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PCell {
    pub addr: u64,
    pub val: PVal,
    pub tag: Tag,
}

pub type ActionLp = Action<PVal, PCell>;
pub type TraceLp = Vec<ActionLp>;

#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(rename_all = "lowercase")]
enum ValJson {
    Nat(u64),
    Cap(u64),
    Pair(Box<ValJson>, Box<ValJson>),
}

impl From<&PVal> for ValJson {
    fn from(v: &PVal) -> Self {
        match v {
            PVal::Nat(n) => ValJson::Nat(*n),
            PVal::Cap(k) => ValJson::Cap(k.0),
            PVal::Pair(a, b) => {
                ValJson::Pair(Box::new(ValJson::from(&**a)), Box::new(ValJson::from(&**b)))
            }
        }
    }
}

impl From<&ValJson> for PVal {
    fn from(v: &ValJson) -> Self {
        match v {
            ValJson::Nat(n) => PVal::Nat(*n),
            ValJson::Cap(k) => PVal::Cap(CapId(*k)),
            ValJson::Pair(a, b) => PVal::pair(PVal::from(&**a), PVal::from(&**b)),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(rename_all = "lowercase")]
enum TagJson {
    Bot,
    Cap(u64),
}

#[derive(Serialize, Deserialize)]
struct CellJson {
    addr: u64,
    val: ValJson,
    tag: TagJson,
}

#[derive(Serialize, Deserialize)]
struct ActionJson {
    kind: String,
    dir: String,
    #[serde(rename = "fn", skip_serializing_if = "Option::is_none")]
    fname: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    val: Option<ValJson>,
    heap: Vec<CellJson>,
}

#[derive(Serialize, Deserialize)]
struct TraceJson {
    actions: Vec<ActionJson>,
}

#[derive(Debug, Error)]
pub enum TraceJsonError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("action {index}: unknown kind `{kind}`")]
    UnknownKind { index: usize, kind: String },
    #[error("action {index}: direction `{dir}` does not match kind `{kind}`")]
    DirMismatch { index: usize, kind: String, dir: String },
    #[error("action {index}: a {kind} action must {requirement}")]
    BadFields { index: usize, kind: String, requirement: &'static str },
}

pub fn trace_to_json(trace: &[ActionLp]) -> String {
    let actions = trace
        .iter()
        .map(|a| ActionJson {
            kind: a.kind.label().to_string(),
            dir: a.dir().to_string(),
            fname: a.fname.clone(),
            val: a.arg.as_ref().map(ValJson::from),
            heap: a
                .heap
                .iter()
                .map(|c| CellJson {
                    addr: c.addr,
                    val: ValJson::from(&c.val),
                    tag: match c.tag {
                        Tag::Bot => TagJson::Bot,
                        Tag::Cap(k) => TagJson::Cap(k.0),
                    },
                })
                .collect(),
        })
        .collect();
    serde_json::to_string_pretty(&TraceJson { actions }).expect("trace serialization")
}

pub fn trace_from_json(src: &str) -> Result<TraceLp, TraceJsonError> {
    let parsed: TraceJson = serde_json::from_str(src)?;
    let mut out = Vec::new();
    for (index, a) in parsed.actions.into_iter().enumerate() {
        let kind = match a.kind.as_str() {
            "call" => ActKind::Call,
            "callback" => ActKind::Callback,
            "return" => ActKind::Return,
            "returnback" => ActKind::Returnback,
            _ => return Err(TraceJsonError::UnknownKind { index, kind: a.kind }),
        };
        let expect_dir = kind.dir().to_string();
        if a.dir != expect_dir {
            return Err(TraceJsonError::DirMismatch { index, kind: a.kind, dir: a.dir });
        }
        let has_name = a.fname.is_some() && a.val.is_some();
        match kind {
            ActKind::Call | ActKind::Callback if !has_name => {
                return Err(TraceJsonError::BadFields {
                    index,
                    kind: a.kind,
                    requirement: "carry fn and val",
                })
            }
            ActKind::Return | ActKind::Returnback if a.fname.is_some() || a.val.is_some() => {
                return Err(TraceJsonError::BadFields {
                    index,
                    kind: a.kind,
                    requirement: "carry neither fn nor val",
                })
            }
            _ => {}
        }
        let heap = a
            .heap
            .into_iter()
            .map(|c| PCell {
                addr: c.addr,
                val: PVal::from(&c.val),
                tag: match c.tag {
                    TagJson::Bot => Tag::Bot,
                    TagJson::Cap(k) => Tag::Cap(CapId(k)),
                },
            })
            .collect();
        out.push(Action { kind, fname: a.fname, arg: a.val.as_ref().map(PVal::from), heap });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::KROOT;

    fn sample() -> TraceLp {
        vec![
            Action::call(
                "f".into(),
                PVal::Nat(0),
                vec![
                    PCell { addr: 1, val: PVal::Nat(4), tag: Tag::Bot },
                    PCell { addr: 2, val: PVal::Nat(3), tag: Tag::Bot },
                ],
            ),
            Action::ret(vec![PCell {
                addr: 3,
                val: PVal::pair(PVal::Nat(3), PVal::Cap(KROOT)),
                tag: Tag::Cap(CapId(1)),
            }]),
        ]
    }

    #[test]
    fn json_round_trip() {
        let t = sample();
        let json = trace_to_json(&t);
        let back = trace_from_json(&json).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn json_shape_matches_schema() {
        let json = trace_to_json(&sample());
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let a0 = &v["actions"][0];
        assert_eq!(a0["kind"], "call");
        assert_eq!(a0["dir"], "?");
        assert_eq!(a0["fn"], "f");
        assert_eq!(a0["val"], serde_json::json!({"nat": 0}));
        assert_eq!(a0["heap"][0]["addr"], 1);
        assert_eq!(a0["heap"][0]["val"], serde_json::json!({"nat": 4}));
        assert_eq!(a0["heap"][0]["tag"], "bot");
        let a1 = &v["actions"][1];
        assert_eq!(a1["kind"], "return");
        assert_eq!(a1["dir"], "!");
        assert!(a1.get("fn").is_none());
        assert_eq!(a1["heap"][0]["tag"], serde_json::json!({"cap": 1}));
    }

    #[test]
    fn alternation_check() {
        let t = sample();
        check_alternation(&t).unwrap();
        let bad = vec![t[1].clone()];
        assert!(check_alternation(&bad).is_err());
        let double = vec![t[0].clone(), t[0].clone()];
        assert!(check_alternation(&double).is_err());
    }

    #[test]
    fn mismatched_dir_rejected() {
        let json = r#"{"actions":[{"kind":"call","dir":"!","fn":"f","val":{"nat":0},"heap":[]}]}"#;
        assert!(matches!(trace_from_json(json), Err(TraceJsonError::DirMismatch { .. })));
    }
}
