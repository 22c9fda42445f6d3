//! Runs: immutable progressions produced by putting a program into effect.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::compile::ObjectSequence;
use crate::inseq::{render_program, InstructionSequence};
use crate::inseqex::Inseqex;
use crate::mechanism::MechanismDescriptor;
use crate::service::{Method, ServiceFamily, ServiceKind};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RunId(String);

impl RunId {
    pub fn fresh() -> RunId {
        RunId(format!("run-{}", uuid::Uuid::new_v4().simple()))
    }

    pub fn new(id: impl Into<String>) -> RunId {
        RunId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RunId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The program a run puts into effect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subject {
    Source(InstructionSequence),
    Object(ObjectSequence),
    Expression(Inseqex),
}

impl Subject {
    pub fn render(&self) -> String {
        match self {
            Subject::Source(s) => render_program(s),
            Subject::Object(o) => o.render(),
            Subject::Expression(e) => e.to_string(),
        }
    }

    pub fn as_source(&self) -> Option<&InstructionSequence> {
        match self {
            Subject::Source(s) => Some(s),
            _ => None,
        }
    }
}

/// One basic action as observed in a progression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionRecord {
    pub focus: Arc<str>,
    pub method: Method,
    pub reply: bool,
    pub kind: ServiceKind,
}

impl fmt::Display for ActionRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{} -> {}", self.focus, self.method, self.reply)
    }
}

/// Window of loaded positions, inclusive on both ends.
pub type Window = (u64, u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunEvent {
    Action { index: u64, action: ActionRecord },
    PageSwap { index: u64, from: Window, to: Window },
    Note { index: u64, tag: String },
}

impl RunEvent {
    pub fn index(&self) -> u64 {
        match self {
            RunEvent::Action { index, .. }
            | RunEvent::PageSwap { index, .. }
            | RunEvent::Note { index, .. } => *index,
        }
    }

    pub fn action(&self) -> Option<&ActionRecord> {
        match self {
            RunEvent::Action { action, .. } => Some(action),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceCause {
    Fuel,
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TerminationStatus {
    /// `Some` only from `!t` / `!f`.
    Terminated(Option<bool>),
    Divergence(DivergenceCause),
    Fault(String),
}

impl TerminationStatus {
    pub fn is_fault(&self) -> bool {
        matches!(self, TerminationStatus::Fault(_))
    }
}

impl fmt::Display for TerminationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminationStatus::Terminated(None) => f.write_str("terminated"),
            TerminationStatus::Terminated(Some(b)) => write!(f, "terminated({b})"),
            TerminationStatus::Divergence(c) => write!(f, "divergence({c:?})"),
            TerminationStatus::Fault(r) => write!(f, "fault({r})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    PrimaryResultOf,
    CompiledFrom,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub parent: RunId,
    pub relation: Relation,
}

/// Owned constituents of a [`Run`].
#[derive(Debug, Clone)]
pub struct RunParts {
    pub run_id: RunId,
    pub subject: Subject,
    pub mechanism: MechanismDescriptor,
    pub events: Vec<RunEvent>,
    pub status: TerminationStatus,
    pub final_family: ServiceFamily,
    pub provenance: Option<Provenance>,
}

/// A finished progression. Immutable; build one through [`Run::from_parts`].
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    parts: RunParts,
}

impl PartialEq for RunParts {
    fn eq(&self, other: &Self) -> bool {
        self.run_id == other.run_id && self.same_content(other)
    }
}

impl RunParts {
    fn same_content(&self, other: &Self) -> bool {
        self.subject == other.subject
            && self.mechanism == other.mechanism
            && self.events == other.events
            && self.status == other.status
            && self.final_family == other.final_family
            && self.provenance == other.provenance
    }
}

impl Run {
    pub fn from_parts(parts: RunParts) -> Run {
        debug_assert!(parts.events.windows(2).all(|w| w[0].index() < w[1].index()));
        Run { parts }
    }

    pub fn into_parts(self) -> RunParts {
        self.parts
    }

    pub fn run_id(&self) -> &RunId {
        &self.parts.run_id
    }

    pub fn subject(&self) -> &Subject {
        &self.parts.subject
    }

    pub fn mechanism(&self) -> &MechanismDescriptor {
        &self.parts.mechanism
    }

    pub fn events(&self) -> &[RunEvent] {
        &self.parts.events
    }

    pub fn status(&self) -> &TerminationStatus {
        &self.parts.status
    }

    pub fn final_family(&self) -> &ServiceFamily {
        &self.parts.final_family
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.parts.provenance.as_ref()
    }

    pub fn actions(&self) -> impl Iterator<Item = &ActionRecord> + '_ {
        self.parts.events.iter().filter_map(RunEvent::action)
    }

    /// Equality of everything except the run id.
    pub fn same_content(&self, other: &Run) -> bool {
        self.parts.same_content(&other.parts)
    }
}
