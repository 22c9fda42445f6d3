//! `.trace.json` files and directory-backed provenance stores.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compile::ObjectSequence;
use crate::inseq::parse_program;
use crate::inseqex::parse_inseqex;
use crate::mechanism::{MechanismDescriptor, ProvenanceStore};
use crate::run::{ActionRecord, DivergenceCause, Provenance, Run, RunEvent, RunId, RunParts, Subject, TerminationStatus};
use crate::service::{Method, ServiceFamily, ServiceKind};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed trace: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("trace subject does not parse: {0}")]
    Subject(String),
    #[error("trace state mentions '{0}', which the machine interface lacks")]
    UnknownService(String),
    #[error("trace event {index} uses service '{focus}', which the machine interface lacks")]
    UnknownFocus { index: u64, focus: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectForm {
    #[default]
    Source,
    Object,
    Expression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum EventEntry {
    Action {
        i: u64,
        focus: String,
        method: Method,
        reply: bool,
        kind: ServiceKind,
    },
    PageSwap { i: u64, from: [u64; 2], to: [u64; 2] },
    Note { i: u64, tag: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatusEntry {
    Terminated { value: Option<bool> },
    Divergence { by: DivergenceCause },
    Fault { reason: String },
}

/// On-disk form of a [`Run`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub run_id: RunId,
    pub subject: String,
    #[serde(default)]
    pub subject_form: SubjectForm,
    pub mechanism: MechanismDescriptor,
    pub events: Vec<EventEntry>,
    pub status: StatusEntry,
    pub final_state: BTreeMap<String, bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<BTreeMap<String, bool>>,
    pub provenance: Option<Provenance>,
}

impl TraceFile {
    pub fn from_run(run: &Run) -> TraceFile {
        let subject_form = match run.subject() {
            Subject::Source(_) => SubjectForm::Source,
            Subject::Object(_) => SubjectForm::Object,
            Subject::Expression(_) => SubjectForm::Expression,
        };
        let events = run
            .events()
            .iter()
            .map(|e| match e {
                RunEvent::Action { index, action } => EventEntry::Action {
                    i: *index,
                    focus: action.focus.to_string(),
                    method: action.method,
                    reply: action.reply,
                    kind: action.kind,
                },
                RunEvent::PageSwap { index, from, to } => EventEntry::PageSwap {
                    i: *index,
                    from: [from.0, from.1],
                    to: [to.0, to.1],
                },
                RunEvent::Note { index, tag } => EventEntry::Note {
                    i: *index,
                    tag: tag.clone(),
                },
            })
            .collect();
        let status = match run.status() {
            TerminationStatus::Terminated(v) => StatusEntry::Terminated { value: *v },
            TerminationStatus::Divergence(by) => StatusEntry::Divergence { by: *by },
            TerminationStatus::Fault(r) => StatusEntry::Fault { reason: r.clone() },
        };
        TraceFile {
            run_id: run.run_id().clone(),
            subject: run.subject().render(),
            subject_form,
            mechanism: run.mechanism().clone(),
            events,
            status,
            final_state: run.final_family().state_map(),
            initial_state: Some(run.final_family().initial_map()),
            provenance: run.provenance().cloned(),
        }
    }

    pub fn into_run(self) -> Result<Run, TraceError> {
        let subject = match self.subject_form {
            SubjectForm::Source => Subject::Source(parse_program(&self.subject).map_err(|e| TraceError::Subject(e.to_string()))?),
            SubjectForm::Object => Subject::Object(ObjectSequence::parse(&self.subject).map_err(|e| TraceError::Subject(e.to_string()))?),
            SubjectForm::Expression => Subject::Expression(parse_inseqex(&self.subject).map_err(|e| TraceError::Subject(e.to_string()))?),
        };
        let iface = self.mechanism.machine.iface.clone();
        let bits = |m: &BTreeMap<String, bool>| -> Result<Vec<bool>, TraceError> {
            let mut v = vec![false; iface.len()];
            for (name, &b) in m {
                let i = iface
                    .index_of(name)
                    .ok_or_else(|| TraceError::UnknownService(name.clone()))?;
                v[i] = b;
            }
            Ok(v)
        };
        let state = bits(&self.final_state)?;
        let initial = match &self.initial_state {
            Some(m) => bits(m)?,
            None => state.clone(),
        };
        let mut events = Vec::with_capacity(self.events.len());
        for e in self.events {
            events.push(match e {
                EventEntry::Action {
                    i,
                    focus,
                    method,
                    reply,
                    kind,
                } => {
                    let name: Arc<str> = match iface.get(&focus) {
                        Some(decl) => decl.name.clone(),
                        None => return Err(TraceError::UnknownFocus { index: i, focus }),
                    };
                    RunEvent::Action {
                        index: i,
                        action: ActionRecord {
                            focus: name,
                            method,
                            reply,
                            kind,
                        },
                    }
                }
                EventEntry::PageSwap { i, from, to } => RunEvent::PageSwap {
                    index: i,
                    from: (from[0], from[1]),
                    to: (to[0], to[1]),
                },
                EventEntry::Note { i, tag } => RunEvent::Note { index: i, tag },
            });
        }
        let status = match self.status {
            StatusEntry::Terminated { value } => TerminationStatus::Terminated(value),
            StatusEntry::Divergence { by } => TerminationStatus::Divergence(by),
            StatusEntry::Fault { reason } => TerminationStatus::Fault(reason),
        };
        Ok(Run::from_parts(RunParts {
            run_id: self.run_id,
            subject,
            final_family: ServiceFamily::from_parts(iface, state, initial),
            mechanism: self.mechanism,
            events,
            status,
            provenance: self.provenance,
        }))
    }
}

pub fn trace_json(run: &Run) -> String {
    serde_json::to_string_pretty(&TraceFile::from_run(run)).expect("traces always serialize")
}

pub fn parse_trace(text: &str) -> Result<Run, TraceError> {
    serde_json::from_str::<TraceFile>(text)?.into_run()
}

pub fn write_trace(run: &Run, path: &Path) -> Result<(), TraceError> {
    fs::write(path, trace_json(run) + "\n").map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_trace(path: &Path) -> Result<Run, TraceError> {
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trace(&text)
}

/// Loads every `*.trace.json` in `dir`.
pub fn load_store(dir: &Path) -> Result<ProvenanceStore, TraceError> {
    let io_err = |source| TraceError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err)?;
    paths.retain(|p| p.to_string_lossy().ends_with(".trace.json"));
    paths.sort();
    let mut store = ProvenanceStore::new();
    for p in paths {
        store.insert(read_trace(&p)?);
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::run_compiled_object;
    use crate::engine::{run_direct, tests::h0, EngineConfig};
    use crate::inseqex::run_fragmented;

    fn roundtrip(run: &Run) {
        let back = parse_trace(&trace_json(run)).unwrap();
        assert_eq!(&back, run);
    }

    #[test]
    fn direct_trace_roundtrips() {
        let cfg = EngineConfig {
            loaded_window: Some(2),
            ..EngineConfig::with_fuel(40)
        };
        let r = run_direct(&parse_program("c1.set:t ; +c1.get ; t1.set:t ; \\#3").unwrap(), &h0(), &cfg);
        roundtrip(&r);
        roundtrip(&run_direct(&parse_program("zz.get").unwrap(), &h0(), &cfg));
    }

    #[test]
    fn other_subjects_roundtrip() {
        let seq = parse_program("#2 ; !f ; c1.set:t ; !t").unwrap();
        let runs = run_compiled_object(&seq, &h0(), &EngineConfig::default()).unwrap();
        roundtrip(&runs.object);
        roundtrip(&runs.subject);
        let e = parse_inseqex("(c1.set:t ; t1.set:t)^3").unwrap();
        let j = run_fragmented(&e, &h0(), 3, &EngineConfig::default()).unwrap();
        roundtrip(&j.subject);
    }

    #[test]
    fn wire_format() {
        let r = run_direct(&parse_program("c1.get ; !t").unwrap(), &h0(), &EngineConfig::default());
        let v: serde_json::Value = serde_json::from_str(&trace_json(&r)).unwrap();
        assert_eq!(v["events"][0]["ev"], "action");
        assert_eq!(v["events"][0]["i"], 1);
        assert_eq!(v["events"][0]["kind"], "cotarget");
        assert_eq!(v["status"]["kind"], "terminated");
        assert_eq!(v["status"]["value"], true);
        assert!(v["provenance"].is_null());
        assert_eq!(v["subject"], "c1.get\n!t");
    }
}
