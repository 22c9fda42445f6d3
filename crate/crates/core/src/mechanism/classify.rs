//! The result-sandwich classifier and the well-foundedness check.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inseq::{validate, InstructionSequence};
use crate::run::{Relation, Run, RunId};

use super::score::{executionality, ExecutionalityReport};
use super::{MachineSpec, MechanismDescriptor, MechanismKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("provenance parent '{0}' is not in the store")]
    DanglingProvenance(RunId),
}

/// Runs addressable by id, for following provenance edges.
#[derive(Debug, Clone, Default)]
pub struct ProvenanceStore {
    runs: BTreeMap<RunId, Run>,
}

impl ProvenanceStore {
    pub fn new() -> Self {
        ProvenanceStore::default()
    }

    pub fn insert(&mut self, run: Run) {
        self.runs.insert(run.run_id().clone(), run);
    }

    pub fn get(&self, id: &RunId) -> Option<&Run> {
        self.runs.get(id)
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn runs(&self) -> impl Iterator<Item = &Run> {
        self.runs.values()
    }
}

impl FromIterator<Run> for ProvenanceStore {
    fn from_iter<I: IntoIterator<Item = Run>>(iter: I) -> Self {
        let mut s = ProvenanceStore::new();
        for r in iter {
            s.insert(r);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    #[serde(rename = "pisie")]
    pub is_pisie: bool,
    #[serde(rename = "dpisie")]
    pub is_dpisie: bool,
    #[serde(rename = "interpretation")]
    pub is_interpretation: bool,
    #[serde(rename = "execution")]
    pub is_execution: bool,
    pub rationale: Vec<String>,
}

fn parent<'s>(run: &Run, store: &'s ProvenanceStore) -> Result<Option<(&'s Run, Relation)>, ClassifyError> {
    match run.provenance() {
        None => Ok(None),
        Some(p) => store
            .get(&p.parent)
            .map(|r| Some((r, p.relation)))
            .ok_or_else(|| ClassifyError::DanglingProvenance(p.parent.clone())),
    }
}

/// Whether a compilation step produced something this run's subject is put
/// into effect through.
fn compiled_for_subject(run: &Run, store: &ProvenanceStore) -> Result<bool, ClassifyError> {
    let mut seen = HashSet::new();
    let mut cur = run;
    while seen.insert(cur.run_id().clone()) {
        let Some((up, rel)) = parent(cur, store)? else {
            return Ok(false);
        };
        if rel == Relation::CompiledFrom && cur.subject() == run.subject() {
            return Ok(true);
        }
        cur = up;
    }
    Ok(false)
}

/// Decides whether `run` puts its subject into effect, directly or not, and
/// whether it is an interpretation or an execution of it.
pub fn classify(run: &Run, store: &ProvenanceStore) -> Result<Classification, ClassifyError> {
    let mut why = Vec::new();
    let kind = run.mechanism().kind;
    let up = parent(run, store)?;

    let is_pisie = kind != MechanismKind::Manual && !run.status().is_fault();
    if kind == MechanismKind::Manual {
        why.push("manual mechanisms are score-only".to_string());
    } else if run.status().is_fault() {
        why.push("faulted run follows no prescription to its end".to_string());
    } else {
        why.push(format!("{} run puts its subject into effect", kind.as_str()));
    }

    let direct_kind = matches!(kind, MechanismKind::Direct | MechanismKind::Interpreted);
    let compiled = compiled_for_subject(run, store)?;
    let is_dpisie = is_pisie && direct_kind && !compiled;
    if is_pisie {
        if !direct_kind {
            why.push(format!("{} is an indirect mechanism", kind.as_str()));
        } else if compiled {
            why.push("a compilation step precedes this run".to_string());
        } else {
            why.push("follows the operational order without preparation".to_string());
        }
    }

    let primary = match up {
        Some((p, Relation::PrimaryResultOf)) => Some(p),
        _ => None,
    };
    let self_edge = primary.is_some_and(|p| p.subject() == run.subject());
    let certified = run.mechanism().uniform_certified;
    let is_interpretation = is_dpisie && primary.is_some() && !self_edge && certified;
    if is_dpisie && primary.is_some() {
        if self_edge {
            why.push("primary-result edge points at a run of the same program".to_string());
        } else if certified {
            why.push(format!(
                "primary result of running {} uniformly",
                primary.expect("checked").run_id()
            ));
        } else {
            why.push("interpreter not certified uniform".to_string());
        }
    }

    let score = executionality(run.mechanism()).score;
    let is_execution = is_dpisie && primary.is_none() && score > 0.0;
    if is_dpisie && primary.is_none() {
        why.push(format!("not the primary result of another run; executionality {score:+.2}"));
    }

    Ok(Classification {
        is_pisie,
        is_dpisie,
        is_interpretation,
        is_execution,
        rationale: why,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Cycle { at: RunId },
    Unterminated { depth: usize },
    RootNotDirect { root: RunId, mechanism: MechanismKind },
    RootNotPositive { root: RunId, score: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WellfoundedReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    /// Run ids from `run` up to the root.
    pub chain: Vec<RunId>,
}

/// Provenance chains longer than this are reported as unterminated.
pub const MAX_CHAIN: usize = 1024;

/// Follows provenance to the root, which must be a direct run with positive
/// executionality.
pub fn check_wellfounded(run: &Run, store: &ProvenanceStore) -> Result<WellfoundedReport, ClassifyError> {
    let mut violations = Vec::new();
    let mut chain = vec![run.run_id().clone()];
    let mut seen: HashSet<RunId> = chain.iter().cloned().collect();
    let mut cur = run;
    loop {
        let Some((up, _)) = parent(cur, store)? else { break };
        if !seen.insert(up.run_id().clone()) {
            violations.push(Violation::Cycle {
                at: up.run_id().clone(),
            });
            break;
        }
        chain.push(up.run_id().clone());
        if chain.len() > MAX_CHAIN {
            violations.push(Violation::Unterminated { depth: chain.len() });
            break;
        }
        cur = up;
    }
    if violations.is_empty() {
        let kind = cur.mechanism().kind;
        if kind != MechanismKind::Direct {
            violations.push(Violation::RootNotDirect {
                root: cur.run_id().clone(),
                mechanism: kind,
            });
        }
        let score = executionality(cur.mechanism()).score;
        if score <= 0.0 {
            violations.push(Violation::RootNotPositive {
                root: cur.run_id().clone(),
                score: format!("{score:+.2}"),
            });
        }
    }
    Ok(WellfoundedReport {
        ok: violations.is_empty(),
        violations,
        chain,
    })
}

/// Whether `machine` can hold `seq` and put it into effect as an execution.
pub fn is_executable(seq: &InstructionSequence, machine: &MachineSpec) -> bool {
    seq.len() as u64 <= machine.max_loaded_len
        && validate(seq, &machine.iface).ok
        && executionality(&MechanismDescriptor::direct(machine.clone())).score > 0.0
}

/// Everything the classifier says about one run (`.report.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: RunId,
    pub classification: Classification,
    pub executionality: ExecutionalityReport,
    pub wellfounded: WellfoundedReport,
}

pub fn report(run: &Run, store: &ProvenanceStore) -> Result<RunReport, ClassifyError> {
    Ok(RunReport {
        run_id: run.run_id().clone(),
        classification: classify(run, store)?,
        executionality: executionality(run.mechanism()),
        wellfounded: check_wellfounded(run, store)?,
    })
}
