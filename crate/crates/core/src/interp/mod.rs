//! Interpretation by a generated instruction sequence.
//!
//! A subject program Z is encoded into co-target memory registers; the
//! generated interpreter Y is then put directly into effect over the subject
//! family extended with those registers. The subject run is read off the
//! interpreter run: actions on the subject's own services become the subject
//! events and everything on interpreter registers is dropped.

mod gen;
mod layout;

use std::collections::HashSet;
use std::sync::Arc;

use thiserror::Error;

pub use gen::generate_interpreter;
pub use layout::{
    decode_program, encode_program, opcode_shapes, EncodingLayout, LayoutFile, Prefixes,
    ProgramEncoding, Shape,
};

use crate::engine::{execute, lower, EngineConfig, FaultReason};
use crate::inseq::InstructionSequence;
use crate::mechanism::{MachineSpec, MechanismDescriptor, MechanismKind};
use crate::run::{
    DivergenceCause, Provenance, Relation, Run, RunEvent, RunId, RunParts, Subject,
    TerminationStatus,
};
use crate::service::{register_step, InterfaceSpec, Method, ServiceFamily, ServiceKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error("layout too small: {0}")]
    LayoutTooSmall(String),
    #[error("program has {len} instructions, layout holds at most {max}")]
    ProgramTooLong { len: usize, max: usize },
    #[error("instruction {position} cannot be encoded: {reason}")]
    UnencodableInstruction { position: usize, reason: String },
    #[error("register name '{0}' is used twice")]
    NameClash(String),
    #[error("interface mismatch: {0}")]
    InterfaceMismatch(String),
}

/// Sample size used by [`run_interpreted`] to certify a fresh interpreter.
pub const DEFAULT_CERTIFICATION_SAMPLE: usize = 64;

/// The pair of runs produced by interpretation.
#[derive(Debug, Clone)]
pub struct InterpretedRuns {
    pub subject: Run,
    pub interpreter: Run,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Subject(usize),
    Pc(u32),
    Tick,
    Fault,
    Other,
}

/// An interpreter program bound to the layout and interface it serves.
#[derive(Debug, Clone)]
pub struct Interpreter {
    layout: EncodingLayout,
    subject_iface: Arc<InterfaceSpec>,
    program: InstructionSequence,
    iface: Arc<InterfaceSpec>,
    roles: Vec<Role>,
    certified: bool,
}

impl Interpreter {
    /// Generates the interpreter for `iface` and `layout`.
    pub fn generate(iface: &InterfaceSpec, layout: &EncodingLayout) -> Result<Interpreter, InterpError> {
        let program = generate_interpreter(iface, layout)?;
        Interpreter::from_program(program, iface, layout)
    }

    /// Wraps an arbitrary program, e.g. a hand-written or damaged interpreter.
    pub fn from_program(
        program: InstructionSequence,
        iface: &InterfaceSpec,
        layout: &EncodingLayout,
    ) -> Result<Interpreter, InterpError> {
        let regs = layout.register_iface()?;
        let full = iface
            .union(&regs)
            .map_err(|e| InterpError::NameClash(e.to_string()))?;
        let roles = full
            .services()
            .iter()
            .map(|s| {
                let name: &str = &s.name;
                if let Some(i) = iface.index_of(name) {
                    Role::Subject(i)
                } else if name == layout.tick_reg() {
                    Role::Tick
                } else if name == layout.fault_reg() {
                    Role::Fault
                } else if let Some(b) = (0..layout.pc_bits()).find(|&b| layout.pc_reg(b) == name) {
                    Role::Pc(b)
                } else {
                    Role::Other
                }
            })
            .collect();
        Ok(Interpreter {
            layout: layout.clone(),
            subject_iface: Arc::new(iface.clone()),
            program,
            iface: Arc::new(full),
            roles,
            certified: false,
        })
    }

    pub fn program(&self) -> &InstructionSequence {
        &self.program
    }

    pub fn layout(&self) -> &EncodingLayout {
        &self.layout
    }

    pub fn subject_iface(&self) -> &InterfaceSpec {
        &self.subject_iface
    }

    /// Subject interface together with every interpreter register.
    pub fn full_iface(&self) -> &Arc<InterfaceSpec> {
        &self.iface
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }

    pub(crate) fn set_certified(&mut self, yes: bool) {
        self.certified = yes;
    }

    /// Interprets `seq` over `fam`.
    pub fn run(
        &self,
        seq: &InstructionSequence,
        fam: &ServiceFamily,
        cfg: &EngineConfig,
    ) -> Result<InterpretedRuns, InterpError> {
        self.check_family(fam)?;
        let enc = encode_program(seq, &self.layout, fam.iface())?;
        Ok(self.run_encoding(
            Subject::Source(seq.clone()),
            &enc,
            None,
            fam,
            cfg,
            MechanismKind::Interpreted,
        ))
    }

    fn check_family(&self, fam: &ServiceFamily) -> Result<(), InterpError> {
        for s in fam.iface().services() {
            match self.subject_iface.kind_of(&s.name) {
                Some(k) if k == s.kind => {}
                _ => {
                    return Err(InterpError::InterfaceMismatch(format!(
                        "service '{}' is not part of the interpreted interface",
                        s.name
                    )))
                }
            }
        }
        Ok(())
    }

    /// Runs the interpreter over an already encoded program. `weights[j-1]`
    /// is the fuel charged for interpreting slot `j` (default 1).
    pub(crate) fn run_encoding(
        &self,
        subject: Subject,
        enc: &ProgramEncoding,
        weights: Option<&[u64]>,
        fam: &ServiceFamily,
        cfg: &EngineConfig,
        kind: MechanismKind,
    ) -> InterpretedRuns {
        let full = &self.iface;
        let start = fam.reset_cotargets();
        let mut state = vec![false; full.len()];
        let mut initial = vec![false; full.len()];
        for (i, s) in full.services().iter().enumerate() {
            if let Some(v) = enc.register_values.get(&*s.name) {
                state[i] = *v;
                initial[i] = *v;
            } else if let Some(j) = fam.iface().index_of(&s.name) {
                state[i] = start.bits()[j];
                initial[i] = start.initial_bits()[j];
            }
        }
        let extended = ServiceFamily::from_parts(full.clone(), state, initial);
        // the fam-to-subject-iface index map for subject events
        let to_fam: Vec<Option<usize>> = self
            .subject_iface
            .services()
            .iter()
            .map(|s| fam.iface().index_of(&s.name))
            .collect();

        let mut t = Tracker {
            roles: &self.roles,
            weights,
            fuel: cfg.fuel,
            used: 0,
            pc: 0,
            cycle_detection: cfg.cycle_detection,
            simulation: cfg.simulation_mode,
            state: start.bits().to_vec(),
            seen: HashSet::new(),
            to_fam: &to_fam,
            events: Vec::new(),
            stop: None,
            fault: false,
        };
        let icfg = EngineConfig {
            fuel: cfg
                .fuel
                .saturating_add(1)
                .saturating_mul(self.program.len() as u64 + 1),
            cycle_detection: false,
            cotarget_reorder: false,
            ..cfg.clone()
        };
        let ops = lower(&self.program, full);
        let interp_run = execute(
            Subject::Source(self.program.clone()),
            &ops,
            None,
            &extended,
            &icfg,
            MechanismKind::Direct,
            &mut |svc, ev| t.observe(svc, ev),
        );

        let status = if let Some(cause) = t.stop {
            TerminationStatus::Divergence(cause)
        } else if t.fault {
            TerminationStatus::Fault(
                FaultReason::JumpBeforeStart { position: t.pc }.to_string(),
            )
        } else {
            match interp_run.status() {
                TerminationStatus::Terminated(v) => TerminationStatus::Terminated(*v),
                TerminationStatus::Divergence(_) => {
                    TerminationStatus::Divergence(DivergenceCause::Fuel)
                }
                TerminationStatus::Fault(r) => {
                    TerminationStatus::Fault(format!("interpreter fault: {r}"))
                }
            }
        };
        let final_bits: Vec<bool> = fam
            .iface()
            .services()
            .iter()
            .map(|s| interp_run.final_family().get(&s.name).unwrap_or(false))
            .collect();
        let final_family =
            ServiceFamily::from_parts(fam.iface_arc().clone(), final_bits, fam.initial_bits().to_vec());
        let mut mechanism = MechanismDescriptor::new(
            kind,
            MachineSpec::register_machine(self.layout.max_len() as u64, fam.iface_arc().clone()),
        );
        mechanism.uniform_certified = self.certified;
        let subject_run = Run::from_parts(RunParts {
            run_id: RunId::fresh(),
            subject,
            mechanism,
            events: t.events,
            status,
            final_family,
            provenance: Some(Provenance {
                parent: interp_run.run_id().clone(),
                relation: Relation::PrimaryResultOf,
            }),
        });
        InterpretedRuns {
            subject: subject_run,
            interpreter: interp_run,
        }
    }
}

/// Follows the interpreter run event by event: counts ticks against the
/// subject fuel, mirrors the subject pc from the p registers, and collects
/// subject actions.
struct Tracker<'a> {
    roles: &'a [Role],
    weights: Option<&'a [u64]>,
    fuel: u64,
    used: u64,
    pc: u64,
    cycle_detection: bool,
    simulation: bool,
    state: Vec<bool>,
    seen: HashSet<(u64, Vec<bool>)>,
    to_fam: &'a [Option<usize>],
    events: Vec<RunEvent>,
    stop: Option<DivergenceCause>,
    fault: bool,
}

impl Tracker<'_> {
    fn observe(&mut self, svc: usize, ev: &RunEvent) -> bool {
        let Some(a) = ev.action() else { return true };
        match self.roles[svc] {
            Role::Tick => {
                if self.cycle_detection && !self.seen.insert((self.pc, self.state.clone())) {
                    self.stop = Some(DivergenceCause::Cycle);
                    return false;
                }
                let w = self
                    .weights
                    .and_then(|w| (self.pc as usize).checked_sub(1).and_then(|i| w.get(i)).copied())
                    .unwrap_or(1);
                match self.used.checked_add(w) {
                    Some(u) if u <= self.fuel => self.used = u,
                    _ => {
                        self.stop = Some(DivergenceCause::Fuel);
                        return false;
                    }
                }
            }
            Role::Pc(b) => {
                if a.method != Method::Get {
                    let bit = 1u64 << b;
                    self.pc = if a.reply { self.pc | bit } else { self.pc & !bit };
                }
            }
            Role::Fault => {
                if a.method == Method::SetTrue {
                    self.fault = true;
                }
            }
            Role::Subject(i) => {
                if let Some(j) = self.to_fam[i] {
                    if !(self.simulation && a.kind == ServiceKind::Target) {
                        register_step(&mut self.state[j], a.method);
                    }
                }
                self.events.push(RunEvent::Action {
                    index: self.events.len() as u64 + 1,
                    action: a.clone(),
                });
            }
            Role::Other => {}
        }
        true
    }
}

/// Interprets `seq` over `fam` with a freshly generated interpreter,
/// certified on a seeded random sample first.
pub fn run_interpreted(
    seq: &InstructionSequence,
    fam: &ServiceFamily,
    layout: &EncodingLayout,
    cfg: &EngineConfig,
) -> Result<InterpretedRuns, InterpError> {
    let mut interp = Interpreter::generate(fam.iface(), layout)?;
    if seq.len() > layout.max_len() {
        return Err(InterpError::ProgramTooLong {
            len: seq.len(),
            max: layout.max_len(),
        });
    }
    let cert = crate::mechanism::certify_interpreter(
        &interp,
        &crate::mechanism::Sample::Random {
            n: DEFAULT_CERTIFICATION_SAMPLE,
            seed: 0,
        },
    )
    .expect("sample is nonempty");
    interp.set_certified(cert.pass);
    interp.run(seq, fam, cfg)
}
