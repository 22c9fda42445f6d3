//! The shared stepping loop behind every direct putting-into-effect.
//!
//! Programs are lowered to [`Op`]s with resolved service indices and
//! absolute jump targets; relative and absolute jump notations therefore
//! share one loop.

use std::collections::HashSet;
use std::fmt;

use crate::inseq::{BasicAction, Instruction, InstructionSequence};
use crate::run::{ActionRecord, RunEvent, Window};
use crate::service::{register_step, InterfaceSpec, Method, ServiceKind};

/// Why a run stopped with a fault.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaultReason {
    JumpBeforeStart { position: u64 },
    UnknownFocus { position: u64, focus: String },
    UnknownMethod { position: u64, focus: String, method: String },
}

impl FaultReason {
    pub(crate) fn shifted(self, by: u64) -> FaultReason {
        match self {
            FaultReason::JumpBeforeStart { position } => FaultReason::JumpBeforeStart {
                position: position + by,
            },
            FaultReason::UnknownFocus { position, focus } => FaultReason::UnknownFocus {
                position: position + by,
                focus,
            },
            FaultReason::UnknownMethod {
                position,
                focus,
                method,
            } => FaultReason::UnknownMethod {
                position: position + by,
                focus,
                method,
            },
        }
    }
}

impl fmt::Display for FaultReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultReason::JumpBeforeStart { position } => {
                write!(f, "jump at position {position} lands before the first instruction")
            }
            FaultReason::UnknownFocus { position, focus } => {
                write!(f, "unknown focus '{focus}' at position {position}")
            }
            FaultReason::UnknownMethod {
                position,
                focus,
                method,
            } => write!(f, "unknown method '{method}' of '{focus}' at position {position}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Steer {
    Plain,
    Pos,
    Neg,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Op {
    Act { svc: u32, method: Method, steer: Steer },
    Goto(i64),
    Halt(Option<bool>),
    Bad(FaultReason),
}

pub(crate) fn resolve_action(
    position: u64,
    a: &BasicAction,
    steer: Steer,
    iface: &InterfaceSpec,
) -> Op {
    let Some(svc) = iface.index_of(&a.focus) else {
        return Op::Bad(FaultReason::UnknownFocus {
            position,
            focus: a.focus.clone(),
        });
    };
    match a.method.parse::<Method>() {
        Ok(method) if iface.services()[svc].supports(method) => Op::Act {
            svc: svc as u32,
            method,
            steer,
        },
        _ => Op::Bad(FaultReason::UnknownMethod {
            position,
            focus: a.focus.clone(),
            method: a.method.clone(),
        }),
    }
}

pub(crate) fn offset(position: u64, delta: u64, forward: bool) -> i64 {
    let p = position as i64;
    let d = i64::try_from(delta).unwrap_or(i64::MAX);
    if forward {
        p.saturating_add(d)
    } else {
        p.saturating_sub(d)
    }
}

pub(crate) fn lower_instruction(position: u64, ins: &Instruction, iface: &InterfaceSpec) -> Op {
    match ins {
        Instruction::Plain(a) => resolve_action(position, a, Steer::Plain, iface),
        Instruction::PosTest(a) => resolve_action(position, a, Steer::Pos, iface),
        Instruction::NegTest(a) => resolve_action(position, a, Steer::Neg, iface),
        Instruction::FwdJump(k) => Op::Goto(offset(position, *k, true)),
        Instruction::BwdJump(k) => Op::Goto(offset(position, *k, false)),
        Instruction::Halt => Op::Halt(None),
        Instruction::HaltTrue => Op::Halt(Some(true)),
        Instruction::HaltFalse => Op::Halt(Some(false)),
    }
}

pub(crate) fn lower(seq: &InstructionSequence, iface: &InterfaceSpec) -> Vec<Op> {
    seq.instructions()
        .iter()
        .enumerate()
        .map(|(i, ins)| lower_instruction(i as u64 + 1, ins, iface))
        .collect()
}

/// What happens when control leaves `1..=len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Leave {
    /// Past the end terminates; before the start faults.
    Terminate,
    /// Hand control back to the caller (fragment execution).
    Exit,
}

pub(crate) struct Limits<'c> {
    pub fuel: u64,
    /// Per-position step cost; `None` means every instruction costs 1.
    pub costs: Option<&'c [u64]>,
    pub cycle_detection: bool,
    pub window: Option<u64>,
    pub leave: Leave,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Exit {
    Halted(Option<bool>),
    FellOff,
    Left { from: i64, to: i64 },
    OutOfFuel,
    Cycle,
    Fault(FaultReason),
    Stopped,
}

pub(crate) struct Machine<'a> {
    iface: &'a InterfaceSpec,
    pub state: Vec<bool>,
    simulation: bool,
    pub events: Vec<RunEvent>,
    /// Fuel consumed so far.
    pub used: u64,
    pub swaps: u64,
    /// Added to positions when remembering visited configurations, so
    /// fragments of one program share cycle detection.
    pub origin: i64,
    seen: HashSet<(i64, Vec<bool>)>,
}

fn recenter(pc: u64, width: u64, len: u64) -> Window {
    let lo = pc
        .saturating_sub((width - 1) / 2)
        .clamp(1, len + 1 - width);
    (lo, lo + width - 1)
}

impl<'a> Machine<'a> {
    pub fn new(iface: &'a InterfaceSpec, state: Vec<bool>, simulation: bool) -> Self {
        Machine {
            iface,
            state,
            simulation,
            events: Vec::new(),
            used: 0,
            swaps: 0,
            origin: 0,
            seen: HashSet::new(),
        }
    }

    fn next_index(&self) -> u64 {
        self.events.len() as u64 + 1
    }

    pub fn note(&mut self, tag: String) {
        let index = self.next_index();
        self.events.push(RunEvent::Note { index, tag });
    }

    #[inline]
    fn act(&mut self, svc: usize, method: Method) -> bool {
        let decl = &self.iface.services()[svc];
        let reply = if self.simulation && decl.kind == ServiceKind::Target {
            self.state[svc]
        } else {
            register_step(&mut self.state[svc], method)
        };
        let index = self.next_index();
        self.events.push(RunEvent::Action {
            index,
            action: ActionRecord {
                focus: decl.name.clone(),
                method,
                reply,
                kind: decl.kind,
            },
        });
        reply
    }

    /// Steps `ops` from `start`. `observer` sees every action event and may
    /// stop the run by returning `false`.
    pub fn run(
        &mut self,
        ops: &[Op],
        start: i64,
        lim: &Limits<'_>,
        observer: &mut dyn FnMut(usize, &RunEvent) -> bool,
    ) -> Exit {
        let len = ops.len() as i64;
        let width = lim.window.map(|w| w.max(1)).filter(|&w| (w as i64) < len);
        let mut window = width.map(|w| recenter(start.max(1) as u64, w, len as u64));
        let mut pc = start;
        let mut from = start;
        loop {
            if pc < 1 || pc > len {
                return match lim.leave {
                    Leave::Exit => Exit::Left { from, to: pc },
                    Leave::Terminate if pc > len => Exit::FellOff,
                    Leave::Terminate => Exit::Fault(FaultReason::JumpBeforeStart {
                        position: from as u64,
                    }),
                };
            }
            if let (Some(w), Some((lo, hi))) = (width, window) {
                let p = pc as u64;
                if p < lo || p > hi {
                    let to = recenter(p, w, len as u64);
                    let index = self.next_index();
                    self.events.push(RunEvent::PageSwap {
                        index,
                        from: (lo, hi),
                        to,
                    });
                    self.swaps += 1;
                    window = Some(to);
                }
            }
            if lim.cycle_detection && !self.seen.insert((pc + self.origin, self.state.clone())) {
                return Exit::Cycle;
            }
            let cost = lim.costs.map_or(1, |c| c[(pc - 1) as usize]);
            match self.used.checked_add(cost) {
                Some(u) if u <= lim.fuel => self.used = u,
                _ => return Exit::OutOfFuel,
            }
            from = pc;
            match &ops[(pc - 1) as usize] {
                Op::Act { svc, method, steer } => {
                    let reply = self.act(*svc as usize, *method);
                    let keep_going = observer(*svc as usize, self.events.last().expect("just pushed"));
                    pc += match (steer, reply) {
                        (Steer::Plain, _) | (Steer::Pos, true) | (Steer::Neg, false) => 1,
                        _ => 2,
                    };
                    if !keep_going {
                        return Exit::Stopped;
                    }
                }
                Op::Goto(target) => {
                    if *target < 1 && lim.leave == Leave::Terminate {
                        return Exit::Fault(FaultReason::JumpBeforeStart {
                            position: pc as u64,
                        });
                    }
                    pc = *target;
                }
                Op::Halt(v) => return Exit::Halted(*v),
                Op::Bad(reason) => return Exit::Fault(reason.clone()),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recenter_clamps_to_program() {
        assert_eq!(recenter(1, 4, 10), (1, 4));
        assert_eq!(recenter(6, 4, 10), (5, 8));
        assert_eq!(recenter(10, 4, 10), (7, 10));
        assert_eq!(recenter(5, 1, 10), (5, 5));
    }

    #[test]
    fn huge_offsets_saturate() {
        assert_eq!(offset(3, u64::MAX, true), i64::MAX);
        assert!(offset(3, u64::MAX, false) < 1);
    }
}
