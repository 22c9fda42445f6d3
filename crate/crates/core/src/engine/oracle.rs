//! Reference semantics by thread extraction.
//!
//! The program is first turned into its behavior: a finite system of nodes,
//! one per position, each either a basic action with a true and a false
//! continuation, a silent jump, a termination leaf, the divergence marker
//! (a jump to itself), or a fault. Unfolding that system from position 1 to
//! depth `fuel` is the thread; the walk below reads exactly that unfolding
//! against a service family. No code is shared with the stepping loop.

use crate::inseq::{Instruction, InstructionSequence};
use crate::mechanism::{MachineSpec, MechanismDescriptor, MechanismKind};
use crate::run::{ActionRecord, DivergenceCause, Run, RunEvent, RunId, RunParts, Subject, TerminationStatus};
use crate::service::{Method, ServiceFamily};

use super::FaultReason;

/// Node reference: a position, where anything past the program is the end.
type Next = usize;

#[derive(Debug, Clone)]
enum Behavior {
    Act {
        focus: String,
        method: String,
        on_true: Next,
        on_false: Next,
    },
    Silent(Next),
    Stop(Option<bool>),
    Diverge,
    Fault(FaultReason),
}

fn extract(seq: &InstructionSequence, fam: &ServiceFamily) -> Vec<Behavior> {
    let end = seq.len() + 1;
    let clamp = |p: u128| -> Next { p.min(end as u128) as usize };
    seq.instructions()
        .iter()
        .enumerate()
        .map(|(i, ins)| {
            let p = i + 1;
            let act = |a: &crate::inseq::BasicAction, t: usize, f: usize| {
                let position = p as u64;
                match fam.iface().get(&a.focus) {
                    None => Behavior::Fault(FaultReason::UnknownFocus {
                        position,
                        focus: a.focus.clone(),
                    }),
                    Some(s) if !a.method.parse::<Method>().is_ok_and(|m| s.supports(m)) => {
                        Behavior::Fault(FaultReason::UnknownMethod {
                            position,
                            focus: a.focus.clone(),
                            method: a.method.clone(),
                        })
                    }
                    Some(_) => Behavior::Act {
                        focus: a.focus.clone(),
                        method: a.method.clone(),
                        on_true: clamp(t as u128),
                        on_false: clamp(f as u128),
                    },
                }
            };
            match ins {
                Instruction::Plain(a) => act(a, p + 1, p + 1),
                Instruction::PosTest(a) => act(a, p + 1, p + 2),
                Instruction::NegTest(a) => act(a, p + 2, p + 1),
                Instruction::FwdJump(0) | Instruction::BwdJump(0) => Behavior::Diverge,
                Instruction::FwdJump(k) => Behavior::Silent(clamp(p as u128 + *k as u128)),
                Instruction::BwdJump(k) if (*k as u128) < p as u128 => {
                    Behavior::Silent(p - *k as usize)
                }
                Instruction::BwdJump(_) => Behavior::Fault(FaultReason::JumpBeforeStart {
                    position: p as u64,
                }),
                Instruction::Halt => Behavior::Stop(None),
                Instruction::HaltTrue => Behavior::Stop(Some(true)),
                Instruction::HaltFalse => Behavior::Stop(Some(false)),
            }
        })
        .collect()
}

/// Runs `seq` over `fam` by walking its extracted thread to depth `fuel`.
pub fn oracle_run(seq: &InstructionSequence, fam: &ServiceFamily, fuel: u64) -> Run {
    let behavior = extract(seq, fam);
    let start = fam.reset_cotargets();
    let mut family = start.clone();
    let mut events = Vec::new();
    let mut node: Next = 1;
    let mut depth = 0u64;
    let status = loop {
        let Some(b) = behavior.get(node - 1) else {
            break TerminationStatus::Terminated(None);
        };
        if depth == fuel {
            break TerminationStatus::Divergence(DivergenceCause::Fuel);
        }
        depth += 1;
        match b {
            Behavior::Act {
                focus,
                method,
                on_true,
                on_false,
            } => {
                let reply = family
                    .apply_in_place(focus, method)
                    .expect("extraction checked the action")
                    .0;
                let decl = family.iface().get(focus).expect("known focus");
                events.push(RunEvent::Action {
                    index: events.len() as u64 + 1,
                    action: ActionRecord {
                        focus: decl.name.clone(),
                        method: method.parse().expect("known method"),
                        reply,
                        kind: decl.kind,
                    },
                });
                node = if reply { *on_true } else { *on_false };
            }
            Behavior::Silent(next) => node = *next,
            Behavior::Stop(v) => break TerminationStatus::Terminated(*v),
            // D: no further events whatever the remaining depth.
            Behavior::Diverge => break TerminationStatus::Divergence(DivergenceCause::Fuel),
            Behavior::Fault(r) => break TerminationStatus::Fault(r.to_string()),
        }
    };
    let machine = MachineSpec::register_machine(seq.len().max(1) as u64, fam.iface_arc().clone());
    Run::from_parts(RunParts {
        run_id: RunId::fresh(),
        subject: Subject::Source(seq.clone()),
        mechanism: MechanismDescriptor::new(MechanismKind::Oracle, machine),
        events,
        status,
        final_family: family,
        provenance: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{event_equivalent, run_direct, tests::h0, EngineConfig};
    use crate::inseq::parse_program;
    use crate::service::ServiceKind;

    fn both(src: &str, fam: &ServiceFamily, fuel: u64) -> (Run, Run) {
        let seq = parse_program(src).unwrap();
        (
            run_direct(&seq, fam, &EngineConfig::with_fuel(fuel)),
            oracle_run(&seq, fam, fuel),
        )
    }

    #[test]
    fn agrees_on_spot_examples() {
        for src in [
            "!t",
            "-c1.get ; !t ; !f",
            "#2 ; !t",
            "+c1.get ; !t ; !f",
            "t1.set:t ; #0",
            "c1.set:t ; -c1.get ; \\#2 ; t1.set:f ; !",
            "\\#1",
            "zz.get",
        ] {
            let (d, o) = both(src, &h0(), 100);
            assert!(event_equivalent(&d, &o), "{src}");
            assert_eq!(d.final_family(), o.final_family(), "{src}");
            assert_eq!(d.events(), o.events(), "{src}");
        }
    }

    #[test]
    fn examples() {
        let (_, o) = both("-c1.get ; !t ; !f", &h0(), 100);
        assert_eq!(o.status(), &TerminationStatus::Terminated(Some(true)));
        let (_, o) = both("#2 ; !t", &h0(), 100);
        assert_eq!(o.status(), &TerminationStatus::Terminated(None));
        assert_eq!(o.mechanism().kind, MechanismKind::Oracle);
        let (_, o) = both("t1.set:t ; #0", &h0(), 100);
        assert_eq!(o.actions().next().unwrap().kind, ServiceKind::Target);
    }
}
