//! Direct putting-into-effect of instruction sequences.
//!
//! [`run_direct`] steps a program in the order of its operational semantics
//! and records the progression. [`oracle_run`] is an independently written
//! reference (thread extraction followed by a walk) used for differential
//! testing. The remaining functions read results off finished runs.

mod machine;
mod oracle;
mod reorder;

use std::sync::Arc;

pub use machine::FaultReason;
pub(crate) use machine::{lower, lower_instruction, Exit, Leave, Limits, Machine, Op};
pub use oracle::oracle_run;
pub use reorder::cotarget_reorder;

use crate::inseq::InstructionSequence;
use crate::mechanism::{MachineSpec, MechanismDescriptor, MechanismKind, PagingInfo, PagingMode};
use crate::run::{DivergenceCause, Run, RunId, RunParts, Subject, TerminationStatus};
use crate::service::{Method, ServiceFamily, ServiceKind};

/// Default step budget.
pub const DEFAULT_FUEL: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineConfig {
    /// Maximum number of steps; a run that would need more diverges.
    pub fuel: u64,
    pub cycle_detection: bool,
    /// Number of instructions held loaded at once; `None` loads everything.
    pub loaded_window: Option<u64>,
    pub paging_mode: PagingMode,
    /// Record target actions without applying them.
    pub simulation_mode: bool,
    /// Canonicalize co-target actions with [`cotarget_reorder`] before running.
    pub cotarget_reorder: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            fuel: DEFAULT_FUEL,
            cycle_detection: false,
            loaded_window: None,
            paging_mode: PagingMode::Hardware,
            simulation_mode: false,
            cotarget_reorder: false,
        }
    }
}

impl EngineConfig {
    pub fn with_fuel(fuel: u64) -> Self {
        EngineConfig {
            fuel,
            ..EngineConfig::default()
        }
    }
}

pub(crate) fn status_of(exit: Exit) -> TerminationStatus {
    match exit {
        Exit::Halted(v) => TerminationStatus::Terminated(v),
        Exit::FellOff => TerminationStatus::Terminated(None),
        Exit::OutOfFuel | Exit::Stopped => TerminationStatus::Divergence(DivergenceCause::Fuel),
        Exit::Cycle => TerminationStatus::Divergence(DivergenceCause::Cycle),
        Exit::Fault(r) => TerminationStatus::Fault(r.to_string()),
        Exit::Left { .. } => unreachable!("whole-program runs never hand control back"),
    }
}

/// Steps lowered `ops` over `fam` as one whole-program direct run.
pub(crate) fn execute(
    subject: Subject,
    ops: &[Op],
    costs: Option<&[u64]>,
    fam: &ServiceFamily,
    cfg: &EngineConfig,
    kind: MechanismKind,
    observer: &mut dyn FnMut(usize, &crate::run::RunEvent) -> bool,
) -> Run {
    let start = fam.reset_cotargets();
    let mut m = Machine::new(fam.iface(), start.bits().to_vec(), cfg.simulation_mode);
    let exit = m.run(
        ops,
        1,
        &Limits {
            fuel: cfg.fuel,
            costs,
            cycle_detection: cfg.cycle_detection,
            window: cfg.loaded_window,
            leave: Leave::Terminate,
        },
        observer,
    );
    let loaded = cfg
        .loaded_window
        .unwrap_or(ops.len() as u64)
        .min(ops.len() as u64)
        .max(1);
    let mut mechanism = MechanismDescriptor::new(
        kind,
        MachineSpec::register_machine(loaded, fam.iface_arc().clone()),
    );
    mechanism.flags.paging = PagingInfo {
        mode: cfg.paging_mode,
        mean_swap_interval: (m.swaps > 0).then(|| m.used as f64 / m.swaps as f64),
    };
    let final_family =
        ServiceFamily::from_parts(fam.iface_arc().clone(), m.state, start.initial_bits().to_vec());
    Run::from_parts(RunParts {
        run_id: RunId::fresh(),
        subject,
        mechanism,
        events: m.events,
        status: status_of(exit),
        final_family,
        provenance: None,
    })
}

/// Puts `seq` directly into effect over `fam`.
///
/// Co-target services are reset to their initial contents first. Unknown
/// services or methods and backward jumps past the first instruction end the
/// run with a fault status rather than an error.
pub fn run_direct(seq: &InstructionSequence, fam: &ServiceFamily, cfg: &EngineConfig) -> Run {
    let program = if cfg.cotarget_reorder {
        cotarget_reorder(seq, fam.iface())
    } else {
        seq.clone()
    };
    let ops = lower(&program, fam.iface());
    let kind = if cfg.simulation_mode {
        MechanismKind::Simulation
    } else {
        MechanismKind::Direct
    };
    execute(Subject::Source(seq.clone()), &ops, None, fam, cfg, kind, &mut |_, _| true)
}

/// The boolean a run delivered, if any (`X!H`).
pub fn result_of(run: &Run) -> Option<bool> {
    match run.status() {
        TerminationStatus::Terminated(v) => *v,
        _ => None,
    }
}

/// The state a run left behind (`X•H`).
pub fn effect_of(run: &Run) -> ServiceFamily {
    run.final_family().clone()
}

/// Target actions of a run, in order, together with how it ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetProjection {
    pub actions: Vec<(Arc<str>, Method, bool)>,
    pub status: TerminationStatus,
}

pub fn target_projection(run: &Run) -> TargetProjection {
    TargetProjection {
        actions: run
            .actions()
            .filter(|a| a.kind == ServiceKind::Target)
            .map(|a| (a.focus.clone(), a.method, a.reply))
            .collect(),
        status: run.status().clone(),
    }
}

pub fn target_equivalent(a: &Run, b: &Run) -> bool {
    target_projection(a) == target_projection(b)
}

/// Same action sequence (ignoring indices, page swaps and notes) and status.
pub fn event_equivalent(a: &Run, b: &Run) -> bool {
    a.status() == b.status() && a.actions().eq(b.actions())
}

#[cfg(test)]
pub(crate) mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::inseq::parse_program;
    use crate::run::{RunEvent, TerminationStatus::*};
    use crate::service::{make_family, InterfaceSpec};

    pub(crate) fn h0() -> ServiceFamily {
        let iface = InterfaceSpec::new()
            .with("c1", ServiceKind::Cotarget)
            .unwrap()
            .with("c2", ServiceKind::Cotarget)
            .unwrap()
            .with("t1", ServiceKind::Target)
            .unwrap();
        make_family(iface, &BTreeMap::new()).unwrap()
    }

    fn run(src: &str, fam: &ServiceFamily, cfg: &EngineConfig) -> Run {
        run_direct(&parse_program(src).unwrap(), fam, cfg)
    }

    fn acts(r: &Run) -> Vec<String> {
        r.actions().map(|a| a.to_string()).collect()
    }

    #[test]
    fn immediate_termination() {
        let r = run("!t", &h0(), &EngineConfig::default());
        assert!(r.events().is_empty());
        assert_eq!(r.status(), &Terminated(Some(true)));
        assert_eq!(result_of(&r), Some(true));
    }

    #[test]
    fn negative_reply_skips() {
        let r = run("+c1.get ; !t ; !f", &h0(), &EngineConfig::default());
        assert_eq!(acts(&r), ["c1.get -> false"]);
        assert_eq!(r.actions().next().unwrap().kind, ServiceKind::Cotarget);
        assert_eq!(r.status(), &Terminated(Some(false)));
    }

    #[test]
    fn negative_test_proceeds_on_false() {
        let r = run("-c1.get ; !t ; !f", &h0(), &EngineConfig::default());
        assert_eq!(r.status(), &Terminated(Some(true)));
    }

    #[test]
    fn self_loop_diverges() {
        let r = run("t1.set:t ; #0", &h0(), &EngineConfig::with_fuel(100));
        assert_eq!(acts(&r), ["t1.set:t -> true"]);
        assert_eq!(r.status(), &Divergence(DivergenceCause::Fuel));
        assert_eq!(r.final_family().get("t1"), Some(true));
        let cfg = EngineConfig {
            cycle_detection: true,
            ..EngineConfig::with_fuel(100)
        };
        assert_eq!(run("\\#0", &h0(), &cfg).status(), &Divergence(DivergenceCause::Cycle));
    }

    #[test]
    fn fall_off_and_jump_past_end() {
        assert_eq!(run("c1.get", &h0(), &EngineConfig::default()).status(), &Terminated(None));
        assert_eq!(run("#2 ; !t", &h0(), &EngineConfig::default()).status(), &Terminated(None));
        assert_eq!(run("", &h0(), &EngineConfig::default()).status(), &Terminated(None));
    }

    #[test]
    fn result_of_without_boolean() {
        assert_eq!(result_of(&run("#0", &h0(), &EngineConfig::with_fuel(10))), None);
        assert_eq!(result_of(&run("!", &h0(), &EngineConfig::default())), None);
    }

    #[test]
    fn faults() {
        let r = run("c1.get ; \\#5", &h0(), &EngineConfig::default());
        assert!(matches!(r.status(), Fault(m) if m.contains("position 2")));
        let r = run("zz.get", &h0(), &EngineConfig::default());
        assert!(matches!(r.status(), Fault(m) if m.contains("zz")));
        let r = run("c1.flip", &h0(), &EngineConfig::default());
        assert!(r.status().is_fault());
    }

    #[test]
    fn fuel_counts_every_instruction() {
        assert_eq!(run("!t", &h0(), &EngineConfig::with_fuel(1)).status(), &Terminated(Some(true)));
        assert_eq!(
            run("#1 ; !t", &h0(), &EngineConfig::with_fuel(1)).status(),
            &Divergence(DivergenceCause::Fuel)
        );
        assert_eq!(run("c1.get", &h0(), &EngineConfig::with_fuel(1)).status(), &Terminated(None));
    }

    #[test]
    fn effects() {
        let e = effect_of(&run("c1.set:t ; !", &h0(), &EngineConfig::default()));
        assert_eq!(e.get("c1"), Some(true));
        let e = effect_of(&run("c1.get ; !", &h0(), &EngineConfig::default()));
        assert_eq!(e, h0());
        let sim = EngineConfig {
            simulation_mode: true,
            ..EngineConfig::default()
        };
        let r = run("t1.set:t ; !", &h0(), &sim);
        assert_eq!(effect_of(&r).get("t1"), Some(false));
        assert_eq!(r.mechanism().kind, MechanismKind::Simulation);
    }

    #[test]
    fn cotargets_reset_targets_persist() {
        let fam = h0();
        let (_, fam) = fam.apply_action("c1", "set:t").unwrap();
        let (_, fam) = fam.apply_action("t1", "set:t").unwrap();
        let r = run("+c1.get ; !t ; +t1.get ; !f ; !", &fam, &EngineConfig::default());
        assert_eq!(r.status(), &Terminated(Some(false)));
    }

    #[test]
    fn projections() {
        let p = target_projection(&run("c1.set:t ; t1.set:t ; !t", &h0(), &EngineConfig::default()));
        assert_eq!(p.actions, vec![(Arc::from("t1"), Method::SetTrue, true)]);
        assert_eq!(p.status, Terminated(Some(true)));
        let p = target_projection(&run("c1.get ; !", &h0(), &EngineConfig::default()));
        assert!(p.actions.is_empty());
        assert_eq!(p.status, Terminated(None));
    }

    #[test]
    fn paging_emits_swaps_only() {
        let src = "c1.set:t ; #3 ; !f ; !f ; +c1.get ; \\#3 ; t1.set:t ; !t";
        let full = run(src, &h0(), &EngineConfig::default());
        let cfg = EngineConfig {
            loaded_window: Some(2),
            paging_mode: PagingMode::CodeControlled,
            ..EngineConfig::default()
        };
        let paged = run(src, &h0(), &cfg);
        assert!(event_equivalent(&full, &paged));
        let swaps: Vec<_> = paged
            .events()
            .iter()
            .filter(|e| matches!(e, RunEvent::PageSwap { .. }))
            .collect();
        assert!(!swaps.is_empty());
        assert!(paged.mechanism().flags.paging.mean_swap_interval.is_some());
        assert!(full.mechanism().flags.paging.mean_swap_interval.is_none());
        for w in paged.events().windows(2) {
            assert!(w[0].index() < w[1].index());
        }
    }

    #[test]
    fn determinism_modulo_run_id() {
        let a = run("+c1.get ; c2.set:f ; t1.set:t ; \\#2", &h0(), &EngineConfig::with_fuel(50));
        let b = run("+c1.get ; c2.set:f ; t1.set:t ; \\#2", &h0(), &EngineConfig::with_fuel(50));
        assert_ne!(a.run_id(), b.run_id());
        assert!(a.same_content(&b));
    }
}
