mod common;

use common::*;
use pisie::engine::{
    cotarget_reorder, effect_of, event_equivalent, oracle_run, result_of, run_direct, target_projection, EngineConfig,
};
use pisie::inseq::{parse_program, render_program, Instruction, InstructionSequence};
use pisie::run::{DivergenceCause, RunEvent, TerminationStatus};
use pisie::service::{Method, ServiceKind};
use proptest::prelude::*;

fn program() -> impl Strategy<Value = InstructionSequence> {
    let alpha = small_alphabet();
    prop::collection::vec(prop::sample::select(alpha), 0..12).prop_map(InstructionSequence::new)
}

fn start_state() -> impl Strategy<Value = usize> {
    0usize..8
}

#[test]
fn worked_examples() {
    let fam = h0();
    let cfg = EngineConfig::default();
    let r = run_direct(&parse_program("!t").unwrap(), &fam, &cfg);
    assert!(r.events().is_empty());
    assert_eq!(result_of(&r), Some(true));

    let r = run_direct(&parse_program("+c1.get ; !t ; !f").unwrap(), &fam, &cfg);
    assert_eq!(r.actions().count(), 1);
    let a = r.actions().next().unwrap();
    assert_eq!((&*a.focus, a.method, a.reply, a.kind), ("c1", Method::Get, false, ServiceKind::Cotarget));
    assert_eq!(r.status(), &TerminationStatus::Terminated(Some(false)));

    let r = run_direct(&parse_program("t1.set:t ; #0").unwrap(), &fam, &EngineConfig::with_fuel(100));
    assert_eq!(r.actions().count(), 1);
    assert_eq!(r.status(), &TerminationStatus::Divergence(DivergenceCause::Fuel));
    assert_eq!(r.final_family().get("t1"), Some(true));

    let r = run_direct(&parse_program("-c1.get ; !t ; !f").unwrap(), &fam, &cfg);
    assert_eq!(result_of(&r), Some(true));
    let r = run_direct(&parse_program("#2 ; !t").unwrap(), &fam, &cfg);
    assert_eq!(r.status(), &TerminationStatus::Terminated(None));
    assert_eq!(result_of(&run_direct(&parse_program("#0").unwrap(), &fam, &EngineConfig::with_fuel(5))), None);
    assert_eq!(result_of(&run_direct(&parse_program("!").unwrap(), &fam, &cfg)), None);

    let e = effect_of(&run_direct(&parse_program("c1.set:t ; !").unwrap(), &fam, &cfg));
    assert_eq!(e.get("c1"), Some(true));
    assert_eq!(effect_of(&run_direct(&parse_program("c1.get ; !").unwrap(), &fam, &cfg)), fam);

    let p = target_projection(&run_direct(&parse_program("c1.set:t ; t1.set:t ; !t").unwrap(), &fam, &cfg));
    assert_eq!(p.actions.len(), 1);
    assert_eq!((&*p.actions[0].0, p.actions[0].1, p.actions[0].2), ("t1", Method::SetTrue, true));
    assert!(target_projection(&run_direct(&parse_program("c1.get ; !").unwrap(), &fam, &cfg)).actions.is_empty());
}

#[test]
fn simulation_leaves_targets_alone() {
    let cfg = EngineConfig {
        simulation_mode: true,
        ..EngineConfig::default()
    };
    let r = run_direct(&parse_program("t1.set:t ; !").unwrap(), &h0(), &cfg);
    assert_eq!(r.final_family().get("t1"), Some(false));
    assert_eq!(r.actions().count(), 1);
}

#[test]
fn reorder_examples() {
    let i = h0();
    let re = |s: &str| render_program(&cotarget_reorder(&parse_program(s).unwrap(), i.iface()));
    assert_eq!(re("c2.set:t ; c1.set:t ; t1.get ; !"), "c1.set:t\nc2.set:t\nt1.get\n!");
    assert_eq!(re("c1.set:t ; c1.set:f ; !"), "c1.set:t\nc1.set:f\n!");
    assert_eq!(re("+c1.get ; c2.set:t ; !"), "+c1.get\nc2.set:t\n!");
}

#[test]
fn reorder_is_sound_exhaustively() {
    let fam = h0();
    let states = all_states(fam.iface());
    let alpha = alphabet("c2.set:t ; c1.set:t ; c1.set:f ; c2.get ; +c1.get ; t1.set:t ; #2 ; \\#1 ; !t");
    let cfg = EngineConfig::with_fuel(60);
    for_all_programs(&alpha, 4, |seq| {
        let re = cotarget_reorder(seq, fam.iface());
        for s in &states {
            let a = run_direct(seq, s, &cfg);
            let b = run_direct(&re, s, &cfg);
            assert_eq!(target_projection(&a), target_projection(&b), "{seq:?}");
            assert_eq!(effect_of(&a), effect_of(&b), "{seq:?}");
        }
    });
}

#[test]
fn indices_increase_and_kinds_match() {
    let fam = h0();
    let cfg = EngineConfig {
        loaded_window: Some(2),
        ..EngineConfig::with_fuel(50)
    };
    let r = run_direct(&parse_program("c1.set:t ; t1.get ; -c2.get ; \\#3 ; !").unwrap(), &fam, &cfg);
    assert!(r.events().windows(2).all(|w| w[0].index() < w[1].index()));
    for e in r.events() {
        if let RunEvent::Action { action, .. } = e {
            assert_eq!(Some(action.kind), fam.iface().kind_of(&action.focus));
        }
    }
}

proptest! {
    #[test]
    fn direct_agrees_with_oracle(seq in program(), s in start_state(), fuel in 0u64..80) {
        let fam = &all_states(h0().iface())[s];
        let d = run_direct(&seq, fam, &EngineConfig::with_fuel(fuel));
        let o = oracle_run(&seq, fam, fuel);
        prop_assert_eq!(d.status(), o.status());
        prop_assert!(d.actions().eq(o.actions()));
        prop_assert_eq!(d.final_family(), o.final_family());
    }

    #[test]
    fn deterministic(seq in program(), s in start_state()) {
        let fam = &all_states(h0().iface())[s];
        let cfg = EngineConfig::with_fuel(100);
        prop_assert!(run_direct(&seq, fam, &cfg).same_content(&run_direct(&seq, fam, &cfg)));
    }

    #[test]
    fn fuel_monotone(seq in program(), s in start_state(), extra in 0u64..50) {
        let fam = &all_states(h0().iface())[s];
        let mut n = 0;
        let base = loop {
            let r = run_direct(&seq, fam, &EngineConfig::with_fuel(n));
            if !matches!(r.status(), TerminationStatus::Divergence(_)) || n > 60 {
                break r;
            }
            n += 1;
        };
        prop_assume!(!matches!(base.status(), TerminationStatus::Divergence(_)));
        let later = run_direct(&seq, fam, &EngineConfig::with_fuel(n + extra));
        prop_assert!(base.same_content(&later));
    }

    #[test]
    fn paging_is_transparent(seq in program(), s in start_state(), w in 1u64..6) {
        let fam = &all_states(h0().iface())[s];
        let full = run_direct(&seq, fam, &EngineConfig::with_fuel(100));
        let paged = run_direct(&seq, fam, &EngineConfig { loaded_window: Some(w), ..EngineConfig::with_fuel(100) });
        prop_assert!(event_equivalent(&full, &paged));
        prop_assert_eq!(full.final_family(), paged.final_family());
        let swaps = paged.events().iter().filter(|e| matches!(e, RunEvent::PageSwap { .. })).count();
        prop_assert_eq!(paged.mechanism().flags.paging.mean_swap_interval.is_some(), swaps > 0);
    }

    #[test]
    fn cycle_detection_only_shortens(seq in program(), s in start_state()) {
        let fam = &all_states(h0().iface())[s];
        let plain = run_direct(&seq, fam, &EngineConfig::with_fuel(200));
        let cyc = run_direct(&seq, fam, &EngineConfig { cycle_detection: true, ..EngineConfig::with_fuel(200) });
        match cyc.status() {
            TerminationStatus::Divergence(DivergenceCause::Cycle) => {
                prop_assert_eq!(plain.status(), &TerminationStatus::Divergence(DivergenceCause::Fuel));
                prop_assert!(cyc.actions().zip(plain.actions()).all(|(a, b)| a == b));
            }
            _ => prop_assert!(plain.same_content(&cyc) || event_equivalent(&plain, &cyc)),
        }
    }

    #[test]
    fn simulation_is_partial(seq in program(), s in start_state()) {
        let fam = &all_states(h0().iface())[s];
        let steered_by_target = seq.instructions().iter().any(|i| {
            matches!(i, Instruction::PosTest(a) | Instruction::NegTest(a) if a.focus == "t1")
        });
        let cfg = EngineConfig::with_fuel(100);
        let d = run_direct(&seq, fam, &cfg);
        let sim = run_direct(&seq, fam, &EngineConfig { simulation_mode: true, ..cfg });
        prop_assert_eq!(sim.final_family().get("t1"), fam.get("t1"));
        if !steered_by_target {
            let calls = |r: &pisie::run::Run| -> Vec<(String, Method)> {
                target_projection(r).actions.iter().map(|(f, m, _)| (f.to_string(), *m)).collect()
            };
            prop_assert_eq!(calls(&d), calls(&sim));
            prop_assert_eq!(d.status(), sim.status());
        }
    }
}
