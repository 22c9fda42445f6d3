mod common;

use common::*;
use pisie::engine::{event_equivalent, run_direct, EngineConfig};
use pisie::inseq::{parse_program, render_program};
use pisie::inseqex::{expand, parse_inseqex, run_fragmented, ExpansionOutcome, Inseqex, InseqexError, JitError};
use pisie::mechanism::{check_wellfounded, classify, MechanismKind, ProvenanceStore};
use pisie::run::{DivergenceCause, RunEvent, TerminationStatus};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn expanded(src: &str, bound: u128) -> ExpansionOutcome {
    expand(&parse_inseqex(src).unwrap(), bound).unwrap()
}

#[test]
fn expansion_examples() {
    let ExpansionOutcome::Expanded { seq, size } = expanded("(t1.set:t)^3", 10) else { panic!() };
    assert_eq!((render_program(&seq).as_str(), size), ("t1.set:t\nt1.set:t\nt1.set:t", 3));
    let ExpansionOutcome::Expanded { seq, .. } = expanded("let v = c1.get ; !t in v ; v", 10) else { panic!() };
    assert_eq!(seq, parse_program("c1.get ; !t ; c1.get ; !t").unwrap());
    assert_eq!(
        expanded("(c1.get)^1099511627776", 1_000_000),
        ExpansionOutcome::Explosion {
            lower_bound: 1 << 40,
            bound: 1_000_000
        }
    );
    assert_eq!(parse_inseqex("v").unwrap_err(), InseqexError::UnboundVariable("v".into()));
}

#[test]
fn fragment_examples() {
    let fam = h0();
    let e = parse_inseqex("(t1.set:t)^3 ; !t").unwrap();
    let r = run_fragmented(&e, &fam, 2, &EngineConfig::default()).unwrap();
    assert_eq!(r.subject.actions().filter(|a| &*a.focus == "t1").count(), 3);
    assert_eq!(r.subject.status(), &TerminationStatus::Terminated(Some(true)));
    let notes = r.subject.events().iter().filter(|e| matches!(e, RunEvent::Note { .. })).count();
    assert!(notes >= 2);

    let e = parse_inseqex("(c1.set:t ; c1.set:f)^1048576 ; !t").unwrap();
    let r = run_fragmented(&e, &fam, 64, &EngineConfig::with_fuel(10_000)).unwrap();
    assert_eq!(r.subject.status(), &TerminationStatus::Divergence(DivergenceCause::Fuel));
    assert!(r.max_materialized <= 64);

    let r = run_fragmented(&parse_inseqex("!f").unwrap(), &fam, 1, &EngineConfig::default()).unwrap();
    assert_eq!((r.subject.status(), r.fragments), (&TerminationStatus::Terminated(Some(false)), 1));
    assert_eq!(
        run_fragmented(&parse_inseqex("!f").unwrap(), &fam, 0, &EngineConfig::default()).unwrap_err(),
        JitError::EmptyWindow
    );
}

#[test]
fn fragment_runs_classify_as_indirect() {
    let fam = h0();
    let r = run_fragmented(&parse_inseqex("(c1.set:t)^4 ; !t").unwrap(), &fam, 2, &EngineConfig::default()).unwrap();
    assert_eq!(r.subject.mechanism().kind, MechanismKind::JitFragments);
    let store: ProvenanceStore = [r.host.clone(), r.subject.clone()].into_iter().collect();
    let c = classify(&r.subject, &store).unwrap();
    assert!(c.is_pisie && !c.is_dpisie);
    assert!(classify(&r.host, &store).unwrap().is_execution);
    assert!(check_wellfounded(&r.subject, &store).unwrap().ok);
}

#[test]
fn cycle_detection_spans_fragments() {
    let fam = h0();
    let e = parse_inseqex("c1.set:t ; (c1.get)^5 ; \\#5").unwrap();
    let cfg = EngineConfig {
        cycle_detection: true,
        ..EngineConfig::with_fuel(1000)
    };
    let ExpansionOutcome::Expanded { seq, .. } = expand(&e, 100).unwrap() else { panic!() };
    let d = run_direct(&seq, &fam, &cfg);
    assert_eq!(d.status(), &TerminationStatus::Divergence(DivergenceCause::Cycle));
    for w in [1, 2, 3, 10] {
        let r = run_fragmented(&e, &fam, w, &cfg).unwrap();
        assert!(event_equivalent(&d, &r.subject), "window {w}");
    }
}

#[test]
fn seeded_expressions_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let alpha = small_alphabet();
    for _ in 0..300 {
        let e = random_inseqex(&mut rng, &alpha, 6, &mut Vec::new());
        let reference = naive_expand(&e);
        assert_eq!(e.size(), reference.len() as u128);
        match expand(&e, 200).unwrap() {
            ExpansionOutcome::Expanded { seq, .. } => assert_eq!(seq.instructions(), &reference[..]),
            ExpansionOutcome::Explosion { lower_bound, .. } => assert!(lower_bound > 200),
        }
        let again = parse_inseqex(&e.to_string()).unwrap();
        assert_eq!(naive_expand(&again), reference, "{e}");
    }
}

fn expression() -> impl Strategy<Value = Inseqex> {
    (any::<u64>(), 1u32..6).prop_map(|(seed, depth)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_inseqex(&mut rng, &small_alphabet(), depth, &mut Vec::new())
    })
}

proptest! {
    #[test]
    fn fragments_match_expansion(e in expression(), w in 1usize..9, s in 0usize..8, fuel in 0u64..120) {
        prop_assume!(e.size() <= 200);
        let fam = &all_states(h0().iface())[s];
        let ExpansionOutcome::Expanded { seq, .. } = expand(&e, 200).unwrap() else { unreachable!() };
        let cfg = EngineConfig::with_fuel(fuel);
        let d = run_direct(&seq, fam, &cfg);
        let f = run_fragmented(&e, fam, w, &cfg).unwrap();
        prop_assert!(event_equivalent(&d, &f.subject));
        prop_assert_eq!(d.final_family(), f.subject.final_family());
        prop_assert!(f.max_materialized <= w);
    }
}
