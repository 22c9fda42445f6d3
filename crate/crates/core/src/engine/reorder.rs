//! Static reordering of co-target actions between target actions.

use std::collections::BTreeSet;

use crate::inseq::{Instruction, InstructionSequence};
use crate::service::{InterfaceSpec, ServiceKind};

/// Sorts each maximal straight-line block of plain co-target actions by
/// service name, keeping the relative order of actions on the same service.
///
/// A block never contains tests, jumps, terminators or target actions, and
/// no control transfer lands strictly inside it, so every start state sees
/// the same target trace and final family.
pub fn cotarget_reorder(seq: &InstructionSequence, iface: &InterfaceSpec) -> InstructionSequence {
    let ins = seq.instructions();
    let n = ins.len();
    // Positions (1-based) reached by something other than falling through.
    let mut entries = BTreeSet::new();
    for (i, x) in ins.iter().enumerate() {
        let p = i as u128 + 1;
        match x {
            Instruction::FwdJump(k) => {
                entries.insert(p + *k as u128);
            }
            Instruction::BwdJump(k) if (*k as u128) < p => {
                entries.insert(p - *k as u128);
            }
            Instruction::PosTest(_) | Instruction::NegTest(_) => {
                entries.insert(p + 2);
            }
            _ => {}
        }
    }
    let movable = |x: &Instruction| match x {
        Instruction::Plain(a) => iface.kind_of(&a.focus) == Some(ServiceKind::Cotarget),
        _ => false,
    };
    let mut out = ins.to_vec();
    let mut i = 0;
    while i < n {
        if !movable(&ins[i]) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < n && movable(&ins[j]) && !entries.contains(&(j as u128 + 1)) {
            j += 1;
        }
        // Stable: same-service actions never pass each other.
        out[i..j].sort_by(|a, b| {
            let fa = &a.action().expect("plain").focus;
            let fb = &b.action().expect("plain").focus;
            fa.cmp(fb)
        });
        i = j;
    }
    InstructionSequence::new(out)
}
