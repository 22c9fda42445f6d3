//! Uniformity certification of interpreters.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{run_direct, target_projection, EngineConfig};
use crate::inseq::{render_program, Instruction, InstructionSequence};
use crate::interp::{EncodingLayout, InterpError, Interpreter};
use crate::service::{InterfaceSpec, ServiceFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sample {
    /// Every program up to the layout's length.
    Exhaustive,
    /// `n` programs drawn with a seeded generator.
    Random { n: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CertifyError {
    #[error("the sample is empty")]
    EmptySample,
    #[error(transparent)]
    Interp(#[from] InterpError),
}

/// A program and start state on which the interpreter disagrees with the
/// direct run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub program: String,
    pub initial: BTreeMap<String, bool>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub pass: bool,
    /// Number of (program, start state) pairs compared.
    pub checked: usize,
    pub witnesses: Vec<Witness>,
}

/// Every instruction a subject program may contain under `layout`. Jump
/// operands range over what the layout can encode, up to one past the end.
pub fn subject_alphabet(iface: &InterfaceSpec, layout: &EncodingLayout) -> Vec<Instruction> {
    let mut out = vec![Instruction::Halt, Instruction::HaltTrue, Instruction::HaltFalse];
    let cap = if layout.operand_bits() >= 63 {
        u64::MAX
    } else {
        (1u64 << layout.operand_bits()) - 1
    };
    for k in 0..=cap.min(layout.max_len() as u64 + 1) {
        out.push(Instruction::FwdJump(k));
        out.push(Instruction::BwdJump(k));
    }
    for s in iface.services() {
        for &m in &s.methods {
            out.push(Instruction::plain(&s.name, m.as_str()));
            out.push(Instruction::pos(&s.name, m.as_str()));
            out.push(Instruction::neg(&s.name, m.as_str()));
        }
    }
    out
}

/// Start states tried for every program: all of them for small interfaces,
/// otherwise all-false, all-true and two alternating patterns.
pub fn start_states(iface: &InterfaceSpec) -> Vec<ServiceFamily> {
    let n = iface.len();
    let patterns: Vec<Vec<bool>> = if n <= 4 {
        (0..1u32 << n)
            .map(|v| (0..n).map(|i| (v >> i) & 1 == 1).collect())
            .collect()
    } else {
        vec![
            vec![false; n],
            vec![true; n],
            (0..n).map(|i| i % 2 == 0).collect(),
            (0..n).map(|i| i % 2 == 1).collect(),
        ]
    };
    let iface = std::sync::Arc::new(iface.clone());
    patterns
        .into_iter()
        .map(|bits| ServiceFamily::from_bits(iface.clone(), bits))
        .collect()
}

/// All sequences over `alphabet` of length at most `max_len`, shortest first.
pub fn enumerate_programs(alphabet: &[Instruction], max_len: usize) -> impl Iterator<Item = InstructionSequence> + '_ {
    (0..=max_len).flat_map(move |len| {
        let total = alphabet.len().checked_pow(len as u32).unwrap_or(usize::MAX);
        (0..total).map(move |mut code| {
            let mut ins = Vec::with_capacity(len);
            for _ in 0..len {
                ins.push(alphabet[code % alphabet.len()].clone());
                code /= alphabet.len();
            }
            InstructionSequence::new(ins)
        })
    })
}

fn fuel_for(layout: &EncodingLayout) -> u64 {
    16 * (layout.max_len() as u64 + 1)
}

fn compare(interp: &Interpreter, seq: &InstructionSequence, fam: &ServiceFamily, cfg: &EngineConfig) -> Result<Option<Witness>, CertifyError> {
    let direct = run_direct(seq, fam, cfg);
    let interpreted = interp.run(seq, fam, cfg)?.subject;
    let reason = if target_projection(&direct) != target_projection(&interpreted) {
        "target projections differ"
    } else if direct.final_family() != interpreted.final_family() {
        "final states differ"
    } else {
        return Ok(None);
    };
    Ok(Some(Witness {
        program: render_program(seq),
        initial: fam.state_map(),
        reason: reason.to_string(),
    }))
}

/// Checks `interp` against direct runs on the sampled programs; stops at
/// the first counterexample.
pub fn certify_interpreter(interp: &Interpreter, sample: &Sample) -> Result<Certificate, CertifyError> {
    let iface = interp.subject_iface();
    let layout = interp.layout();
    let alphabet = subject_alphabet(iface, layout);
    let states = start_states(iface);
    let cfg = EngineConfig::with_fuel(fuel_for(layout));
    let programs: Box<dyn Iterator<Item = InstructionSequence>> = match *sample {
        Sample::Exhaustive => Box::new(enumerate_programs(&alphabet, layout.max_len())),
        Sample::Random { n: 0, .. } => return Err(CertifyError::EmptySample),
        Sample::Random { n, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let max = layout.max_len();
            let v: Vec<InstructionSequence> = (0..n)
                .map(|_| {
                    let len = rng.gen_range(0..=max);
                    (0..len)
                        .map(|_| alphabet[rng.gen_range(0..alphabet.len())].clone())
                        .collect::<Vec<_>>()
                        .into()
                })
                .collect();
            Box::new(v.into_iter())
        }
    };
    let mut checked = 0;
    for seq in programs {
        for fam in &states {
            checked += 1;
            if let Some(w) = compare(interp, &seq, fam, &cfg)? {
                return Ok(Certificate {
                    pass: false,
                    checked,
                    witnesses: vec![w],
                });
            }
        }
    }
    Ok(Certificate {
        pass: true,
        checked,
        witnesses: Vec::new(),
    })
}

/// Certifies an interpreter given as a plain program.
pub fn certify_uniformity(
    interpreter: &InstructionSequence,
    iface: &InterfaceSpec,
    layout: &EncodingLayout,
    sample: &Sample,
) -> Result<Certificate, CertifyError> {
    let interp = Interpreter::from_program(interpreter.clone(), iface, layout)?;
    certify_interpreter(&interp, sample)
}

/// Certifies `interp` and records the outcome on it, so runs it produces
/// carry `uniform_certified`.
pub fn certify(interp: &mut Interpreter, sample: &Sample) -> Result<Certificate, CertifyError> {
    let cert = certify_interpreter(interp, sample)?;
    interp.set_certified(cert.pass);
    Ok(cert)
}
