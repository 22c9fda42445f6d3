//! Compilation into object code and into intermediate code, and the
//! indirect putting-into-effect pipelines built on them.
//!
//! Object code replaces relative jumps with absolute ones, collapses jump
//! chains and drops unreachable instructions. A collapsed chain is charged
//! the number of source jumps it stands for, so a compiled run consumes fuel
//! exactly like its source and stops at the same point.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::engine::{execute, lower_instruction, EngineConfig, Op};
use crate::inseq::{statements, Instruction, InstructionSequence, SyntaxError};
use crate::interp::{
    encode_program, EncodingLayout, InterpError, Interpreter, InterpretedRuns, ProgramEncoding,
};
use crate::mechanism::{certify, MechanismKind, Sample};
use crate::run::{Provenance, Relation, Run, RunId, RunParts, Subject};
use crate::service::{InterfaceSpec, ServiceFamily};

/// Identifies the (notional) compiler program in provenance.
pub const OBJECT_COMPILER_TAG: &str = "objc-1";
pub const INTERMEDIATE_COMPILER_TAG: &str = "imc-1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("jump at position {position} lands before the first instruction")]
    JumpBeforeStart { position: usize },
    #[error(transparent)]
    Interp(#[from] InterpError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ObjectInstruction {
    /// Any non-jump instruction.
    Ins(Instruction),
    /// Continue at this 1-based position; one past the end terminates.
    AbsJump(u64),
}

impl fmt::Display for ObjectInstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectInstruction::Ins(i) => i.fmt(f),
            ObjectInstruction::AbsJump(t) => write!(f, "##{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ObjectSequence {
    instructions: Vec<ObjectInstruction>,
}

impl ObjectSequence {
    pub fn new(instructions: Vec<ObjectInstruction>) -> Self {
        ObjectSequence { instructions }
    }

    pub fn instructions(&self) -> &[ObjectInstruction] {
        &self.instructions
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn parse(text: &str) -> Result<ObjectSequence, SyntaxError> {
        statements(text)
            .iter()
            .map(|st| {
                let tok = st.text;
                if let Some(d) = tok.strip_prefix("##") {
                    return crate::inseq::parse_operand(d)
                        .map(ObjectInstruction::AbsJump)
                        .map_err(|m| st.error(m));
                }
                match crate::inseq::parse_common(tok) {
                    Some(r) => r.map(ObjectInstruction::Ins).map_err(|m| st.error(m)),
                    None => Err(st.error(format!("relative jump '{tok}' in object code"))),
                }
            })
            .collect::<Result<Vec<_>, _>>()
            .map(ObjectSequence::new)
    }

    /// One instruction per line.
    pub fn render(&self) -> String {
        self.instructions
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// The same program with relative jumps.
    pub fn to_relative(&self) -> InstructionSequence {
        InstructionSequence::new(
            self.instructions
                .iter()
                .enumerate()
                .map(|(i, x)| match x {
                    ObjectInstruction::Ins(ins) => ins.clone(),
                    ObjectInstruction::AbsJump(t) => relative(i as u64 + 1, *t),
                })
                .collect(),
        )
    }

    /// Checks the structural guarantees of compiler output: jump targets in
    /// range, no jump to a jump other than a self-loop, nothing unreachable.
    pub fn check_structure(&self) -> Result<(), String> {
        let n = self.len() as u64;
        for (i, x) in self.instructions.iter().enumerate() {
            let p = i as u64 + 1;
            if let ObjectInstruction::AbsJump(t) = x {
                if *t < 1 || *t > n + 1 {
                    return Err(format!("jump at {p} targets {t}, outside 1..={}", n + 1));
                }
                if *t != p && matches!(self.at(*t), Some(ObjectInstruction::AbsJump(_))) {
                    return Err(format!("jump at {p} targets the jump at {t}"));
                }
            }
        }
        let mut seen = vec![false; self.len()];
        let mut todo = VecDeque::from([1u64]);
        while let Some(p) = todo.pop_front() {
            let Some(x) = self.at(p) else { continue };
            if std::mem::replace(&mut seen[p as usize - 1], true) {
                continue;
            }
            match x {
                ObjectInstruction::AbsJump(t) => todo.push_back(*t),
                ObjectInstruction::Ins(ins) => todo.extend(successors(p, ins)),
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(format!("instruction {} is unreachable", i + 1)),
            None => Ok(()),
        }
    }

    fn at(&self, p: u64) -> Option<&ObjectInstruction> {
        (p as usize).checked_sub(1).and_then(|i| self.instructions.get(i))
    }
}

impl fmt::Display for ObjectSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn relative(from: u64, to: u64) -> Instruction {
    if to >= from {
        Instruction::FwdJump(to - from)
    } else {
        Instruction::BwdJump(from - to)
    }
}

/// Successors of a non-jump instruction.
fn successors(p: u64, ins: &Instruction) -> Vec<u64> {
    match ins {
        Instruction::Plain(_) => vec![p + 1],
        Instruction::PosTest(_) | Instruction::NegTest(_) => vec![p + 1, p + 2],
        _ => vec![],
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompiledOutput {
    Object(ObjectSequence),
    Intermediate {
        /// The relative-jump program that was encoded.
        program: InstructionSequence,
        encoding: ProgramEncoding,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompilationRecord {
    pub source: InstructionSequence,
    pub output: CompiledOutput,
    pub compiler_tag: String,
    /// `position_map[p-1]` is where source position `p` ended up.
    pub position_map: Vec<Option<usize>>,
    /// Fuel charged per output position.
    pub step_costs: Vec<u64>,
}

impl CompilationRecord {
    pub fn object(&self) -> Option<&ObjectSequence> {
        match &self.output {
            CompiledOutput::Object(o) => Some(o),
            CompiledOutput::Intermediate { .. } => None,
        }
    }

    /// Source position of each output position.
    pub fn origins(&self) -> Vec<usize> {
        let mut out = vec![0; self.step_costs.len()];
        for (i, q) in self.position_map.iter().enumerate() {
            if let Some(q) = q {
                out[q - 1] = i + 1;
            }
        }
        out
    }
}

/// Where a chain of jumps starting at a position ends up.
#[derive(Debug, Clone, Copy)]
enum Dest {
    /// A non-jump instruction, or `len + 1` for the end, after `jumps` jumps.
    At { pos: u64, jumps: u64 },
    /// The chain never leaves jumps.
    Loop,
}

/// Compiles `seq` into object code.
pub fn compile_object(seq: &InstructionSequence) -> Result<CompilationRecord, CompileError> {
    let ins = seq.instructions();
    let n = ins.len() as u64;
    let jump_target = |p: u64| -> Option<Result<u64, CompileError>> {
        match &ins[p as usize - 1] {
            Instruction::FwdJump(k) => Some(Ok(p.saturating_add(*k).min(n + 1))),
            Instruction::BwdJump(k) if *k < p => Some(Ok(p - k)),
            Instruction::BwdJump(_) => Some(Err(CompileError::JumpBeforeStart {
                position: p as usize,
            })),
            _ => None,
        }
    };
    for p in 1..=n {
        if let Some(Err(e)) = jump_target(p) {
            return Err(e);
        }
    }
    let resolve = |start: u64| -> Dest {
        let mut p = start;
        let mut jumps = 0;
        while p <= n {
            match jump_target(p) {
                Some(t) => {
                    jumps += 1;
                    if jumps > n {
                        return Dest::Loop;
                    }
                    p = t.expect("checked above");
                }
                None => break,
            }
        }
        Dest::At { pos: p, jumps }
    };

    // positions entered other than by a jump, and reachability overall
    let mut kept = vec![false; n as usize];
    let mut reached = vec![false; n as usize];
    let mut todo: VecDeque<(u64, bool)> = VecDeque::from([(1, false)]);
    while let Some((p, by_jump)) = todo.pop_front() {
        if p < 1 || p > n {
            continue;
        }
        let i = p as usize - 1;
        let is_jump = ins[i].is_jump();
        let keep = !is_jump || !by_jump;
        let first = !reached[i];
        reached[i] = true;
        if keep && !kept[i] {
            kept[i] = true;
        } else if !first {
            continue;
        }
        match jump_target(p) {
            Some(t) => todo.push_back((t.expect("checked above"), true)),
            None => todo.extend(successors(p, &ins[i]).into_iter().map(|q| (q, false))),
        }
    }

    let mut position_map = vec![None; n as usize];
    let mut next = 1;
    for i in 0..n as usize {
        if kept[i] {
            position_map[i] = Some(next);
            next += 1;
        }
    }
    let out_len = next as u64 - 1;
    let mut out = Vec::with_capacity(out_len as usize);
    let mut costs = Vec::with_capacity(out_len as usize);
    for p in 1..=n {
        let i = p as usize - 1;
        let Some(q) = position_map[i] else { continue };
        if ins[i].is_jump() {
            match resolve(p) {
                Dest::At { pos, jumps } => {
                    let t = if pos > n {
                        out_len + 1
                    } else {
                        position_map[pos as usize - 1].expect("chain end is kept") as u64
                    };
                    out.push(ObjectInstruction::AbsJump(t));
                    costs.push(jumps);
                }
                Dest::Loop => {
                    out.push(ObjectInstruction::AbsJump(q as u64));
                    costs.push(1);
                }
            }
        } else {
            out.push(ObjectInstruction::Ins(ins[i].clone()));
            costs.push(1);
        }
    }
    Ok(CompilationRecord {
        source: seq.clone(),
        output: CompiledOutput::Object(ObjectSequence::new(out)),
        compiler_tag: OBJECT_COMPILER_TAG.to_string(),
        position_map,
        step_costs: costs,
    })
}

/// Subject run and the run of the compiled program it derives from.
#[derive(Debug, Clone)]
pub struct CompiledRuns {
    pub subject: Run,
    pub object: Run,
}

fn mirror(target: &Run, subject: Subject, kind: MechanismKind, relation: Relation) -> Run {
    let p = target.clone().into_parts();
    let mut mechanism = p.mechanism;
    mechanism.kind = kind;
    Run::from_parts(RunParts {
        run_id: RunId::fresh(),
        subject,
        mechanism,
        events: p.events,
        status: p.status,
        final_family: p.final_family,
        provenance: Some(Provenance {
            parent: target.run_id().clone(),
            relation,
        }),
    })
}

/// Compiles `seq` to object code and runs the result directly.
pub fn run_compiled_object(
    seq: &InstructionSequence,
    fam: &ServiceFamily,
    cfg: &EngineConfig,
) -> Result<CompiledRuns, CompileError> {
    let source = if cfg.cotarget_reorder {
        crate::engine::cotarget_reorder(seq, fam.iface())
    } else {
        seq.clone()
    };
    let rec = compile_object(&source)?;
    let obj = rec.object().expect("object output").clone();
    let origins = rec.origins();
    // faults report source positions
    let ops: Vec<Op> = obj
        .instructions()
        .iter()
        .zip(&origins)
        .map(|(x, &src)| match x {
            ObjectInstruction::AbsJump(t) => Op::Goto(*t as i64),
            ObjectInstruction::Ins(i) => lower_instruction(src as u64, i, fam.iface()),
        })
        .collect();
    let kind = if cfg.simulation_mode {
        MechanismKind::Simulation
    } else {
        MechanismKind::Direct
    };
    let object = execute(
        Subject::Object(obj),
        &ops,
        Some(&rec.step_costs),
        fam,
        cfg,
        kind,
        &mut |_, _| true,
    );
    let subject = mirror(
        &object,
        Subject::Source(seq.clone()),
        MechanismKind::CompiledObject,
        Relation::CompiledFrom,
    );
    Ok(CompiledRuns { subject, object })
}

/// Compiles `seq` for interpretation: the object form with relative jumps
/// when every operand fits the layout, otherwise `seq` itself, encoded.
pub fn compile_intermediate(
    seq: &InstructionSequence,
    layout: &EncodingLayout,
    iface: &InterfaceSpec,
) -> Result<CompilationRecord, CompileError> {
    if seq.len() > layout.max_len() {
        return Err(InterpError::ProgramTooLong {
            len: seq.len(),
            max: layout.max_len(),
        }
        .into());
    }
    let fits = |p: &InstructionSequence| {
        p.instructions().iter().all(|i| match i {
            Instruction::FwdJump(k) | Instruction::BwdJump(k) => {
                layout.operand_bits() >= 64 || *k >> layout.operand_bits() == 0
            }
            _ => true,
        })
    };
    let (program, position_map, step_costs) = match compile_object(seq) {
        Ok(rec) => {
            let rel = rec.object().expect("object output").to_relative();
            if fits(&rel) {
                (rel, rec.position_map, rec.step_costs)
            } else {
                (seq.clone(), (1..=seq.len()).map(Some).collect(), vec![1; seq.len()])
            }
        }
        Err(_) => (seq.clone(), (1..=seq.len()).map(Some).collect(), vec![1; seq.len()]),
    };
    let encoding = encode_program(&program, layout, iface)?;
    Ok(CompilationRecord {
        source: seq.clone(),
        output: CompiledOutput::Intermediate { program, encoding },
        compiler_tag: INTERMEDIATE_COMPILER_TAG.to_string(),
        position_map,
        step_costs,
    })
}

/// The three runs of the intermediate-code pipeline.
#[derive(Debug, Clone)]
pub struct IntermediateRuns {
    /// Run of the source program, compiled from `intermediate`.
    pub subject: Run,
    /// Interpretation of the intermediate program.
    pub intermediate: Run,
    /// The interpreter's own direct run.
    pub interpreter: Run,
}

/// Runs the intermediate-code pipeline with a given interpreter.
pub fn run_compiled_intermediate_with(
    interp: &Interpreter,
    seq: &InstructionSequence,
    fam: &ServiceFamily,
    cfg: &EngineConfig,
) -> Result<IntermediateRuns, CompileError> {
    let rec = compile_intermediate(seq, interp.layout(), fam.iface())?;
    let CompiledOutput::Intermediate { program, encoding } = &rec.output else {
        unreachable!("intermediate compiler output");
    };
    let InterpretedRuns {
        subject: intermediate,
        interpreter,
    } = interp.run_encoding(
        Subject::Source(program.clone()),
        encoding,
        Some(&rec.step_costs),
        fam,
        cfg,
        MechanismKind::Interpreted,
    );
    let subject = mirror(
        &intermediate,
        Subject::Source(seq.clone()),
        MechanismKind::CompiledIntermediate,
        Relation::CompiledFrom,
    );
    Ok(IntermediateRuns {
        subject,
        intermediate,
        interpreter,
    })
}

/// Compiles `seq` to intermediate code and interprets it with a freshly
/// generated interpreter, certified on a seeded sample first.
pub fn run_compiled_intermediate(
    seq: &InstructionSequence,
    fam: &ServiceFamily,
    layout: &EncodingLayout,
    cfg: &EngineConfig,
) -> Result<IntermediateRuns, CompileError> {
    if seq.len() > layout.max_len() {
        return Err(InterpError::ProgramTooLong {
            len: seq.len(),
            max: layout.max_len(),
        }
        .into());
    }
    let mut interp = Interpreter::generate(fam.iface(), layout)?;
    certify(
        &mut interp,
        &Sample::Random {
            n: crate::interp::DEFAULT_CERTIFICATION_SAMPLE,
            seed: 0,
        },
    )
    .map_err(|e| match e {
        crate::mechanism::CertifyError::Interp(i) => CompileError::Interp(i),
        crate::mechanism::CertifyError::EmptySample => unreachable!("nonempty sample"),
    })?;
    run_compiled_intermediate_with(&interp, seq, fam, cfg)
}
