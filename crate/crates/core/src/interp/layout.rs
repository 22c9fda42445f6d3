//! Register layout for encoded programs, and the encoder/decoder.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::inseq::{BasicAction, Instruction, InstructionSequence};
use crate::service::{is_name_token, InterfaceSpec, Method, ServiceKind};

use super::InterpError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Prefixes {
    pub mem: String,
    pub pc: String,
    pub scratch: String,
}

impl Default for Prefixes {
    fn default() -> Self {
        Prefixes {
            mem: "m".into(),
            pc: "p".into(),
            scratch: "s".into(),
        }
    }
}

/// An instruction with its jump operand erased.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    Padding,
    Halt,
    HaltTrue,
    HaltFalse,
    FwdJump,
    BwdJump,
    Plain(String, Method),
    PosTest(String, Method),
    NegTest(String, Method),
}

impl Shape {
    /// Shape of `ins`, or `None` when its method is not a register method.
    pub fn of(ins: &Instruction) -> Option<Shape> {
        let act = |a: &BasicAction| a.method.parse::<Method>().ok().map(|m| (a.focus.clone(), m));
        Some(match ins {
            Instruction::Plain(a) => {
                let (f, m) = act(a)?;
                Shape::Plain(f, m)
            }
            Instruction::PosTest(a) => {
                let (f, m) = act(a)?;
                Shape::PosTest(f, m)
            }
            Instruction::NegTest(a) => {
                let (f, m) = act(a)?;
                Shape::NegTest(f, m)
            }
            Instruction::FwdJump(_) => Shape::FwdJump,
            Instruction::BwdJump(_) => Shape::BwdJump,
            Instruction::Halt => Shape::Halt,
            Instruction::HaltTrue => Shape::HaltTrue,
            Instruction::HaltFalse => Shape::HaltFalse,
        })
    }
}

/// Opcode table for `iface`: padding is opcode 0, then terminators, jumps,
/// and one opcode per (service, method, steering) in interface order.
pub fn opcode_shapes(iface: &InterfaceSpec) -> Vec<Shape> {
    let mut v = vec![
        Shape::Padding,
        Shape::Halt,
        Shape::HaltTrue,
        Shape::HaltFalse,
        Shape::FwdJump,
        Shape::BwdJump,
    ];
    for s in iface.services() {
        for &m in &s.methods {
            v.push(Shape::Plain(s.name.to_string(), m));
            v.push(Shape::PosTest(s.name.to_string(), m));
            v.push(Shape::NegTest(s.name.to_string(), m));
        }
    }
    v
}

fn bits_for(n: u64) -> u32 {
    // smallest b with 2^b >= n
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

const MAX_OPCODE_BITS: u32 = 16;
const MAX_OPERAND_BITS: u32 = 32;

/// How a program of at most `max_len` instructions sits in co-target
/// registers: slot `j` holds opcode bits then operand bits in
/// `{mem}{j}_{b}`, least significant bit first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodingLayout {
    max_len: usize,
    opcode_bits: u32,
    operand_bits: u32,
    prefixes: Prefixes,
    opcode_table: Vec<Shape>,
}

impl EncodingLayout {
    pub fn new(
        iface: &InterfaceSpec,
        max_len: usize,
        opcode_bits: u32,
        operand_bits: u32,
        prefixes: Prefixes,
    ) -> Result<EncodingLayout, InterpError> {
        let table = opcode_shapes(iface);
        if max_len == 0 {
            return Err(InterpError::LayoutTooSmall("max_len must be at least 1".into()));
        }
        if opcode_bits > MAX_OPCODE_BITS || operand_bits > MAX_OPERAND_BITS {
            return Err(InterpError::LayoutTooSmall(format!(
                "at most {MAX_OPCODE_BITS} opcode and {MAX_OPERAND_BITS} operand bits are supported"
            )));
        }
        if (1u64 << opcode_bits) < table.len() as u64 {
            return Err(InterpError::LayoutTooSmall(format!(
                "{} shapes need {} opcode bits, layout has {opcode_bits}",
                table.len(),
                bits_for(table.len() as u64)
            )));
        }
        if (1u64 << operand_bits) < max_len as u64 {
            return Err(InterpError::LayoutTooSmall(format!(
                "max_len {max_len} needs {} operand bits, layout has {operand_bits}",
                bits_for(max_len as u64)
            )));
        }
        for p in [&prefixes.mem, &prefixes.pc, &prefixes.scratch] {
            if !is_name_token(p) {
                return Err(InterpError::LayoutTooSmall(format!("bad register prefix '{p}'")));
            }
        }
        Ok(EncodingLayout {
            max_len,
            opcode_bits,
            operand_bits,
            prefixes,
            opcode_table: table,
        })
    }

    /// The smallest layout for `iface` and `max_len`, default prefixes.
    pub fn minimal(iface: &InterfaceSpec, max_len: usize) -> Result<EncodingLayout, InterpError> {
        let ob = bits_for(opcode_shapes(iface).len() as u64);
        let mb = bits_for(max_len as u64);
        EncodingLayout::new(iface, max_len, ob, mb, Prefixes::default())
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn opcode_bits(&self) -> u32 {
        self.opcode_bits
    }

    pub fn operand_bits(&self) -> u32 {
        self.operand_bits
    }

    pub fn prefixes(&self) -> &Prefixes {
        &self.prefixes
    }

    pub fn opcode_table(&self) -> &[Shape] {
        &self.opcode_table
    }

    pub fn opcode_of(&self, shape: &Shape) -> Option<u64> {
        self.opcode_table.iter().position(|s| s == shape).map(|o| o as u64)
    }

    /// Width of the program counter register (enough for `1..=max_len`).
    pub fn pc_bits(&self) -> u32 {
        bits_for(self.max_len as u64 + 1)
    }

    pub fn mem_reg(&self, slot: usize, bit: u32) -> String {
        format!("{}{slot}_{bit}", self.prefixes.mem)
    }

    pub fn pc_reg(&self, bit: u32) -> String {
        format!("{}{bit}", self.prefixes.pc)
    }

    pub fn operand_reg(&self, bit: u32) -> String {
        format!("{}_a{bit}", self.prefixes.scratch)
    }

    pub fn temp_reg(&self, bit: u32) -> String {
        format!("{}_t{bit}", self.prefixes.scratch)
    }

    /// Set once at the start of every interpreted instruction.
    pub fn tick_reg(&self) -> String {
        format!("{}_tick", self.prefixes.scratch)
    }

    /// Set when the interpreted program jumps before its first instruction.
    pub fn fault_reg(&self) -> String {
        format!("{}_fault", self.prefixes.scratch)
    }

    /// Every register the interpreter owns, all co-target.
    pub fn register_iface(&self) -> Result<InterfaceSpec, InterpError> {
        let mut names = Vec::new();
        for j in 1..=self.max_len {
            for b in 0..self.opcode_bits + self.operand_bits {
                names.push(self.mem_reg(j, b));
            }
        }
        names.extend((0..self.pc_bits()).map(|b| self.pc_reg(b)));
        names.extend((0..self.operand_bits).map(|b| self.operand_reg(b)));
        names.extend((0..self.pc_bits()).map(|b| self.temp_reg(b)));
        names.push(self.tick_reg());
        names.push(self.fault_reg());
        let mut iface = InterfaceSpec::new();
        for n in names {
            iface
                .insert(&n, ServiceKind::Cotarget, &Method::ALL)
                .map_err(|_| InterpError::NameClash(n.clone()))?;
        }
        Ok(iface)
    }

    pub fn to_file(&self) -> LayoutFile {
        LayoutFile {
            max_len: self.max_len,
            opcode_bits: self.opcode_bits,
            operand_bits: self.operand_bits,
            prefixes: self.prefixes.clone(),
        }
    }
}

/// On-disk `.layout.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutFile {
    pub max_len: usize,
    pub opcode_bits: u32,
    pub operand_bits: u32,
    #[serde(default)]
    pub prefixes: Prefixes,
}

impl LayoutFile {
    pub fn into_layout(self, iface: &InterfaceSpec) -> Result<EncodingLayout, InterpError> {
        EncodingLayout::new(
            iface,
            self.max_len,
            self.opcode_bits,
            self.operand_bits,
            self.prefixes,
        )
    }
}

/// A program stored in the memory registers of a layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramEncoding {
    pub layout: EncodingLayout,
    pub register_values: BTreeMap<String, bool>,
}

pub fn encode_program(
    seq: &InstructionSequence,
    layout: &EncodingLayout,
    iface: &InterfaceSpec,
) -> Result<ProgramEncoding, InterpError> {
    if seq.len() > layout.max_len {
        return Err(InterpError::ProgramTooLong {
            len: seq.len(),
            max: layout.max_len,
        });
    }
    let mut register_values = BTreeMap::new();
    for j in 1..=layout.max_len {
        let (opcode, operand) = match seq.at(j) {
            None => (0, 0),
            Some(ins) => {
                let unencodable = |reason: String| InterpError::UnencodableInstruction {
                    position: j,
                    reason,
                };
                if let Some(a) = ins.action() {
                    if !iface.contains(&a.focus) {
                        return Err(unencodable(format!("'{}' is not in the interface", a.focus)));
                    }
                }
                let opcode = Shape::of(ins)
                    .and_then(|s| layout.opcode_of(&s))
                    .ok_or_else(|| unencodable(format!("no opcode for '{ins}'")))?;
                let operand = match ins {
                    Instruction::FwdJump(k) | Instruction::BwdJump(k) => *k,
                    _ => 0,
                };
                if layout.operand_bits < 64 && operand >> layout.operand_bits != 0 {
                    return Err(unencodable(format!(
                        "operand {operand} does not fit {} bits",
                        layout.operand_bits
                    )));
                }
                (opcode, operand)
            }
        };
        for b in 0..layout.opcode_bits {
            register_values.insert(layout.mem_reg(j, b), (opcode >> b) & 1 == 1);
        }
        for b in 0..layout.operand_bits {
            register_values.insert(
                layout.mem_reg(j, layout.opcode_bits + b),
                (operand >> b) & 1 == 1,
            );
        }
    }
    Ok(ProgramEncoding {
        layout: layout.clone(),
        register_values,
    })
}

/// Reads the program back; decoding stops at the first padding slot.
pub fn decode_program(enc: &ProgramEncoding) -> Result<InstructionSequence, InterpError> {
    let layout = &enc.layout;
    let read = |j: usize, from: u32, n: u32| -> u64 {
        (0..n).fold(0, |acc, b| {
            let bit = enc
                .register_values
                .get(&layout.mem_reg(j, from + b))
                .copied()
                .unwrap_or(false);
            acc | (u64::from(bit) << b)
        })
    };
    let mut out = Vec::new();
    for j in 1..=layout.max_len {
        let opcode = read(j, 0, layout.opcode_bits);
        let operand = read(j, layout.opcode_bits, layout.operand_bits);
        let shape = layout
            .opcode_table
            .get(opcode as usize)
            .ok_or_else(|| InterpError::UnencodableInstruction {
                position: j,
                reason: format!("opcode {opcode} is unassigned"),
            })?;
        let ins = match shape {
            Shape::Padding => break,
            Shape::Halt => Instruction::Halt,
            Shape::HaltTrue => Instruction::HaltTrue,
            Shape::HaltFalse => Instruction::HaltFalse,
            Shape::FwdJump => Instruction::FwdJump(operand),
            Shape::BwdJump => Instruction::BwdJump(operand),
            Shape::Plain(f, m) => Instruction::plain(f, m.as_str()),
            Shape::PosTest(f, m) => Instruction::pos(f, m.as_str()),
            Shape::NegTest(f, m) => Instruction::neg(f, m.as_str()),
        };
        out.push(ins);
    }
    Ok(InstructionSequence::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inseq::parse_program;

    fn iface() -> InterfaceSpec {
        InterfaceSpec::new()
            .with("c1", ServiceKind::Cotarget)
            .unwrap()
            .with("t1", ServiceKind::Target)
            .unwrap()
    }

    #[test]
    fn bit_widths() {
        assert_eq!(bits_for(1), 0);
        assert_eq!(bits_for(2), 1);
        assert_eq!(bits_for(5), 3);
        assert_eq!(bits_for(8), 3);
        assert_eq!(bits_for(9), 4);
        let l = EncodingLayout::minimal(&iface(), 2).unwrap();
        // 6 fixed shapes + 2 services * 3 methods * 3 steerings = 24
        assert_eq!(l.opcode_table().len(), 24);
        assert_eq!(l.opcode_bits(), 5);
        assert_eq!(l.operand_bits(), 1);
        assert_eq!(l.pc_bits(), 2);
    }

    #[test]
    fn encodes_halt_then_padding() {
        let l = EncodingLayout::minimal(&iface(), 2).unwrap();
        let e = encode_program(&parse_program("!t").unwrap(), &l, &iface()).unwrap();
        let op = l.opcode_of(&Shape::HaltTrue).unwrap();
        for b in 0..l.opcode_bits() {
            assert_eq!(e.register_values[&l.mem_reg(1, b)], (op >> b) & 1 == 1);
            assert!(!e.register_values[&l.mem_reg(2, b)]);
        }
        assert_eq!(e.register_values.len(), 2 * 6);
    }

    #[test]
    fn too_long() {
        let l = EncodingLayout::minimal(&iface(), 2).unwrap();
        let err = encode_program(&parse_program("!;!;!").unwrap(), &l, &iface()).unwrap_err();
        assert!(matches!(err, InterpError::ProgramTooLong { len: 3, max: 2 }));
    }

    #[test]
    fn operand_capacity() {
        let l = EncodingLayout::new(&iface(), 2, 5, 1, Prefixes::default()).unwrap();
        let err = encode_program(&parse_program("#3").unwrap(), &l, &iface()).unwrap_err();
        assert!(matches!(err, InterpError::UnencodableInstruction { position: 1, .. }));
        assert!(encode_program(&parse_program("zz.get").unwrap(), &l, &iface()).is_err());
        assert!(encode_program(&parse_program("c1.flip").unwrap(), &l, &iface()).is_err());
    }

    #[test]
    fn layout_too_small() {
        assert!(matches!(
            EncodingLayout::new(&iface(), 2, 4, 1, Prefixes::default()),
            Err(InterpError::LayoutTooSmall(_))
        ));
        assert!(matches!(
            EncodingLayout::new(&iface(), 4, 5, 1, Prefixes::default()),
            Err(InterpError::LayoutTooSmall(_))
        ));
    }

    #[test]
    fn decode_inverts_encode() {
        let l = EncodingLayout::minimal(&iface(), 4).unwrap();
        for src in ["", "!t", "+c1.get ; \\#1 ; -t1.set:f ; #3", "t1.set:t ; !f"] {
            let seq = parse_program(src).unwrap();
            let e = encode_program(&seq, &l, &iface()).unwrap();
            assert_eq!(decode_program(&e).unwrap(), seq, "{src}");
        }
    }

    #[test]
    fn register_clash() {
        let l = EncodingLayout::new(
            &iface(),
            1,
            5,
            0,
            Prefixes {
                mem: "p".into(),
                pc: "p".into(),
                scratch: "s".into(),
            },
        )
        .unwrap();
        // mem "p1_0" and pc "p0" differ, so this particular choice is fine
        assert!(l.register_iface().is_ok());
        let l = EncodingLayout::new(
            &iface(),
            1,
            5,
            0,
            Prefixes {
                mem: "m".into(),
                pc: "s_t".into(),
                scratch: "s".into(),
            },
        )
        .unwrap();
        assert!(matches!(l.register_iface(), Err(InterpError::NameClash(_))));
    }

    #[test]
    fn layout_file_roundtrip() {
        let text = r#"{"max_len":2,"opcode_bits":5,"operand_bits":1,"prefixes":{"mem":"m","pc":"p","scratch":"s"}}"#;
        let f: LayoutFile = serde_json::from_str(text).unwrap();
        let l = f.clone().into_layout(&iface()).unwrap();
        assert_eq!(l.to_file(), f);
        assert_eq!(serde_json::to_string(&f).unwrap(), text);
    }
}
