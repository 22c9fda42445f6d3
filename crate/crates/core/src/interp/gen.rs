//! Generation of the interpreter instruction sequence.
//!
//! The generated program is a fetch-decode-dispatch loop:
//!
//! ```text
//! prologue   p := 1
//! LOOP       decision tree over the pc bits selects slot j
//! slot j     decision tree over the opcode bits of slot j; jump shapes first
//!            copy their operand bits into the scratch operand registers
//! handler    tick, then the subject action and a pc increment, a terminator,
//!            or pc arithmetic for jumps, then back to LOOP
//! ```
//!
//! Control transfers are written against labels and resolved to relative
//! jumps at the end.

use crate::inseq::{Instruction, InstructionSequence};
use crate::service::{InterfaceSpec, Method};

use super::layout::{EncodingLayout, Shape};
use super::InterpError;

type Label = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Item {
    Ins(Instruction),
    Jump(Label),
    Mark(Label),
}

#[derive(Default)]
struct Asm {
    items: Vec<Item>,
    labels: usize,
}

impl Asm {
    fn label(&mut self) -> Label {
        self.labels += 1;
        self.labels - 1
    }

    fn mark(&mut self, l: Label) {
        self.items.push(Item::Mark(l));
    }

    fn ins(&mut self, i: Instruction) {
        self.items.push(Item::Ins(i));
    }

    fn plain(&mut self, reg: &str, m: Method) {
        self.ins(Instruction::plain(reg, m.as_str()));
    }

    fn set(&mut self, reg: &str, v: bool) {
        self.plain(reg, if v { Method::SetTrue } else { Method::SetFalse });
    }

    /// `+reg.get`: the next item runs when `reg` holds true.
    fn if_true(&mut self, reg: &str) {
        self.ins(Instruction::pos(reg, Method::Get.as_str()));
    }

    fn jump(&mut self, l: Label) {
        self.items.push(Item::Jump(l));
    }

    /// Emits code into a separate item list sharing this label space.
    fn block(&mut self, f: impl FnOnce(&mut Asm)) -> Vec<Item> {
        let mut sub = Asm {
            items: Vec::new(),
            labels: self.labels,
        };
        f(&mut sub);
        self.labels = sub.labels;
        sub.items
    }

    /// Branches on `regs` (most significant first) to `leaves[value]`,
    /// sharing a subtree whenever all its leaves are identical.
    fn tree(&mut self, regs: &[String], leaves: &[Vec<Item>]) {
        debug_assert_eq!(leaves.len(), 1 << regs.len());
        if leaves.iter().all(|l| *l == leaves[0]) {
            self.items.extend(leaves[0].iter().cloned());
            return;
        }
        let half = leaves.len() / 2;
        let one = self.label();
        self.if_true(&regs[0]);
        self.jump(one);
        self.tree(&regs[1..], &leaves[..half]);
        self.mark(one);
        self.tree(&regs[1..], &leaves[half..]);
    }

    fn finish(self) -> Vec<Instruction> {
        let mut at = vec![0u64; self.labels];
        let mut pos = 1u64;
        for item in &self.items {
            match item {
                Item::Mark(l) => at[*l] = pos,
                _ => pos += 1,
            }
        }
        let mut out = Vec::with_capacity(pos as usize - 1);
        for item in self.items {
            let here = out.len() as u64 + 1;
            match item {
                Item::Mark(_) => {}
                Item::Ins(i) => out.push(i),
                Item::Jump(l) => {
                    let t = at[l];
                    debug_assert_ne!(t, here, "label resolves onto its own jump");
                    out.push(if t > here {
                        Instruction::FwdJump(t - here)
                    } else {
                        Instruction::BwdJump(here - t)
                    });
                }
            }
        }
        out
    }
}

struct Gen {
    asm: Asm,
    pc: Vec<String>,
    arg: Vec<String>,
    tmp: Vec<String>,
    tick: String,
    fault: String,
    fwd: Label,
    bwd: Label,
}

impl Gen {
    /// `p_b += 1` with the carry chosen between two continuations.
    fn inc_bit(&mut self, b: usize, no_carry: Label, carry: Label) {
        let was_one = self.asm.label();
        self.asm.if_true(&self.pc[b]);
        self.asm.jump(was_one);
        self.asm.set(&self.pc[b], true);
        self.asm.jump(no_carry);
        self.asm.mark(was_one);
        self.asm.set(&self.pc[b], false);
        self.asm.jump(carry);
    }

    /// `pc += 2^from`, then LOOP; overflow means the pc left the program.
    fn increment(&mut self, entry: Label, from: usize, lp: Label) {
        self.asm.mark(entry);
        let n = self.pc.len();
        let mut next = self.asm.label();
        for b in from..n {
            let after = self.asm.label();
            if b > from {
                self.asm.mark(next);
            }
            self.inc_bit(b, lp, after);
            next = after;
        }
        if from < n {
            self.asm.mark(next);
        }
        self.asm.ins(Instruction::Halt);
    }

    /// `pc += operand`, then LOOP.
    fn add(&mut self, lp: Label) {
        let n = self.pc.len();
        let m = self.arg.len();
        let st: Vec<[Label; 2]> = (0..=n).map(|_| [self.asm.label(), self.asm.label()]).collect();
        let overflow = self.asm.label();
        self.asm.mark(self.fwd);
        self.asm.ins(Instruction::plain(&self.tick, Method::SetTrue.as_str()));
        for b in 0..n {
            self.asm.mark(st[b][0]);
            if b < m {
                let a1 = self.asm.label();
                self.asm.if_true(&self.arg[b]);
                self.asm.jump(a1);
                self.asm.jump(st[b + 1][0]);
                self.asm.mark(a1);
                self.inc_bit(b, st[b + 1][0], st[b + 1][1]);
            } else {
                self.asm.jump(st[b + 1][0]);
            }
            self.asm.mark(st[b][1]);
            if b < m {
                let a1 = self.asm.label();
                self.asm.if_true(&self.arg[b]);
                self.asm.jump(a1);
                self.inc_bit(b, st[b + 1][0], st[b + 1][1]);
                self.asm.mark(a1);
                self.asm.jump(st[b + 1][1]);
            } else {
                self.inc_bit(b, st[b + 1][0], st[b + 1][1]);
            }
        }
        self.asm.mark(st[n][0]);
        for b in n..m {
            self.asm.if_true(&self.arg[b]);
            self.asm.jump(overflow);
        }
        self.asm.jump(lp);
        self.asm.mark(st[n][1]);
        self.asm.mark(overflow);
        self.asm.ins(Instruction::Halt);
    }

    /// `pc -= operand`, faulting when the result is below 1, then LOOP.
    fn sub(&mut self, lp: Label) {
        let n = self.pc.len();
        let m = self.arg.len();
        let st: Vec<[Label; 2]> = (0..=n).map(|_| [self.asm.label(), self.asm.label()]).collect();
        let fault = self.asm.label();
        let copy = self.asm.label();
        self.asm.mark(self.bwd);
        self.asm.ins(Instruction::plain(&self.tick, Method::SetTrue.as_str()));
        for b in 0..n {
            for borrow in [0usize, 1] {
                self.asm.mark(st[b][borrow]);
                let p1 = self.asm.label();
                self.asm.if_true(&self.pc[b]);
                self.asm.jump(p1);
                self.sub_leaves(b, 0, borrow, &st);
                self.asm.mark(p1);
                self.sub_leaves(b, 1, borrow, &st);
            }
        }
        self.asm.mark(st[n][0]);
        for b in n..m {
            self.asm.if_true(&self.arg[b]);
            self.asm.jump(fault);
        }
        for b in 0..n {
            self.asm.if_true(&self.tmp[b]);
            self.asm.jump(copy);
        }
        self.asm.jump(fault);
        self.asm.mark(st[n][1]);
        self.asm.mark(fault);
        self.asm.set(&self.fault, true);
        self.asm.ins(Instruction::Halt);
        self.asm.mark(copy);
        for b in 0..n {
            self.asm.set(&self.pc[b], false);
            self.asm.if_true(&self.tmp[b]);
            self.asm.set(&self.pc[b], true);
        }
        self.asm.jump(lp);
    }

    fn sub_leaves(&mut self, b: usize, p: i32, borrow: usize, st: &[[Label; 2]]) {
        let leaf = |g: &mut Gen, a: i32| {
            let d = p - a - borrow as i32;
            g.asm.set(&g.tmp[b], d.rem_euclid(2) == 1);
            g.asm.jump(st[b + 1][usize::from(d < 0)]);
        };
        if b < self.arg.len() {
            let a1 = self.asm.label();
            self.asm.if_true(&self.arg[b]);
            self.asm.jump(a1);
            leaf(self, 0);
            self.asm.mark(a1);
            leaf(self, 1);
        } else {
            leaf(self, 0);
        }
    }
}

/// Generates the interpreter for programs over `iface` stored in `layout`.
pub fn generate_interpreter(
    iface: &InterfaceSpec,
    layout: &EncodingLayout,
) -> Result<InstructionSequence, InterpError> {
    let regs = layout.register_iface()?;
    for s in iface.services() {
        if regs.contains(&s.name) {
            return Err(InterpError::NameClash(s.name.to_string()));
        }
    }
    if layout.opcode_table() != super::layout::opcode_shapes(iface).as_slice() {
        return Err(InterpError::InterfaceMismatch(
            "layout was built for a different interface".into(),
        ));
    }
    let n = layout.pc_bits() as usize;
    let mut g = Gen {
        asm: Asm::default(),
        pc: (0..n as u32).map(|b| layout.pc_reg(b)).collect(),
        arg: (0..layout.operand_bits()).map(|b| layout.operand_reg(b)).collect(),
        tmp: (0..n as u32).map(|b| layout.temp_reg(b)).collect(),
        tick: layout.tick_reg(),
        fault: layout.fault_reg(),
        fwd: 0,
        bwd: 0,
    };
    let lp = g.asm.label();
    let inc1 = g.asm.label();
    let inc2 = g.asm.label();
    g.fwd = g.asm.label();
    g.bwd = g.asm.label();
    let table = layout.opcode_table().to_vec();
    let handlers: Vec<Label> = table.iter().map(|_| g.asm.label()).collect();

    for b in 0..n {
        g.asm.set(&g.pc[b], b == 0);
    }
    g.asm.mark(lp);

    // fetch: pc value v selects slot v
    let pc_msb: Vec<String> = g.pc.iter().rev().cloned().collect();
    let slots = layout.max_len();
    let slot_code: Vec<Vec<Item>> = (1..=slots)
        .map(|j| {
            let ob = layout.opcode_bits();
            let op_msb: Vec<String> = (0..ob).rev().map(|b| layout.mem_reg(j, b)).collect();
            let leaves: Vec<Vec<Item>> = (0..1usize << ob)
                .map(|o| match table.get(o) {
                    None | Some(Shape::Padding) => vec![Item::Ins(Instruction::Halt)],
                    Some(s @ (Shape::FwdJump | Shape::BwdJump)) => {
                        let mut v = Vec::new();
                        for b in 0..layout.operand_bits() {
                            let a = layout.operand_reg(b);
                            v.push(Item::Ins(Instruction::plain(&a, Method::SetFalse.as_str())));
                            v.push(Item::Ins(Instruction::pos(
                                &layout.mem_reg(j, ob + b),
                                Method::Get.as_str(),
                            )));
                            v.push(Item::Ins(Instruction::plain(&a, Method::SetTrue.as_str())));
                        }
                        v.push(Item::Jump(if *s == Shape::FwdJump { g.fwd } else { g.bwd }));
                        v
                    }
                    Some(_) => vec![Item::Jump(handlers[o])],
                })
                .collect();
            g.asm.block(|a| a.tree(&op_msb, &leaves))
        })
        .collect();
    let fetch: Vec<Vec<Item>> = (0..1usize << n)
        .map(|v| {
            if v == 0 || v > slots {
                vec![Item::Ins(Instruction::Halt)]
            } else {
                slot_code[v - 1].clone()
            }
        })
        .collect();
    g.asm.tree(&pc_msb, &fetch);

    for (o, shape) in table.iter().enumerate() {
        let tick = g.tick.clone();
        let body = match shape {
            Shape::Padding | Shape::FwdJump | Shape::BwdJump => continue,
            Shape::Halt => vec![Instruction::Halt],
            Shape::HaltTrue => vec![Instruction::HaltTrue],
            Shape::HaltFalse => vec![Instruction::HaltFalse],
            Shape::Plain(f, m) => vec![Instruction::plain(f, m.as_str())],
            Shape::PosTest(f, m) => vec![Instruction::pos(f, m.as_str())],
            Shape::NegTest(f, m) => vec![Instruction::neg(f, m.as_str())],
        };
        g.asm.mark(handlers[o]);
        g.asm.plain(&tick, Method::SetTrue);
        let tested = matches!(shape, Shape::PosTest(..) | Shape::NegTest(..));
        let acts = matches!(shape, Shape::Plain(..)) || tested;
        for i in body {
            g.asm.ins(i);
        }
        if acts {
            g.asm.jump(inc1);
        }
        if tested {
            g.asm.jump(inc2);
        }
    }
    g.increment(inc1, 0, lp);
    g.increment(inc2, 1, lp);
    g.add(lp);
    g.sub(lp);
    Ok(InstructionSequence::new(g.asm.finish()).with_name("interpreter"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inseq::{render_program, validate};
    use crate::service::ServiceKind;

    #[test]
    fn labels_resolve_both_ways() {
        let mut a = Asm::default();
        let top = a.label();
        let end = a.label();
        a.mark(top);
        a.ins(Instruction::Halt);
        a.jump(end);
        a.jump(top);
        a.mark(end);
        a.ins(Instruction::HaltTrue);
        assert_eq!(
            a.finish(),
            vec![
                Instruction::Halt,
                Instruction::FwdJump(2),
                Instruction::BwdJump(2),
                Instruction::HaltTrue
            ]
        );
    }

    #[test]
    fn identical_leaves_share_code() {
        let mut a = Asm::default();
        let regs = vec!["x".to_string(), "y".to_string()];
        let halt = vec![Item::Ins(Instruction::Halt)];
        a.tree(&regs, &[halt.clone(), halt.clone(), halt.clone(), halt]);
        assert_eq!(a.finish(), vec![Instruction::Halt]);
    }

    #[test]
    fn generated_program_is_valid_and_deterministic() {
        let iface = InterfaceSpec::new()
            .with("c1", ServiceKind::Cotarget)
            .unwrap()
            .with("t1", ServiceKind::Target)
            .unwrap();
        let layout = EncodingLayout::minimal(&iface, 2).unwrap();
        let y = generate_interpreter(&iface, &layout).unwrap();
        let full = iface.union(&layout.register_iface().unwrap()).unwrap();
        let report = validate(&y, &full);
        assert!(report.ok, "{:?}", report.issues);
        let again = generate_interpreter(&iface, &layout).unwrap();
        assert_eq!(render_program(&y), render_program(&again));
        let bigger = generate_interpreter(&iface, &EncodingLayout::minimal(&iface, 4).unwrap()).unwrap();
        assert!(bigger.len() > y.len());
    }
}
