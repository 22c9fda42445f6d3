#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use pisie::inseq::{parse_program, Instruction, InstructionSequence};
use pisie::inseqex::Inseqex;
use pisie::service::{make_family, InterfaceSpec, ServiceFamily, ServiceKind};
use rand::Rng;

pub fn iface(cot: &[&str], tgt: &[&str]) -> InterfaceSpec {
    let mut i = InterfaceSpec::new();
    for c in cot {
        i = i.with(c, ServiceKind::Cotarget).unwrap();
    }
    for t in tgt {
        i = i.with(t, ServiceKind::Target).unwrap();
    }
    i
}

/// c1, c2 co-targets and t1 target, all false.
pub fn h0() -> ServiceFamily {
    make_family(iface(&["c1", "c2"], &["t1"]), &BTreeMap::new()).unwrap()
}

/// Every start state of `iface`.
pub fn all_states(iface: &InterfaceSpec) -> Vec<ServiceFamily> {
    let n = iface.len();
    let arc = Arc::new(iface.clone());
    (0..1u32 << n)
        .map(|v| ServiceFamily::from_bits(arc.clone(), (0..n).map(|i| (v >> i) & 1 == 1).collect()))
        .collect()
}

pub fn alphabet(src: &str) -> Vec<Instruction> {
    parse_program(src).unwrap().instructions().to_vec()
}

/// Alphabet over {c1, c2, t1} for the exhaustive small-program suites.
pub fn small_alphabet() -> Vec<Instruction> {
    alphabet("+c1.get ; -c2.get ; c1.set:t ; c2.set:f ; t1.set:t ; -t1.get ; #2 ; \\#2 ; !t ; !f")
}

/// Calls `f` on every sequence over `alpha` of length at most `max_len`.
pub fn for_all_programs(alpha: &[Instruction], max_len: usize, mut f: impl FnMut(&InstructionSequence)) {
    let mut idx: Vec<usize> = Vec::new();
    loop {
        let seq: InstructionSequence = idx.iter().map(|&i| alpha[i].clone()).collect::<Vec<_>>().into();
        f(&seq);
        // odometer increment, growing the length when every digit wraps
        let mut k = 0;
        loop {
            if k == idx.len() {
                if idx.len() == max_len {
                    return;
                }
                idx.push(0);
                idx.iter_mut().for_each(|d| *d = 0);
                break;
            }
            idx[k] += 1;
            if idx[k] < alpha.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

pub fn random_program(rng: &mut impl Rng, alpha: &[Instruction], max_len: usize) -> InstructionSequence {
    let len = rng.gen_range(0..=max_len);
    (0..len)
        .map(|_| alpha[rng.gen_range(0..alpha.len())].clone())
        .collect::<Vec<_>>()
        .into()
}

/// A closed expression over `alpha`; variables are only used inside the
/// scope of their `let`.
pub fn random_inseqex(rng: &mut impl Rng, alpha: &[Instruction], depth: u32, vars: &mut Vec<String>) -> Inseqex {
    let choice = if depth == 0 { 0 } else { rng.gen_range(0..6) };
    match choice {
        0 | 1 => {
            if !vars.is_empty() && rng.gen_bool(0.3) {
                Inseqex::Var(vars[rng.gen_range(0..vars.len())].clone())
            } else {
                Inseqex::Prim(alpha[rng.gen_range(0..alpha.len())].clone())
            }
        }
        2 | 3 => Inseqex::concat(
            random_inseqex(rng, alpha, depth - 1, vars),
            random_inseqex(rng, alpha, depth - 1, vars),
        ),
        4 => Inseqex::repeat(random_inseqex(rng, alpha, depth - 1, vars), rng.gen_range(1..=4)),
        _ => {
            let v = format!("v{}", vars.len());
            let bound = random_inseqex(rng, alpha, depth - 1, vars);
            vars.push(v.clone());
            let body = random_inseqex(rng, alpha, depth - 1, vars);
            vars.pop();
            Inseqex::let_in(&v, bound, body)
        }
    }
}

/// Reference expansion written against the expression tree alone.
pub fn naive_expand(e: &Inseqex) -> Vec<Instruction> {
    fn go(e: &Inseqex, env: &mut Vec<(String, Vec<Instruction>)>) -> Vec<Instruction> {
        match e {
            Inseqex::Prim(i) => vec![i.clone()],
            Inseqex::Var(v) => env.iter().rev().find(|(n, _)| n == v).unwrap().1.clone(),
            Inseqex::Concat(a, b) => {
                let mut x = go(a, env);
                x.extend(go(b, env));
                x
            }
            Inseqex::Repeat(b, n) => {
                let once = go(b, env);
                (0..*n).flat_map(|_| once.iter().cloned()).collect()
            }
            Inseqex::Let(v, x, b) => {
                let bound = go(x, env);
                env.push((v.clone(), bound));
                let r = go(b, env);
                env.pop();
                r
            }
        }
    }
    go(e, &mut Vec::new())
}
