//! Instruction sequence expressions: composition, repetition and bound
//! variables, their expansion, and runs that materialize only fragments of
//! the expansion.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::engine::{lower_instruction, EngineConfig, Exit, Leave, Limits, Machine};
use crate::inseq::{parse_instruction, Instruction, InstructionSequence, SyntaxError};
use crate::mechanism::{MachineSpec, MechanismDescriptor, MechanismKind};
use crate::run::{DivergenceCause, Provenance, Relation, Run, RunId, RunParts, Subject, TerminationStatus};
use crate::service::{is_name_token, ServiceFamily};

/// Default explosion limit for [`expand`].
pub const DEFAULT_BOUND: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Inseqex {
    Prim(Instruction),
    Concat(Box<Inseqex>, Box<Inseqex>),
    Repeat(Box<Inseqex>, u64),
    Let(String, Box<Inseqex>, Box<Inseqex>),
    Var(String),
}

impl Inseqex {
    pub fn concat(a: Inseqex, b: Inseqex) -> Inseqex {
        Inseqex::Concat(Box::new(a), Box::new(b))
    }

    pub fn repeat(body: Inseqex, count: u64) -> Inseqex {
        Inseqex::Repeat(Box::new(body), count)
    }

    pub fn let_in(var: &str, bound: Inseqex, body: Inseqex) -> Inseqex {
        Inseqex::Let(var.to_string(), Box::new(bound), Box::new(body))
    }

    /// Left-nested composition of a nonempty list.
    pub fn seq(items: impl IntoIterator<Item = Inseqex>) -> Option<Inseqex> {
        items.into_iter().reduce(Inseqex::concat)
    }

    /// The first variable not bound by an enclosing `let`.
    pub fn free_var(&self) -> Option<&str> {
        fn go<'a>(e: &'a Inseqex, bound: &mut Vec<&'a str>) -> Option<&'a str> {
            match e {
                Inseqex::Prim(_) => None,
                Inseqex::Var(v) => (!bound.contains(&v.as_str())).then_some(v.as_str()),
                Inseqex::Concat(a, b) => go(a, bound).or_else(|| go(b, bound)),
                Inseqex::Repeat(b, _) => go(b, bound),
                Inseqex::Let(v, x, b) => go(x, bound).or_else(|| {
                    bound.push(v);
                    let r = go(b, bound);
                    bound.pop();
                    r
                }),
            }
        }
        go(self, &mut Vec::new())
    }

    /// Exact length of the expansion, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        fn go(e: &Inseqex, env: &mut Vec<(String, u128)>) -> u128 {
            match e {
                Inseqex::Prim(_) => 1,
                Inseqex::Var(v) => env
                    .iter()
                    .rev()
                    .find(|(n, _)| n == v)
                    .map_or(0, |(_, s)| *s),
                Inseqex::Concat(a, b) => go(a, env).saturating_add(go(b, env)),
                Inseqex::Repeat(b, n) => go(b, env).saturating_mul(u128::from(*n)),
                Inseqex::Let(v, x, b) => {
                    let s = go(x, env);
                    env.push((v.clone(), s));
                    let r = go(b, env);
                    env.pop();
                    r
                }
            }
        }
        go(self, &mut Vec::new())
    }
}

fn needs_parens(e: &Inseqex) -> bool {
    matches!(e, Inseqex::Let(..))
}

impl fmt::Display for Inseqex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Inseqex::Prim(i) => i.fmt(f),
            Inseqex::Var(v) => f.write_str(v),
            Inseqex::Concat(a, b) => {
                for (k, x) in [a, b].into_iter().enumerate() {
                    if k > 0 {
                        f.write_str(" ; ")?;
                    }
                    if needs_parens(x) {
                        write!(f, "({x})")?;
                    } else {
                        x.fmt(f)?;
                    }
                }
                Ok(())
            }
            Inseqex::Repeat(b, n) => write!(f, "({b})^{n}"),
            Inseqex::Let(v, x, b) => write!(f, "let {v} = {x} in {b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InseqexError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("unbound variable '{0}'")]
    UnboundVariable(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Open,
    Close,
    Semi,
    Caret,
    Eq,
    Word(String),
}

fn tokenize(text: &str) -> Vec<(Tok, usize, usize)> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('%').next().unwrap_or("");
        let mut word = String::new();
        let mut word_col = 0;
        let flush = |w: &mut String, col: usize, out: &mut Vec<(Tok, usize, usize)>| {
            if !w.is_empty() {
                out.push((Tok::Word(std::mem::take(w)), ln + 1, col));
            }
        };
        for (col, c) in line.chars().enumerate() {
            let t = match c {
                '(' => Some(Tok::Open),
                ')' => Some(Tok::Close),
                ';' => Some(Tok::Semi),
                '^' => Some(Tok::Caret),
                '=' => Some(Tok::Eq),
                _ => None,
            };
            if t.is_some() || c.is_whitespace() {
                flush(&mut word, word_col, &mut out);
                if let Some(t) = t {
                    out.push((t, ln + 1, col + 1));
                }
            } else {
                if word.is_empty() {
                    word_col = col + 1;
                }
                word.push(c);
            }
        }
        flush(&mut word, word_col, &mut out);
        out.push((Tok::Semi, ln + 1, line.chars().count() + 1));
    }
    out
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.0)
    }

    fn err(&self, message: impl Into<String>) -> SyntaxError {
        let (line, column) = self
            .toks
            .get(self.at)
            .or(self.toks.last())
            .map_or((1, 1), |t| (t.1, t.2));
        SyntaxError {
            line,
            column,
            message: message.into(),
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x == w)
    }

    fn skip_semis(&mut self) {
        while self.peek() == Some(&Tok::Semi) {
            self.at += 1;
        }
    }

    /// `item (; item)*`, stopping before `)`, `in` or the end.
    fn sequence(&mut self) -> Result<Inseqex, SyntaxError> {
        let mut items = Vec::new();
        loop {
            self.skip_semis();
            match self.peek() {
                None | Some(Tok::Close) => break,
                _ if self.is_word("in") => break,
                _ => {}
            }
            if self.is_word("let") {
                items.push(self.let_expr()?);
                break;
            }
            items.push(self.item()?);
            match self.peek() {
                Some(Tok::Semi) | None | Some(Tok::Close) => {}
                _ if self.is_word("in") => {}
                _ => return Err(self.err("expected ';'")),
            }
        }
        Inseqex::seq(items).ok_or_else(|| self.err("empty expression"))
    }

    fn let_expr(&mut self) -> Result<Inseqex, SyntaxError> {
        self.at += 1;
        let var = match self.peek() {
            Some(Tok::Word(w)) if is_var(w) => w.clone(),
            _ => return Err(self.err("expected a variable name after 'let'")),
        };
        self.at += 1;
        if self.peek() != Some(&Tok::Eq) {
            return Err(self.err("expected '='"));
        }
        self.at += 1;
        let bound = self.sequence()?;
        if !self.is_word("in") {
            return Err(self.err("expected 'in'"));
        }
        self.at += 1;
        let body = self.sequence()?;
        Ok(Inseqex::let_in(&var, bound, body))
    }

    fn item(&mut self) -> Result<Inseqex, SyntaxError> {
        match self.peek().cloned() {
            Some(Tok::Open) => {
                self.at += 1;
                let inner = self.sequence()?;
                if self.peek() != Some(&Tok::Close) {
                    return Err(self.err("expected ')'"));
                }
                self.at += 1;
                if self.peek() != Some(&Tok::Caret) {
                    return Ok(inner);
                }
                self.at += 1;
                let n = match self.peek() {
                    Some(Tok::Word(w)) => w
                        .parse::<u64>()
                        .ok()
                        .filter(|n| *n >= 1)
                        .ok_or_else(|| self.err(format!("bad repeat count '{w}'")))?,
                    _ => return Err(self.err("expected a repeat count after '^'")),
                };
                self.at += 1;
                Ok(Inseqex::repeat(inner, n))
            }
            Some(Tok::Word(w)) => {
                self.at += 1;
                if is_var(&w) {
                    return Ok(Inseqex::Var(w));
                }
                parse_instruction(&w).map(Inseqex::Prim).map_err(|m| {
                    self.at -= 1;
                    self.err(m)
                })
            }
            _ => Err(self.err("expected an instruction, a variable or '('")),
        }
    }
}

fn is_var(w: &str) -> bool {
    is_name_token(w) && w != "let" && w != "in"
}

/// Parses a closed expression.
pub fn parse_inseqex(text: &str) -> Result<Inseqex, InseqexError> {
    let mut p = Parser {
        toks: tokenize(text),
        at: 0,
    };
    let e = p.sequence()?;
    p.skip_semis();
    if p.peek().is_some() {
        return Err(p.err("unexpected input").into());
    }
    if let Some(v) = e.free_var() {
        return Err(InseqexError::UnboundVariable(v.to_string()));
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExpansionOutcome {
    Expanded { seq: InstructionSequence, size: u128 },
    Explosion { lower_bound: u128, bound: u128 },
}

/// Flattens `e` when its exact size is at most `bound`.
pub fn expand(e: &Inseqex, bound: u128) -> Result<ExpansionOutcome, InseqexError> {
    if let Some(v) = e.free_var() {
        return Err(InseqexError::UnboundVariable(v.to_string()));
    }
    let size = e.size();
    if size > bound {
        return Ok(ExpansionOutcome::Explosion {
            lower_bound: size,
            bound,
        });
    }
    let dag = Dag::build(e);
    let seq: Vec<Instruction> = (0..size as u64).map(|i| dag.fetch(i)).collect();
    Ok(ExpansionOutcome::Expanded {
        seq: InstructionSequence::new(seq),
        size,
    })
}

/// The expression with variables replaced by shared nodes, for random
/// access into the expansion.
struct Dag {
    nodes: Vec<Node>,
    root: usize,
}

enum Node {
    Prim(Instruction),
    Concat { a: usize, b: usize, a_size: u128 },
    Repeat { body: usize, body_size: u128 },
}

impl Dag {
    fn build(e: &Inseqex) -> Dag {
        let mut nodes = Vec::new();
        let mut sizes = Vec::new();
        let mut cache = HashMap::new();
        let root = Dag::add(e, &mut Vec::new(), &mut nodes, &mut sizes, &mut cache);
        Dag { nodes, root }
    }

    fn add(
        e: &Inseqex,
        env: &mut Vec<(String, usize)>,
        nodes: &mut Vec<Node>,
        sizes: &mut Vec<u128>,
        cache: &mut HashMap<Instruction, usize>,
    ) -> usize {
        fn push(n: Node, s: u128, nodes: &mut Vec<Node>, sizes: &mut Vec<u128>) -> usize {
            nodes.push(n);
            sizes.push(s);
            nodes.len() - 1
        }
        match e {
            Inseqex::Prim(i) => {
                if let Some(&id) = cache.get(i) {
                    return id;
                }
                let id = push(Node::Prim(i.clone()), 1, nodes, sizes);
                cache.insert(i.clone(), id);
                id
            }
            Inseqex::Var(v) => {
                env.iter()
                    .rev()
                    .find(|(n, _)| n == v)
                    .expect("closed expression")
                    .1
            }
            Inseqex::Concat(x, y) => {
                let a = Dag::add(x, env, nodes, sizes, cache);
                let b = Dag::add(y, env, nodes, sizes, cache);
                let (sa, sb) = (sizes[a], sizes[b]);
                push(Node::Concat { a, b, a_size: sa }, sa.saturating_add(sb), nodes, sizes)
            }
            Inseqex::Repeat(x, n) => {
                let body = Dag::add(x, env, nodes, sizes, cache);
                let s = sizes[body];
                push(Node::Repeat { body, body_size: s }, s.saturating_mul(u128::from(*n)), nodes, sizes)
            }
            Inseqex::Let(v, x, b) => {
                let bound = Dag::add(x, env, nodes, sizes, cache);
                env.push((v.clone(), bound));
                let r = Dag::add(b, env, nodes, sizes, cache);
                env.pop();
                r
            }
        }
    }

    /// Instruction at 0-based offset `i` of the expansion.
    fn fetch(&self, i: u64) -> Instruction {
        let mut id = self.root;
        let mut i = u128::from(i);
        loop {
            match &self.nodes[id] {
                Node::Prim(ins) => return ins.clone(),
                Node::Concat { a, b, a_size } => {
                    if i < *a_size {
                        id = *a;
                    } else {
                        i -= a_size;
                        id = *b;
                    }
                }
                Node::Repeat { body, body_size } => {
                    i %= body_size;
                    id = *body;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JitError {
    #[error(transparent)]
    Inseqex(#[from] InseqexError),
    #[error("window must be at least 1")]
    EmptyWindow,
    #[error("expansion has {0} instructions, more than positions can address")]
    TooLarge(u128),
}

/// A fragmented run and the direct run of the fragments it was built from.
#[derive(Debug, Clone)]
pub struct FragmentedRuns {
    pub subject: Run,
    pub host: Run,
    pub fragments: usize,
    /// Most instructions held materialized at any one time.
    pub max_materialized: usize,
}

/// Largest expansion a fragmented run can address.
pub const MAX_POSITIONS: u128 = 1 << 62;

/// Runs `e` by materializing `window` instructions of its expansion at a
/// time and running each fragment directly until control leaves it.
pub fn run_fragmented(
    e: &Inseqex,
    fam: &ServiceFamily,
    window: usize,
    cfg: &EngineConfig,
) -> Result<FragmentedRuns, JitError> {
    if window == 0 {
        return Err(JitError::EmptyWindow);
    }
    if let Some(v) = e.free_var() {
        return Err(InseqexError::UnboundVariable(v.to_string()).into());
    }
    let total = e.size();
    if total > MAX_POSITIONS {
        return Err(JitError::TooLarge(total));
    }
    let n = total as u64;
    let dag = Dag::build(e);
    let start = fam.reset_cotargets();
    let mut m = Machine::new(fam.iface(), start.bits().to_vec(), cfg.simulation_mode);
    let limits = Limits {
        fuel: cfg.fuel,
        costs: None,
        cycle_detection: cfg.cycle_detection,
        window: None,
        leave: Leave::Exit,
    };
    let mut host = Vec::new();
    let mut fragments = 0;
    let mut max_materialized = 0;
    let mut vp: u64 = 1;
    let mut lo: u64 = 1;
    let status = loop {
        if vp > n {
            break TerminationStatus::Terminated(None);
        }
        let hi = (lo + window as u64 - 1).min(n);
        let ops: Vec<_> = (lo..=hi)
            .map(|v| {
                let ins = dag.fetch(v - 1);
                let op = lower_instruction(v - lo + 1, &ins, fam.iface());
                host.push(ins);
                op
            })
            .collect();
        fragments += 1;
        max_materialized = max_materialized.max(ops.len());
        m.note(format!("fragment [{lo},{hi}]"));
        m.origin = lo as i64 - 1;
        let exit = m.run(&ops, (vp - lo + 1) as i64, &limits, &mut |_, _| true);
        drop(ops);
        match exit {
            Exit::Left { from, to } => {
                let vfrom = from as u64 + lo - 1;
                let vto = to as i128 + lo as i128 - 1;
                if vto < 1 {
                    break TerminationStatus::Fault(
                        crate::engine::FaultReason::JumpBeforeStart { position: vfrom }.to_string(),
                    );
                }
                vp = vto as u64;
                lo = if !dag.fetch(vfrom - 1).is_jump() {
                    vp
                } else {
                    vp.saturating_sub((window as u64 - 1) / 2).max(1)
                };
            }
            Exit::Halted(v) => break TerminationStatus::Terminated(v),
            Exit::OutOfFuel | Exit::Stopped => break TerminationStatus::Divergence(DivergenceCause::Fuel),
            Exit::Cycle => break TerminationStatus::Divergence(DivergenceCause::Cycle),
            Exit::Fault(r) => break TerminationStatus::Fault(r.shifted(lo - 1).to_string()),
            Exit::FellOff => unreachable!("fragments hand control back"),
        }
    };
    let final_family = ServiceFamily::from_parts(fam.iface_arc().clone(), m.state, start.initial_bits().to_vec());
    let machine = MachineSpec::register_machine(window as u64, fam.iface_arc().clone());
    let host_run = Run::from_parts(RunParts {
        run_id: RunId::fresh(),
        subject: Subject::Source(InstructionSequence::new(host).with_name("fragments")),
        mechanism: MechanismDescriptor::new(MechanismKind::Direct, machine.clone()),
        events: m.events.clone(),
        status: status.clone(),
        final_family: final_family.clone(),
        provenance: None,
    });
    let subject = Run::from_parts(RunParts {
        run_id: RunId::fresh(),
        subject: Subject::Expression(e.clone()),
        mechanism: MechanismDescriptor::new(MechanismKind::JitFragments, machine),
        events: m.events,
        status,
        final_family,
        provenance: Some(Provenance {
            parent: host_run.run_id().clone(),
            relation: Relation::CompiledFrom,
        }),
    });
    Ok(FragmentedRuns {
        subject,
        host: host_run,
        fragments,
        max_materialized,
    })
}
