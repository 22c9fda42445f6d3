//! Instruction sequences: syntax, parsing, rendering, and static validation.
//!
//! Surface syntax (`.isq`), one instruction per statement:
//!
//! | form      | meaning                                         |
//! |-----------|-------------------------------------------------|
//! | `f.m`     | perform `m` on service `f`, continue            |
//! | `+f.m`    | perform, continue on `true`, skip one on `false`|
//! | `-f.m`    | perform, continue on `false`, skip one on `true`|
//! | `#k`      | jump `k` instructions forward                   |
//! | `\#k`     | jump `k` instructions backward                  |
//! | `!`       | terminate                                       |
//! | `!t` `!f` | terminate delivering `true` / `false`           |
//!
//! Statements are separated by `;` or newlines and `%` starts a comment that
//! runs to the end of the line. The Unicode minus `−` is accepted for `-`.

use std::fmt;

use thiserror::Error;

use crate::service::{is_name_token, InterfaceSpec, Method};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasicAction {
    pub focus: String,
    pub method: String,
}

impl BasicAction {
    pub fn new(focus: impl Into<String>, method: impl Into<String>) -> Self {
        BasicAction {
            focus: focus.into(),
            method: method.into(),
        }
    }
}

impl fmt::Display for BasicAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.focus, self.method)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Instruction {
    Plain(BasicAction),
    PosTest(BasicAction),
    NegTest(BasicAction),
    FwdJump(u64),
    BwdJump(u64),
    Halt,
    HaltTrue,
    HaltFalse,
}

impl Instruction {
    pub fn plain(focus: &str, method: &str) -> Self {
        Instruction::Plain(BasicAction::new(focus, method))
    }

    pub fn pos(focus: &str, method: &str) -> Self {
        Instruction::PosTest(BasicAction::new(focus, method))
    }

    pub fn neg(focus: &str, method: &str) -> Self {
        Instruction::NegTest(BasicAction::new(focus, method))
    }

    pub fn action(&self) -> Option<&BasicAction> {
        match self {
            Instruction::Plain(a) | Instruction::PosTest(a) | Instruction::NegTest(a) => Some(a),
            _ => None,
        }
    }

    pub fn is_jump(&self) -> bool {
        matches!(self, Instruction::FwdJump(_) | Instruction::BwdJump(_))
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::Plain(a) => write!(f, "{a}"),
            Instruction::PosTest(a) => write!(f, "+{a}"),
            Instruction::NegTest(a) => write!(f, "-{a}"),
            Instruction::FwdJump(k) => write!(f, "#{k}"),
            Instruction::BwdJump(k) => write!(f, "\\#{k}"),
            Instruction::Halt => f.write_str("!"),
            Instruction::HaltTrue => f.write_str("!t"),
            Instruction::HaltFalse => f.write_str("!f"),
        }
    }
}

/// A finite instruction sequence; positions are 1-based.
#[derive(Debug, Clone, Default, Eq, Hash)]
pub struct InstructionSequence {
    instructions: Vec<Instruction>,
    name: Option<String>,
}

// The label does not take part in structural equality.
impl PartialEq for InstructionSequence {
    fn eq(&self, other: &Self) -> bool {
        self.instructions == other.instructions
    }
}

impl InstructionSequence {
    pub fn new(instructions: Vec<Instruction>) -> Self {
        InstructionSequence {
            instructions,
            name: None,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Instruction at 1-based `position`.
    pub fn at(&self, position: usize) -> Option<&Instruction> {
        position
            .checked_sub(1)
            .and_then(|i| self.instructions.get(i))
    }
}

impl From<Vec<Instruction>> for InstructionSequence {
    fn from(v: Vec<Instruction>) -> Self {
        InstructionSequence::new(v)
    }
}

impl fmt::Display for InstructionSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_program(self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {line}:{column}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// A statement with its 1-based source location.
pub(crate) struct Statement<'a> {
    pub line: usize,
    pub column: usize,
    pub text: &'a str,
}

impl Statement<'_> {
    pub fn error(&self, message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }
}

/// Splits source text into non-empty statements, dropping comments.
pub(crate) fn statements(text: &str) -> Vec<Statement<'_>> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('%').next().unwrap_or("");
        let mut start = 0;
        for piece in line.split(';') {
            let lead = piece.len() - piece.trim_start().len();
            let t = piece.trim();
            if !t.is_empty() {
                out.push(Statement {
                    line: ln + 1,
                    column: line[..start + lead].chars().count() + 1,
                    text: t,
                });
            }
            start += piece.len() + 1;
        }
    }
    out
}

pub(crate) fn parse_action(tok: &str) -> Result<BasicAction, String> {
    let mut parts = tok.split('.');
    let (focus, method) = match (parts.next(), parts.next(), parts.next()) {
        (Some(f), Some(m), None) => (f, m),
        (Some(_), None, _) => return Err(format!("'{tok}' is missing '.method'")),
        _ => return Err(format!("'{tok}' has more than one '.'")),
    };
    if !is_name_token(focus) {
        return Err(format!("bad focus '{focus}'"));
    }
    if !is_name_token(method) {
        return Err(format!("bad method '{method}'"));
    }
    Ok(BasicAction::new(focus, method))
}

pub(crate) fn parse_operand(digits: &str) -> Result<u64, String> {
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("bad jump operand '{digits}'"));
    }
    digits
        .parse::<u64>()
        .map_err(|_| format!("jump operand overflow '{digits}'"))
}

/// Parses everything except jumps; jumps are handled by the caller so the
/// source and object notations can share this.
pub(crate) fn parse_common(tok: &str) -> Option<Result<Instruction, String>> {
    let r = match tok {
        "!" => Ok(Instruction::Halt),
        "!t" => Ok(Instruction::HaltTrue),
        "!f" => Ok(Instruction::HaltFalse),
        _ if tok.starts_with('!') => Err(format!("unknown terminator '{tok}'")),
        _ if tok.starts_with('#') || tok.starts_with('\\') => return None,
        _ => {
            if let Some(rest) = tok.strip_prefix('+') {
                parse_action(rest).map(Instruction::PosTest)
            } else if let Some(rest) = tok.strip_prefix('-').or_else(|| tok.strip_prefix('−')) {
                parse_action(rest).map(Instruction::NegTest)
            } else {
                parse_action(tok).map(Instruction::Plain)
            }
        }
    };
    Some(r)
}

pub(crate) fn parse_instruction(tok: &str) -> Result<Instruction, String> {
    if let Some(r) = parse_common(tok) {
        return r;
    }
    if tok.starts_with("##") {
        return Err(format!("absolute jump '{tok}' is object notation"));
    }
    if let Some(d) = tok.strip_prefix("\\#") {
        return parse_operand(d).map(Instruction::BwdJump);
    }
    if let Some(d) = tok.strip_prefix('#') {
        return parse_operand(d).map(Instruction::FwdJump);
    }
    Err(format!("unrecognized instruction '{tok}'"))
}

pub fn parse_program(text: &str) -> Result<InstructionSequence, SyntaxError> {
    statements(text)
        .iter()
        .map(|st| parse_instruction(st.text).map_err(|m| st.error(m)))
        .collect::<Result<Vec<_>, _>>()
        .map(InstructionSequence::new)
}

/// Canonical rendering: one instruction per line, no trailing newline.
pub fn render_program(seq: &InstructionSequence) -> String {
    let mut out = String::new();
    for (i, ins) in seq.instructions().iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&ins.to_string());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IssueKind {
    JumpBeforeStart,
    UnknownFocus,
    UnknownMethod,
    SelfLoopWarning,
}

impl IssueKind {
    pub fn is_error(self) -> bool {
        !matches!(self, IssueKind::SelfLoopWarning)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IssueKind::JumpBeforeStart => "jump-before-start",
            IssueKind::UnknownFocus => "unknown-focus",
            IssueKind::UnknownMethod => "unknown-method",
            IssueKind::SelfLoopWarning => "self-loop-warning",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub position: usize,
    pub kind: IssueKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<Issue>,
}

pub fn validate(seq: &InstructionSequence, iface: &InterfaceSpec) -> ValidationReport {
    let mut issues = Vec::new();
    for (i, ins) in seq.instructions().iter().enumerate() {
        let position = i + 1;
        let kind = match ins {
            Instruction::FwdJump(0) | Instruction::BwdJump(0) => Some(IssueKind::SelfLoopWarning),
            Instruction::BwdJump(k) if *k >= position as u64 => Some(IssueKind::JumpBeforeStart),
            _ => ins.action().and_then(|a| match iface.get(&a.focus) {
                None => Some(IssueKind::UnknownFocus),
                Some(s) => match a.method.parse::<Method>() {
                    Ok(m) if s.supports(m) => None,
                    _ => Some(IssueKind::UnknownMethod),
                },
            }),
        };
        if let Some(kind) = kind {
            issues.push(Issue { position, kind });
        }
    }
    ValidationReport {
        ok: issues.iter().all(|i| !i.kind.is_error()),
        issues,
    }
}
