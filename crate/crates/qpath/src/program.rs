//! Classically-controlled quantum programs and their textual form.
//!
//! A [`BranchingProgram`] is a finite tree: straight-line gate applications,
//! branches on classical input bits, and measurements whose two outcome arms
//! are full successor blocks. Control may depend on measurement outcomes and
//! on the classical input, never on the quantum state itself, so the gate
//! applied at step `tau` is a function of the outcome history alone.
//!
//! The DSL is whitespace-insensitive with `#` comments:
//!
//! ```text
//! qprog 1
//! qubits 2
//! input 3
//! GATE T 2  1 0 0 cis(1/4)
//! U H 0
//! CNOT 0 1
//! QUERY 1 -> 0
//! IFINPUT 2 { 0: ACCEPT 1: MEASURE 0 { 0: ACCEPT 1: REJECT } }
//! ```
//!
//! Instructions are self-delimiting, so `;` separators are optional.
//! Input bits are 1-based; reading past the input length yields 0.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::gate::{Gate, GateRef, LibGate};
use crate::unitary::{Entry, UnitaryMatrix};

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error("line {line}, col {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("program uses non-universal gate '{0}'; normalize requires {{CNOT, F, Fdg, H, I}}")]
    NonUniversalGate(String),
    #[error("branches disagree after normalization: {0}")]
    NonUniformBranches(String),
    #[error("outcome history is inconsistent with the program: {0}")]
    InconsistentHistory(String),
    #[error("step {tau} exceeds the path length {len}")]
    StepOutOfRange { tau: usize, len: usize },
    #[error("branch count exceeds cap {0}")]
    BranchCapExceeded(usize),
}

impl ProgramError {
    fn at(pos: Pos, msg: impl Into<String>) -> Self {
        ProgramError::Syntax { line: pos.line, col: pos.col, msg: msg.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

/// Terminal verdict of a computation path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
}

/// A quantum operation instruction (everything except control flow).
#[derive(Clone, Debug, PartialEq)]
pub enum GateApp {
    /// Unitary gate application; for multi-qubit gates the first target is
    /// the most significant bit of the matrix basis index.
    Unitary { gate: GateRef, targets: Vec<usize> },
    /// Input query `|i>|b> -> |i>|b ^ x_i>`.
    Query { addrs: Vec<usize>, target: usize },
}

/// One instruction. `Measure` and `IfInput` carry their successor blocks,
/// so a block is a tree, not a straight line.
#[derive(Clone, Debug, PartialEq)]
pub enum Instr {
    Gate(GateApp),
    Measure { qubit: usize, arm0: Block, arm1: Block },
    IfInput { index: usize, arm0: Block, arm1: Block },
    End(Verdict),
}

pub type Block = Vec<Instr>;

/// Named custom gate usable via `U <name> <qubits...>`.
#[derive(Clone, Debug)]
pub struct CustomGate {
    pub name: String,
    pub matrix: UnitaryMatrix,
}

/// A classically-controlled quantum program.
#[derive(Clone, Debug)]
pub struct BranchingProgram {
    pub num_qubits: usize,
    pub input_len: usize,
    pub gates: Vec<CustomGate>,
    pub body: Block,
}

/// Sequence of measurement outcomes observed so far.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct OutcomeHistory(pub Vec<bool>);

impl OutcomeHistory {
    pub fn empty() -> Self {
        OutcomeHistory(Vec::new())
    }

    pub fn from_bits(s: &str) -> Self {
        OutcomeHistory(s.chars().map(|c| c == '1').collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, b: bool) {
        self.0.push(b);
    }
}

impl fmt::Display for OutcomeHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "e");
        }
        for b in &self.0 {
            write!(f, "{}", if *b { '1' } else { '0' })?;
        }
        Ok(())
    }
}

/// Reads the 1-based input bit `i`; out-of-range reads (including 0) are 0.
pub fn input_bit(x: &[bool], i: usize) -> bool {
    i >= 1 && i <= x.len() && x[i - 1]
}

/// The bookkeeping tuple the threshold arithmetic needs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgramProfile {
    /// Total gate count along every branch (measurements included).
    pub t: usize,
    /// Qubit register width.
    pub s: usize,
    /// Measurement count along every branch.
    pub m: usize,
    /// Count of F and Fdg gates along every branch.
    pub f: usize,
    /// Count of H gates along every branch.
    pub h: usize,
    /// Guess-bit budget: smallest g >= 1 with 2^g >= max(#N+, #N-).
    pub g: u32,
}

/// Per-branch gate tallies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub t: usize,
    pub m: usize,
    pub f: usize,
    pub h: usize,
}

impl Tally {
    fn bump(&mut self, app: &GateApp) {
        self.t += 1;
        if let GateApp::Unitary { gate: GateRef::Lib(g), .. } = app {
            match g {
                LibGate::F | LibGate::Fdg => self.f += 1,
                LibGate::H => self.h += 1,
                _ => {}
            }
        }
    }

    fn bump_measure(&mut self) {
        self.t += 1;
        self.m += 1;
    }
}

impl BranchingProgram {
    /// Parses DSL text; all structural invariants are checked.
    pub fn parse(text: &str) -> Result<BranchingProgram, ProgramError> {
        Parser::new(text).program()
    }

    /// Gate arity (number of target qubits) for a reference.
    pub fn gate_arity(&self, gate: GateRef) -> usize {
        match gate {
            GateRef::Lib(g) => g.num_qubits(),
            GateRef::Custom(i) => self.gates[i].matrix.num_qubits(),
        }
    }

    pub fn gate_name(&self, gate: GateRef) -> String {
        match gate {
            GateRef::Lib(g) => g.name().to_string(),
            GateRef::Custom(i) => self.gates[i].name.clone(),
        }
    }

    /// True when every gate is from `{CNOT, F, Fdg, H, I}` (queries and
    /// measurements are always allowed).
    pub fn is_universal(&self) -> bool {
        fn check(block: &Block) -> bool {
            block.iter().all(|ins| match ins {
                Instr::Gate(GateApp::Unitary { gate: GateRef::Custom(_), .. }) => false,
                Instr::Measure { arm0, arm1, .. } | Instr::IfInput { arm0, arm1, .. } => {
                    check(arm0) && check(arm1)
                }
                _ => true,
            })
        }
        check(&self.body)
    }

    /// The gate applied at step `tau` (1-based) given input `x` and outcome
    /// history `mu`, or the verdict if the path ends exactly at `tau`.
    pub fn gate_at(
        &self,
        x: &[bool],
        mu: &OutcomeHistory,
        tau: usize,
    ) -> Result<StepResult, ProgramError> {
        if tau == 0 {
            return Err(ProgramError::StepOutOfRange { tau, len: 0 });
        }
        let mut step = 0usize;
        let mut used = 0usize;
        let mut block: &Block = &self.body;
        let mut idx = 0usize;
        loop {
            let Some(ins) = block.get(idx) else {
                return Err(ProgramError::StepOutOfRange { tau, len: step + 1 });
            };
            match ins {
                Instr::Gate(app) => {
                    step += 1;
                    if step == tau {
                        return Ok(StepResult::Gate(app_to_gate(app)));
                    }
                    idx += 1;
                }
                Instr::Measure { qubit, arm0, arm1 } => {
                    step += 1;
                    if step == tau {
                        return Ok(StepResult::Gate(Gate::Measure { qubit: *qubit }));
                    }
                    let Some(&bit) = mu.0.get(used) else {
                        return Err(ProgramError::InconsistentHistory(format!(
                            "history has {} bits but step {} needs bit {}",
                            mu.len(),
                            step,
                            used + 1
                        )));
                    };
                    used += 1;
                    block = if bit { arm1 } else { arm0 };
                    idx = 0;
                }
                Instr::IfInput { index, arm0, arm1 } => {
                    block = if input_bit(x, *index) { arm1 } else { arm0 };
                    idx = 0;
                }
                Instr::End(v) => {
                    if step + 1 == tau {
                        return Ok(StepResult::Verdict(*v));
                    }
                    return Err(ProgramError::StepOutOfRange { tau, len: step + 1 });
                }
            }
        }
    }

    /// Tallies of every maximal path (over both outcome arms and both input
    /// arms), in leaf order.
    pub fn leaf_tallies(&self) -> Vec<Tally> {
        fn walk(block: &Block, mut cur: Tally, out: &mut Vec<Tally>) {
            for ins in block {
                match ins {
                    Instr::Gate(app) => cur.bump(app),
                    Instr::Measure { arm0, arm1, .. } => {
                        cur.bump_measure();
                        walk(arm0, cur, out);
                        walk(arm1, cur, out);
                        return;
                    }
                    Instr::IfInput { arm0, arm1, .. } => {
                        walk(arm0, cur, out);
                        walk(arm1, cur, out);
                        return;
                    }
                    Instr::End(_) => {
                        out.push(cur);
                        return;
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, Tally::default(), &mut out);
        out
    }

    /// Pads every branch so that all maximal paths apply identical numbers
    /// of gates, measurements, F/Fdg gates, and H gates, with at least one H
    /// gate. Padding is exact: it cannot change any branch probability or
    /// verdict.
    ///
    /// Pad gates per kind: `I` on qubit 0 for the total count; `F` on a
    /// fresh ancilla held at `|0>` (F|0> = |0>); `H` on a dedicated fresh
    /// ancilla that nothing ever measures; a measurement of a fresh `|0>`
    /// ancilla whose outcome-1 arm rejects and is unreachable.
    pub fn normalize(&self) -> Result<BranchingProgram, ProgramError> {
        if !self.is_universal() {
            let name = first_custom_name(self).unwrap_or_else(|| "?".into());
            return Err(ProgramError::NonUniversalGate(name));
        }
        let tallies = self.leaf_tallies();
        let f_max = tallies.iter().map(|t| t.f).max().unwrap_or(0);
        let h_max = tallies.iter().map(|t| t.h).max().unwrap_or(0).max(1);
        let m_max = tallies.iter().map(|t| t.m).max().unwrap_or(0);
        let t_max = tallies
            .iter()
            .map(|t| t.t + (f_max - t.f) + (h_max - t.h) + (m_max - t.m))
            .max()
            .unwrap_or(0);

        let uniform = tallies
            .iter()
            .all(|t| t.f == f_max && t.h == h_max && t.m == m_max && t.t == t_max);
        if uniform {
            return Ok(self.clone());
        }

        let need_f = tallies.iter().any(|t| t.f < f_max);
        let need_h = tallies.iter().any(|t| t.h < h_max);
        let need_m = tallies.iter().any(|t| t.m < m_max);
        let mut next = self.num_qubits;
        let mut alloc = || {
            let q = next;
            next += 1;
            q
        };
        let fpad = if need_f { Some(alloc()) } else { None };
        let hpad = if need_h { Some(alloc()) } else { None };
        let mpad = if need_m { Some(alloc()) } else { None };

        let target = Tally { t: t_max, m: m_max, f: f_max, h: h_max };
        let body = pad_block(&self.body, Tally::default(), &target, fpad, hpad, mpad);
        Ok(BranchingProgram {
            num_qubits: next,
            input_len: self.input_len,
            gates: self.gates.clone(),
            body,
        })
    }

    /// Per-path `(t, m, f, h)` for the outcome branches of a fixed input,
    /// verified uniform across all of them.
    pub fn uniform_tally(&self, x: &[bool]) -> Result<Tally, ProgramError> {
        fn walk(
            block: &Block,
            x: &[bool],
            mut cur: Tally,
            out: &mut Vec<Tally>,
        ) {
            for ins in block {
                match ins {
                    Instr::Gate(app) => cur.bump(app),
                    Instr::Measure { arm0, arm1, .. } => {
                        cur.bump_measure();
                        walk(arm0, x, cur, out);
                        walk(arm1, x, cur, out);
                        return;
                    }
                    Instr::IfInput { index, arm0, arm1 } => {
                        let arm = if input_bit(x, *index) { arm1 } else { arm0 };
                        walk(arm, x, cur, out);
                        return;
                    }
                    Instr::End(_) => {
                        out.push(cur);
                        return;
                    }
                }
            }
        }
        let mut all = Vec::new();
        walk(&self.body, x, Tally::default(), &mut all);
        let first = all.first().copied().unwrap_or_default();
        for t in &all {
            if *t != first {
                return Err(ProgramError::NonUniformBranches(format!(
                    "tally {t:?} differs from {first:?}"
                )));
            }
        }
        Ok(first)
    }

    /// Full profile `(t, s, m, f, h, g)` of a normalized program on input
    /// `x`. Verifies cross-branch uniformity by an exhaustive branch walk;
    /// `g` is derived from the actual path-count magnitudes.
    pub fn profile(&self, x: &[bool]) -> Result<ProgramProfile, crate::pathcount::CountError> {
        let tally = self.uniform_tally(x)?;
        if tally.h < 1 {
            return Err(crate::pathcount::CountError::NotNormalized(
                "h must be at least 1".into(),
            ));
        }
        let (n_plus, n_minus) = crate::pathcount::n_totals(self, x, crate::DEFAULT_BRANCH_CAP)?;
        let g = crate::pathcount::guess_budget(&n_plus, &n_minus);
        Ok(ProgramProfile {
            t: tally.t,
            s: self.num_qubits,
            m: tally.m,
            f: tally.f,
            h: tally.h,
            g,
        })
    }

    /// Canonical DSL text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("qprog 1\n");
        out.push_str(&format!("qubits {}\n", self.num_qubits));
        if self.input_len > 0 {
            out.push_str(&format!("input {}\n", self.input_len));
        }
        for g in &self.gates {
            out.push_str(&format!("GATE {} {}", g.name, g.matrix.dim()));
            for r in 0..g.matrix.dim() {
                for c in 0..g.matrix.dim() {
                    out.push(' ');
                    out.push_str(&entry_literal(g.matrix.entry(r, c)));
                }
            }
            out.push('\n');
        }
        write_block(&mut out, self, &self.body, 0);
        out
    }
}

impl fmt::Display for BranchingProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Result of asking for the gate at one step of a path.
#[derive(Clone, Debug, PartialEq)]
pub enum StepResult {
    Gate(Gate),
    Verdict(Verdict),
}

fn app_to_gate(app: &GateApp) -> Gate {
    match app {
        GateApp::Unitary { gate, targets } => {
            Gate::Unitary { gate: *gate, targets: targets.clone() }
        }
        GateApp::Query { addrs, target } => {
            Gate::Query { addrs: addrs.clone(), target: *target }
        }
    }
}

fn first_custom_name(p: &BranchingProgram) -> Option<String> {
    fn scan(p: &BranchingProgram, block: &Block) -> Option<String> {
        for ins in block {
            match ins {
                Instr::Gate(GateApp::Unitary { gate: GateRef::Custom(i), .. }) => {
                    return Some(p.gates[*i].name.clone());
                }
                Instr::Measure { arm0, arm1, .. } | Instr::IfInput { arm0, arm1, .. } => {
                    if let Some(n) = scan(p, arm0) {
                        return Some(n);
                    }
                    if let Some(n) = scan(p, arm1) {
                        return Some(n);
                    }
                }
                _ => {}
            }
        }
        None
    }
    scan(p, &p.body)
}

fn pad_block(
    block: &Block,
    cur: Tally,
    target: &Tally,
    fpad: Option<usize>,
    hpad: Option<usize>,
    mpad: Option<usize>,
) -> Block {
    let mut out = Vec::with_capacity(block.len());
    let mut cur = cur;
    for ins in block {
        match ins {
            Instr::Gate(app) => {
                cur.bump(app);
                out.push(ins.clone());
            }
            Instr::Measure { qubit, arm0, arm1 } => {
                let mut t = cur;
                t.bump_measure();
                out.push(Instr::Measure {
                    qubit: *qubit,
                    arm0: pad_block(arm0, t, target, fpad, hpad, mpad),
                    arm1: pad_block(arm1, t, target, fpad, hpad, mpad),
                });
                return out;
            }
            Instr::IfInput { index, arm0, arm1 } => {
                out.push(Instr::IfInput {
                    index: *index,
                    arm0: pad_block(arm0, cur, target, fpad, hpad, mpad),
                    arm1: pad_block(arm1, cur, target, fpad, hpad, mpad),
                });
                return out;
            }
            Instr::End(v) => {
                out.extend(finish_leaf(cur, target, *v, fpad, hpad, mpad));
                return out;
            }
        }
    }
    out
}

/// Pads one leaf up to the target tallies: F gates on the held ancilla,
/// H gates on the dedicated ancilla, I gates for the total, then a chain of
/// ancilla measurements whose reject arms are padded to the same targets
/// (they are unreachable, but every maximal path must see identical
/// counts).
fn finish_leaf(
    mut cur: Tally,
    target: &Tally,
    verdict: Verdict,
    fpad: Option<usize>,
    hpad: Option<usize>,
    mpad: Option<usize>,
) -> Block {
    let mut out = Vec::new();
    while cur.f < target.f {
        out.push(lib_app(LibGate::F, fpad.expect("f pad allocated")));
        cur.t += 1;
        cur.f += 1;
    }
    while cur.h < target.h {
        out.push(lib_app(LibGate::H, hpad.expect("h pad allocated")));
        cur.t += 1;
        cur.h += 1;
    }
    let dm = target.m - cur.m;
    for _ in 0..target.t - cur.t - dm {
        out.push(lib_app(LibGate::I, 0));
        cur.t += 1;
    }
    if dm == 0 {
        out.push(Instr::End(verdict));
        return out;
    }
    let mut next = cur;
    next.bump_measure();
    out.push(Instr::Measure {
        qubit: mpad.expect("m pad allocated"),
        arm0: finish_leaf(next, target, verdict, fpad, hpad, mpad),
        arm1: finish_leaf(next, target, Verdict::Reject, fpad, hpad, mpad),
    });
    out
}

fn lib_app(g: LibGate, qubit: usize) -> Instr {
    Instr::Gate(GateApp::Unitary { gate: GateRef::Lib(g), targets: vec![qubit] })
}

fn entry_literal(e: &Entry) -> String {
    match e {
        Entry::Closed(expr) => expr.to_text(),
        Entry::Dyadic(v) => {
            // dyadic values are exact rationals p / 2^bits
            let re = v.re.clone();
            let im = v.im.clone();
            let den_re = num_bigint::BigInt::from(1) << re.bits() as usize;
            let den_im = num_bigint::BigInt::from(1) << im.bits() as usize;
            format!(
                "(rat({}/{})+rat({}/{})*cis(1/2))",
                re.mant(),
                den_re,
                im.mant(),
                den_im
            )
        }
    }
}

fn write_block(out: &mut String, p: &BranchingProgram, block: &Block, indent: usize) {
    let pad = "  ".repeat(indent);
    for ins in block {
        match ins {
            Instr::Gate(GateApp::Unitary { gate, targets }) => {
                if *gate == GateRef::Lib(LibGate::Cnot) {
                    out.push_str(&format!("{pad}CNOT {} {}\n", targets[0], targets[1]));
                } else {
                    out.push_str(&format!("{pad}U {}", p.gate_name(*gate)));
                    for t in targets {
                        out.push_str(&format!(" {t}"));
                    }
                    out.push('\n');
                }
            }
            Instr::Gate(GateApp::Query { addrs, target }) => {
                out.push_str(&format!("{pad}QUERY"));
                for a in addrs {
                    out.push_str(&format!(" {a}"));
                }
                out.push_str(&format!(" -> {target}\n"));
            }
            Instr::Measure { qubit, arm0, arm1 } => {
                out.push_str(&format!("{pad}MEASURE {qubit} {{\n"));
                out.push_str(&format!("{pad}  0:\n"));
                write_block(out, p, arm0, indent + 2);
                out.push_str(&format!("{pad}  1:\n"));
                write_block(out, p, arm1, indent + 2);
                out.push_str(&format!("{pad}}}\n"));
            }
            Instr::IfInput { index, arm0, arm1 } => {
                out.push_str(&format!("{pad}IFINPUT {index} {{\n"));
                out.push_str(&format!("{pad}  0:\n"));
                write_block(out, p, arm0, indent + 2);
                out.push_str(&format!("{pad}  1:\n"));
                write_block(out, p, arm1, indent + 2);
                out.push_str(&format!("{pad}}}\n"));
            }
            Instr::End(Verdict::Accept) => out.push_str(&format!("{pad}ACCEPT\n")),
            Instr::End(Verdict::Reject) => out.push_str(&format!("{pad}REJECT\n")),
        }
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    text: &'a str,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { chars: text.chars().collect(), pos: 0, line: 1, col: 1, text }
    }

    fn here(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.chars.get(self.pos) {
                Some(c) if c.is_whitespace() || *c == ';' => {
                    self.bump();
                }
                Some('#') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_trivia();
        self.chars.get(self.pos).copied()
    }

    /// A run of non-whitespace, non-brace, non-colon characters.
    fn word(&mut self) -> Option<(String, Pos)> {
        self.skip_trivia();
        let start = self.here();
        let mut s = String::new();
        while let Some(&c) = self.chars.get(self.pos) {
            if c.is_whitespace() || c == '{' || c == '}' || c == ';' || c == '#' {
                break;
            }
            s.push(c);
            self.bump();
        }
        if s.is_empty() {
            None
        } else {
            Some((s, start))
        }
    }

    fn expect_word(&mut self, what: &str) -> Result<(String, Pos), ProgramError> {
        let pos = self.here();
        self.word()
            .ok_or_else(|| ProgramError::at(pos, format!("expected {what}, found end of input")))
    }

    fn expect_usize(&mut self, what: &str) -> Result<(usize, Pos), ProgramError> {
        let (w, pos) = self.expect_word(what)?;
        let n = w
            .parse::<usize>()
            .map_err(|_| ProgramError::at(pos, format!("expected {what}, found '{w}'")))?;
        Ok((n, pos))
    }

    fn expect_char(&mut self, c: char) -> Result<Pos, ProgramError> {
        self.skip_trivia();
        let pos = self.here();
        match self.chars.get(self.pos) {
            Some(&got) if got == c => {
                self.bump();
                Ok(pos)
            }
            got => Err(ProgramError::at(
                pos,
                format!("expected '{c}', found {}", got.map_or("end of input".into(), |g| format!("'{g}'"))),
            )),
        }
    }

    fn program(&mut self) -> Result<BranchingProgram, ProgramError> {
        let _ = self.text;
        // optional "qprog 1" header
        self.skip_trivia();
        let save = (self.pos, self.line, self.col);
        if let Some((w, pos)) = self.word() {
            if w == "qprog" {
                let (v, vpos) = self.expect_usize("format version")?;
                if v != 1 {
                    return Err(ProgramError::at(vpos, format!("unsupported version {v}")));
                }
            } else if w == "qubits" {
                (self.pos, self.line, self.col) = save;
            } else {
                return Err(ProgramError::at(pos, format!("expected 'qprog' or 'qubits', found '{w}'")));
            }
        }
        let (kw, kpos) = self.expect_word("'qubits' header")?;
        if kw != "qubits" {
            return Err(ProgramError::at(kpos, format!("expected 'qubits', found '{kw}'")));
        }
        let (num_qubits, _) = self.expect_usize("qubit count")?;

        let mut input_len = 0usize;
        self.skip_trivia();
        let save = (self.pos, self.line, self.col);
        if let Some((w, _)) = self.word() {
            if w == "input" {
                input_len = self.expect_usize("input length")?.0;
            } else {
                (self.pos, self.line, self.col) = save;
            }
        }

        let mut ctx = Ctx { num_qubits, gates: Vec::new(), names: HashMap::new() };
        let mut body = Vec::new();
        loop {
            self.skip_trivia();
            if self.pos >= self.chars.len() {
                break;
            }
            let save = (self.pos, self.line, self.col);
            let (w, pos) = self.expect_word("instruction")?;
            if w == "GATE" {
                if !body.is_empty() {
                    return Err(ProgramError::at(pos, "GATE definitions must precede instructions"));
                }
                self.gate_def(&mut ctx)?;
            } else {
                (self.pos, self.line, self.col) = save;
                let ins = self.instr(&ctx)?;
                let terminal = is_terminal(&ins);
                body.push(ins);
                if terminal {
                    self.skip_trivia();
                    if self.pos < self.chars.len() {
                        return Err(ProgramError::at(
                            self.here(),
                            "unreachable instruction after a terminal",
                        ));
                    }
                    break;
                }
            }
        }
        check_terminated(&body, self.here())?;
        Ok(BranchingProgram { num_qubits, input_len, gates: ctx.gates, body })
    }

    fn gate_def(&mut self, ctx: &mut Ctx) -> Result<(), ProgramError> {
        let (name, npos) = self.expect_word("gate name")?;
        if LibGate::from_name(&name).is_some() || ctx.names.contains_key(&name) {
            return Err(ProgramError::at(npos, format!("gate '{name}' is already defined")));
        }
        let (dim, dpos) = self.expect_usize("gate dimension")?;
        if dim < 2 || !dim.is_power_of_two() {
            return Err(ProgramError::at(dpos, format!("dimension {dim} is not a power of two >= 2")));
        }
        let mut exprs = Vec::with_capacity(dim * dim);
        for _ in 0..dim * dim {
            let (lit, lpos) = self.expect_word("matrix entry literal")?;
            let e = crate::expr::Expr::parse(&lit)
                .map_err(|err| ProgramError::at(lpos, format!("bad entry literal: {err}")))?;
            exprs.push(e);
        }
        let matrix = UnitaryMatrix::from_exprs(dim, exprs)
            .map_err(|err| ProgramError::at(npos, format!("bad gate matrix: {err}")))?;
        ctx.names.insert(name.clone(), ctx.gates.len());
        ctx.gates.push(CustomGate { name, matrix });
        Ok(())
    }

    fn block(&mut self, ctx: &Ctx) -> Result<Block, ProgramError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            let pos = self.here();
            if self.peek().is_none() {
                return Err(ProgramError::at(pos, "dangling path without verdict (unterminated block)"));
            }
            let ins = self.instr(ctx)?;
            let terminal = is_terminal(&ins);
            out.push(ins);
            if terminal {
                return Ok(out);
            }
        }
    }

    fn instr(&mut self, ctx: &Ctx) -> Result<Instr, ProgramError> {
        let (w, pos) = self.expect_word("instruction")?;
        match w.as_str() {
            "ACCEPT" => Ok(Instr::End(Verdict::Accept)),
            "REJECT" => Ok(Instr::End(Verdict::Reject)),
            "U" => {
                let (name, npos) = self.expect_word("gate name")?;
                let gate = if let Some(g) = LibGate::from_name(&name) {
                    GateRef::Lib(g)
                } else if let Some(&i) = ctx.names.get(&name) {
                    GateRef::Custom(i)
                } else {
                    return Err(ProgramError::at(npos, format!("unknown gate '{name}'")));
                };
                let arity = match gate {
                    GateRef::Lib(g) => g.num_qubits(),
                    GateRef::Custom(i) => ctx.gates[i].matrix.num_qubits(),
                };
                let mut targets = Vec::with_capacity(arity);
                for _ in 0..arity {
                    targets.push(self.qubit(ctx)?);
                }
                distinct(&targets, pos)?;
                Ok(Instr::Gate(GateApp::Unitary { gate, targets }))
            }
            "CNOT" => {
                let c = self.qubit(ctx)?;
                let t = self.qubit(ctx)?;
                distinct(&[c, t], pos)?;
                Ok(Instr::Gate(GateApp::Unitary {
                    gate: GateRef::Lib(LibGate::Cnot),
                    targets: vec![c, t],
                }))
            }
            "QUERY" => {
                let mut addrs = Vec::new();
                loop {
                    let (w, wpos) = self.expect_word("address qubit or '->'")?;
                    if w == "->" {
                        break;
                    }
                    let q = w.parse::<usize>().map_err(|_| {
                        ProgramError::at(wpos, format!("expected qubit index or '->', found '{w}'"))
                    })?;
                    if q >= ctx.num_qubits {
                        return Err(ProgramError::at(
                            wpos,
                            format!("qubit {q} out of range (width {})", ctx.num_qubits),
                        ));
                    }
                    addrs.push(q);
                }
                if addrs.is_empty() {
                    return Err(ProgramError::at(pos, "QUERY needs at least one address qubit"));
                }
                let target = self.qubit(ctx)?;
                let mut all = addrs.clone();
                all.push(target);
                distinct(&all, pos)?;
                Ok(Instr::Gate(GateApp::Query { addrs, target }))
            }
            "MEASURE" => {
                let qubit = self.qubit(ctx)?;
                self.expect_char('{')?;
                let (arm0, arm1) = self.arms(ctx, pos)?;
                Ok(Instr::Measure { qubit, arm0, arm1 })
            }
            "IFINPUT" => {
                let (index, _) = self.expect_usize("input index")?;
                self.expect_char('{')?;
                let (arm0, arm1) = self.arms(ctx, pos)?;
                Ok(Instr::IfInput { index, arm0, arm1 })
            }
            _ => Err(ProgramError::at(pos, format!("unknown instruction '{w}'"))),
        }
    }

    /// Parses `0: <block> 1: <block> }` (either order, both required).
    fn arms(&mut self, ctx: &Ctx, open: Pos) -> Result<(Block, Block), ProgramError> {
        let mut arm0: Option<Block> = None;
        let mut arm1: Option<Block> = None;
        for _ in 0..2 {
            self.skip_trivia();
            if self.peek() == Some('}') {
                break;
            }
            let (label, lpos) = self.arm_label()?;
            let block = self.block(ctx)?;
            let slot = if label { &mut arm1 } else { &mut arm0 };
            if slot.is_some() {
                return Err(ProgramError::at(lpos, format!("duplicate outcome-{} arm", label as u8)));
            }
            *slot = Some(block);
        }
        self.expect_char('}')?;
        match (arm0, arm1) {
            (Some(a0), Some(a1)) => Ok((a0, a1)),
            (None, _) => Err(ProgramError::at(open, "missing outcome-0 arm")),
            (_, None) => Err(ProgramError::at(open, "missing outcome-1 arm")),
        }
    }

    fn arm_label(&mut self) -> Result<(bool, Pos), ProgramError> {
        self.skip_trivia();
        let pos = self.here();
        let label = match self.chars.get(self.pos) {
            Some('0') => false,
            Some('1') => true,
            other => {
                return Err(ProgramError::at(
                    pos,
                    format!(
                        "expected arm label '0:' or '1:', found {}",
                        other.map_or("end of input".into(), |c| format!("'{c}'"))
                    ),
                ))
            }
        };
        self.bump();
        self.expect_char(':')?;
        Ok((label, pos))
    }

    fn qubit(&mut self, ctx: &Ctx) -> Result<usize, ProgramError> {
        let (q, pos) = self.expect_usize("qubit index")?;
        if q >= ctx.num_qubits {
            return Err(ProgramError::at(
                pos,
                format!("qubit {q} out of range (width {})", ctx.num_qubits),
            ));
        }
        Ok(q)
    }
}

struct Ctx {
    num_qubits: usize,
    gates: Vec<CustomGate>,
    names: HashMap<String, usize>,
}

fn is_terminal(ins: &Instr) -> bool {
    matches!(ins, Instr::End(_) | Instr::Measure { .. } | Instr::IfInput { .. })
}

fn distinct(qs: &[usize], pos: Pos) -> Result<(), ProgramError> {
    for (i, a) in qs.iter().enumerate() {
        if qs[i + 1..].contains(a) {
            return Err(ProgramError::at(pos, format!("qubit {a} listed twice")));
        }
    }
    Ok(())
}

fn check_terminated(block: &Block, end: Pos) -> Result<(), ProgramError> {
    match block.last() {
        Some(ins) if is_terminal(ins) => Ok(()),
        _ => Err(ProgramError::at(end, "dangling path without verdict")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> BranchingProgram {
        BranchingProgram::parse(text).expect("parse")
    }

    #[test]
    fn simple_program_counts() {
        let p = parse("qubits 1; U H 0; MEASURE 0 {0: ACCEPT 1: REJECT}");
        let tallies = p.leaf_tallies();
        assert_eq!(tallies.len(), 2);
        assert!(tallies.iter().all(|t| t.t == 2 && t.m == 1 && t.h == 1));
    }

    #[test]
    fn cnot_only_program() {
        let p = parse("qubits 2; CNOT 0 1; ACCEPT");
        let tallies = p.leaf_tallies();
        assert_eq!(tallies, vec![Tally { t: 1, m: 0, f: 0, h: 0 }]);
    }

    #[test]
    fn missing_arm_is_an_error() {
        let err = BranchingProgram::parse("qubits 1; MEASURE 0 {0: ACCEPT}").unwrap_err();
        assert!(err.to_string().contains("missing outcome-1 arm"), "{err}");
    }

    #[test]
    fn dangling_path_is_an_error() {
        let err = BranchingProgram::parse("qubits 1; U H 0").unwrap_err();
        assert!(err.to_string().contains("dangling path"), "{err}");
    }

    #[test]
    fn unknown_gate_is_an_error() {
        let err = BranchingProgram::parse("qubits 1; U T 0; ACCEPT").unwrap_err();
        assert!(err.to_string().contains("unknown gate 'T'"), "{err}");
    }

    #[test]
    fn qubit_out_of_range_is_an_error() {
        let err = BranchingProgram::parse("qubits 1; CNOT 0 1; ACCEPT").unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");
    }

    #[test]
    fn errors_carry_positions() {
        let err = BranchingProgram::parse("qubits 1\nU H 0\nU T 0\nACCEPT").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn gate_at_resolves_steps() {
        let p = parse("qubits 1; U H 0; MEASURE 0 {0: ACCEPT 1: REJECT}");
        let mu = OutcomeHistory::empty();
        match p.gate_at(&[], &mu, 1).unwrap() {
            StepResult::Gate(Gate::Unitary { gate: GateRef::Lib(LibGate::H), targets }) => {
                assert_eq!(targets, vec![0]);
            }
            other => panic!("unexpected step: {other:?}"),
        }
        assert_eq!(
            p.gate_at(&[], &mu, 2).unwrap(),
            StepResult::Gate(Gate::Measure { qubit: 0 })
        );
        // step 3 is the verdict, reachable only with one history bit
        let mu0 = OutcomeHistory::from_bits("0");
        assert_eq!(p.gate_at(&[], &mu0, 3).unwrap(), StepResult::Verdict(Verdict::Accept));
        let mu1 = OutcomeHistory::from_bits("1");
        assert_eq!(p.gate_at(&[], &mu1, 3).unwrap(), StepResult::Verdict(Verdict::Reject));
        assert!(matches!(
            p.gate_at(&[], &mu0, 4),
            Err(ProgramError::StepOutOfRange { .. })
        ));
        assert!(matches!(p.gate_at(&[], &mu, 3), Err(ProgramError::InconsistentHistory(_))));
    }

    #[test]
    fn gate_at_resolves_input_branches() {
        let text = "qubits 1\ninput 1\nIFINPUT 1 { 0: U H 0 ACCEPT 1: U F 0 ACCEPT }";
        let p = parse(text);
        let mu = OutcomeHistory::empty();
        match p.gate_at(&[true], &mu, 1).unwrap() {
            StepResult::Gate(Gate::Unitary { gate: GateRef::Lib(LibGate::F), .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
        match p.gate_at(&[false], &mu, 1).unwrap() {
            StepResult::Gate(Gate::Unitary { gate: GateRef::Lib(LibGate::H), .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn normalize_uniform_program_is_identity_modulo_h() {
        let text = "qubits 1; U H 0; MEASURE 0 {0: ACCEPT 1: REJECT}";
        let p = parse(text);
        let n = p.normalize().unwrap();
        // already uniform with h = 1: unchanged
        assert_eq!(n.num_qubits, 1);
        assert_eq!(n.to_text(), p.to_text());
    }

    #[test]
    fn normalize_pads_h_imbalance() {
        // one branch has 2 H gates, the other 0
        let text = "qubits 1; MEASURE 0 {0: U H 0 U H 0 ACCEPT 1: REJECT}";
        let p = parse(text);
        let n = p.normalize().unwrap();
        let tallies = n.leaf_tallies();
        let first = tallies[0];
        assert!(tallies.iter().all(|t| *t == first), "{tallies:?}");
        assert_eq!(first.h, 2);
    }

    #[test]
    fn normalize_pads_measure_imbalance() {
        let text = "qubits 2; U H 0; MEASURE 0 {0: U H 1 MEASURE 1 {0: ACCEPT 1: REJECT} 1: REJECT}";
        let p = parse(text);
        let n = p.normalize().unwrap();
        let tallies = n.leaf_tallies();
        let first = tallies[0];
        assert!(tallies.iter().all(|t| *t == first), "{tallies:?}");
        assert_eq!(first.m, 2);
    }

    #[test]
    fn normalize_enforces_h_at_least_one() {
        let p = parse("qubits 2; CNOT 0 1; ACCEPT");
        let n = p.normalize().unwrap();
        let tallies = n.leaf_tallies();
        assert_eq!(tallies.len(), 1);
        assert!(tallies[0].h >= 1);
    }

    #[test]
    fn normalize_is_idempotent() {
        let text = "qubits 2; U H 0; MEASURE 0 {0: U F 1 U H 1 ACCEPT 1: REJECT}";
        let n1 = parse(text).normalize().unwrap();
        let n2 = n1.normalize().unwrap();
        assert_eq!(n1.to_text(), n2.to_text());
    }

    #[test]
    fn normalize_rejects_custom_gates() {
        let text = "qubits 1; GATE T 2 1 0 0 cis(1/4); U T 0; ACCEPT";
        let p = parse(text);
        assert!(matches!(p.normalize(), Err(ProgramError::NonUniversalGate(_))));
    }

    #[test]
    fn text_roundtrip() {
        let text = "qubits 2\ninput 2\nU H 0\nIFINPUT 1 { 0: CNOT 0 1 ACCEPT 1: MEASURE 1 { 0: ACCEPT 1: REJECT } }";
        let p = parse(text);
        let p2 = parse(&p.to_text());
        assert_eq!(p.to_text(), p2.to_text());
    }

    #[test]
    fn custom_gate_roundtrip() {
        let text = "qubits 1; GATE T 2 1 0 0 cis(1/4); U T 0; MEASURE 0 {0: ACCEPT 1: REJECT}";
        let p = parse(text);
        let p2 = parse(&p.to_text());
        assert_eq!(p.gates.len(), 1);
        assert_eq!(p2.gates[0].name, "T");
    }
}
