//! Quantum intermediate representation.
//!
//! A [`Program`] is a tree of [`Instruction`]s over declared quantum and
//! classical registers. Control flow is either classically conditioned
//! (`IfTest`, `WhileLoop`, `Switch`, `ForRange`) or quantum-native
//! (`ControlledOnInt`). Dead regions are stored alongside the tree as spans
//! into one of its instruction lists.
//!
//! Bit conventions used throughout the crate:
//! - classical bit `c[0]` is the least-significant bit of its register value;
//! - when several classical registers are concatenated, the register declared
//!   last is the most significant;
//! - in a statevector, qubit 0 is the least-significant amplitude index bit.

mod text;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::deadcode::{DeadRegion, PatternKind};

pub use text::{deserialize, serialize, ParseError};
pub use validate::{validate, ValidationError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QubitRef {
    pub reg: u32,
    pub offset: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClbitRef {
    pub reg: u32,
    pub offset: u32,
}

impl QubitRef {
    pub const fn new(reg: u32, offset: u32) -> Self {
        Self { reg, offset }
    }
}

impl ClbitRef {
    pub const fn new(reg: u32, offset: u32) -> Self {
        Self { reg, offset }
    }
}

impl fmt::Display for QubitRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}[{}]", self.reg, self.offset)
    }
}

impl fmt::Display for ClbitRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}[{}]", self.reg, self.offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    S,
    Sdg,
    T,
    Tdg,
    Rx,
    Ry,
    Rz,
    Rzz,
    Cx,
    Cz,
    Ccx,
    Swap,
}

impl GateKind {
    pub const ALL: [GateKind; 16] = [
        GateKind::H,
        GateKind::X,
        GateKind::Y,
        GateKind::Z,
        GateKind::S,
        GateKind::Sdg,
        GateKind::T,
        GateKind::Tdg,
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::Rzz,
        GateKind::Cx,
        GateKind::Cz,
        GateKind::Ccx,
        GateKind::Swap,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::Rzz | GateKind::Cx | GateKind::Cz | GateKind::Swap => 2,
            GateKind::Ccx => 3,
            _ => 1,
        }
    }

    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::Rzz)
    }

    pub fn param_count(self) -> usize {
        usize::from(self.is_rotation())
    }

    /// Gates whose matrix is diagonal in the computational basis.
    pub fn is_diagonal(self) -> bool {
        matches!(
            self,
            GateKind::Z
                | GateKind::S
                | GateKind::Sdg
                | GateKind::T
                | GateKind::Tdg
                | GateKind::Rz
                | GateKind::Rzz
                | GateKind::Cz
        )
    }

    /// Gates whose target order does not matter.
    pub fn is_symmetric(self) -> bool {
        matches!(self, GateKind::Cz | GateKind::Swap | GateKind::Rzz)
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::T => "t",
            GateKind::Tdg => "tdg",
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Rz => "rz",
            GateKind::Rzz => "rzz",
            GateKind::Cx => "cx",
            GateKind::Cz => "cz",
            GateKind::Ccx => "ccx",
            GateKind::Swap => "swap",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        GateKind::ALL.iter().copied().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub params: Vec<f64>,
    pub targets: Vec<QubitRef>,
}

impl GateOp {
    pub fn new(kind: GateKind, targets: Vec<QubitRef>) -> Self {
        Self { kind, params: Vec::new(), targets }
    }

    pub fn rotation(kind: GateKind, angle: f64, targets: Vec<QubitRef>) -> Self {
        Self { kind, params: vec![angle], targets }
    }

    pub fn single(kind: GateKind, q: QubitRef) -> Self {
        Self::new(kind, vec![q])
    }

    /// The adjoint gate. Every gate in the set has an adjoint within the set.
    pub fn inverse(&self) -> GateOp {
        let kind = match self.kind {
            GateKind::S => GateKind::Sdg,
            GateKind::Sdg => GateKind::S,
            GateKind::T => GateKind::Tdg,
            GateKind::Tdg => GateKind::T,
            k => k,
        };
        GateOp { kind, params: self.params.iter().map(|a| -a).collect(), targets: self.targets.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CondSubject {
    Bit(ClbitRef),
    Register(u32),
}

impl fmt::Display for CondSubject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CondSubject::Bit(b) => write!(f, "{b}"),
            CondSubject::Register(r) => write!(f, "c{r}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClassicalCond {
    pub subject: CondSubject,
    pub value: u64,
}

impl ClassicalCond {
    pub fn register_eq(reg: u32, value: u64) -> Self {
        Self { subject: CondSubject::Register(reg), value }
    }

    pub fn bit_eq(bit: ClbitRef, value: u64) -> Self {
        Self { subject: CondSubject::Bit(bit), value }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instruction {
    Gate(GateOp),
    Measure {
        qubit: QubitRef,
        clbit: ClbitRef,
    },
    Reset {
        qubit: QubitRef,
    },
    IfTest {
        cond: ClassicalCond,
        then_body: Vec<Instruction>,
        else_body: Vec<Instruction>,
    },
    WhileLoop {
        cond: ClassicalCond,
        body: Vec<Instruction>,
    },
    ForRange {
        count: u64,
        body: Vec<Instruction>,
    },
    Switch {
        subject: CondSubject,
        cases: Vec<(u64, Vec<Instruction>)>,
        default: Vec<Instruction>,
    },
    BreakLoop,
    ContinueLoop,
    /// Applies `body` iff the control qubits hold the integer `value`
    /// (`ctrl[0]` is the least-significant bit). Unitary only.
    ControlledOnInt {
        value: u64,
        ctrl: Vec<QubitRef>,
        body: Vec<Instruction>,
    },
}

impl Instruction {
    pub fn gate(kind: GateKind, targets: Vec<QubitRef>) -> Self {
        Instruction::Gate(GateOp::new(kind, targets))
    }

    pub fn measure(qubit: QubitRef, clbit: ClbitRef) -> Self {
        Instruction::Measure { qubit, clbit }
    }

    pub fn is_control_flow(&self) -> bool {
        matches!(
            self,
            Instruction::IfTest { .. }
                | Instruction::WhileLoop { .. }
                | Instruction::ForRange { .. }
                | Instruction::Switch { .. }
                | Instruction::ControlledOnInt { .. }
        )
    }

    pub fn is_loop(&self) -> bool {
        matches!(self, Instruction::WhileLoop { .. } | Instruction::ForRange { .. })
    }

    /// Child instruction lists, in branch order. For `Switch` the cases come
    /// first and the default body is last.
    pub fn bodies(&self) -> Vec<&Vec<Instruction>> {
        match self {
            Instruction::IfTest { then_body, else_body, .. } => vec![then_body, else_body],
            Instruction::WhileLoop { body, .. }
            | Instruction::ForRange { body, .. }
            | Instruction::ControlledOnInt { body, .. } => vec![body],
            Instruction::Switch { cases, default, .. } => {
                let mut v: Vec<&Vec<Instruction>> = cases.iter().map(|(_, b)| b).collect();
                v.push(default);
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn bodies_mut(&mut self) -> Vec<&mut Vec<Instruction>> {
        match self {
            Instruction::IfTest { then_body, else_body, .. } => vec![then_body, else_body],
            Instruction::WhileLoop { body, .. }
            | Instruction::ForRange { body, .. }
            | Instruction::ControlledOnInt { body, .. } => vec![body],
            Instruction::Switch { cases, default, .. } => {
                let mut v: Vec<&mut Vec<Instruction>> = cases.iter_mut().map(|(_, b)| b).collect();
                v.push(default);
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn body(&self, branch: usize) -> Option<&Vec<Instruction>> {
        self.bodies().into_iter().nth(branch)
    }

    pub fn body_mut(&mut self, branch: usize) -> Option<&mut Vec<Instruction>> {
        self.bodies_mut().into_iter().nth(branch)
    }

    /// Number of instructions in this subtree, counting `self`.
    pub fn size(&self) -> usize {
        1 + self.bodies().iter().map(|b| count_instructions(b)).sum::<usize>()
    }

    /// Qubits touched anywhere in this subtree.
    pub fn qubits(&self, out: &mut Vec<QubitRef>) {
        match self {
            Instruction::Gate(g) => out.extend(g.targets.iter().copied()),
            Instruction::Measure { qubit, .. } | Instruction::Reset { qubit } => out.push(*qubit),
            Instruction::ControlledOnInt { ctrl, .. } => out.extend(ctrl.iter().copied()),
            _ => {}
        }
        for b in self.bodies() {
            for i in b {
                i.qubits(out);
            }
        }
    }
}

pub fn count_instructions(body: &[Instruction]) -> usize {
    body.iter().map(Instruction::size).sum()
}

/// One step from an instruction list into a child list: the index of the
/// control-flow instruction and the branch taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathStep {
    pub index: usize,
    pub branch: usize,
}

/// Address of an instruction list inside a program. The empty path is the
/// top-level body.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BodyPath(pub Vec<PathStep>);

impl BodyPath {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn child(&self, index: usize, branch: usize) -> Self {
        let mut v = self.0.clone();
        v.push(PathStep { index, branch });
        Self(v)
    }

    /// Flattened form `[i0, b0, i1, b1, ...]`.
    pub fn flatten(&self) -> Vec<usize> {
        self.0.iter().flat_map(|s| [s.index, s.branch]).collect()
    }

    /// `other` with this path prepended and its first index shifted by `offset`.
    pub fn rebase(&self, offset: usize, other: &BodyPath) -> BodyPath {
        let mut v = self.0.clone();
        let mut rest = other.0.iter();
        if let Some(first) = rest.next() {
            v.push(PathStep { index: first.index + offset, branch: first.branch });
            v.extend(rest.copied());
        }
        BodyPath(v)
    }
}

/// Address of a single instruction: flattened `[i0, b0, ..., ik]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstrPath(pub Vec<usize>);

impl InstrPath {
    pub fn new(body: &BodyPath, index: usize) -> Self {
        let mut v = body.flatten();
        v.push(index);
        Self(v)
    }
}

impl fmt::Display for InstrPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "[{}]", parts.join("."))
    }
}

/// Contiguous range `start..end` of the instruction list at `body`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub body: BodyPath,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(body: BodyPath, start: usize, end: usize) -> Self {
        Self { body, start, end }
    }

    /// Key giving the order in which the region's start marker appears in
    /// the text form.
    pub fn doc_key(&self) -> Vec<usize> {
        let mut k = self.body.flatten();
        k.push(self.start);
        k
    }

    pub fn contains_path(&self, path: &InstrPath) -> bool {
        let prefix = self.body.flatten();
        if path.0.len() <= prefix.len() || path.0[..prefix.len()] != prefix[..] {
            return false;
        }
        let idx = path.0[prefix.len()];
        idx >= self.start && idx < self.end
    }

    /// True if `other` lies entirely inside this span.
    pub fn encloses(&self, other: &Span) -> bool {
        if self.body == other.body {
            return other.start >= self.start && other.end <= self.end && self != other;
        }
        let prefix = self.body.flatten();
        let o = other.body.flatten();
        if o.len() <= prefix.len() || o[..prefix.len()] != prefix[..] {
            return false;
        }
        let idx = o[prefix.len()];
        idx >= self.start && idx < self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        if self.body == other.body {
            return self.start < other.end && other.start < self.end;
        }
        self.encloses(other) || other.encloses(self)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProgramMeta {
    pub seed: u64,
    pub n_qubits: u32,
    pub patterns: Vec<PatternKind>,
    /// Optimization passes the generator attached to the program.
    pub passes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Program {
    pub qregs: Vec<u32>,
    pub cregs: Vec<u32>,
    /// Classical register holding the observed result. `None` means all
    /// classical registers concatenated.
    pub output: Option<u32>,
    pub body: Vec<Instruction>,
    pub dead_regions: Vec<DeadRegion>,
    pub meta: ProgramMeta,
}

impl Program {
    pub fn new(qregs: Vec<u32>, cregs: Vec<u32>) -> Self {
        Self { qregs, cregs, ..Default::default() }
    }

    pub fn num_qubits(&self) -> usize {
        self.qregs.iter().map(|w| *w as usize).sum()
    }

    pub fn num_clbits(&self) -> usize {
        self.cregs.iter().map(|w| *w as usize).sum()
    }

    pub fn qubit_index(&self, q: QubitRef) -> usize {
        self.qregs[..q.reg as usize].iter().map(|w| *w as usize).sum::<usize>() + q.offset as usize
    }

    pub fn clbit_index(&self, c: ClbitRef) -> usize {
        self.creg_offset(c.reg) + c.offset as usize
    }

    pub fn creg_offset(&self, reg: u32) -> usize {
        self.cregs[..reg as usize].iter().map(|w| *w as usize).sum()
    }

    /// Flat clbit indices making up the observed result, least-significant first.
    pub fn output_clbits(&self) -> Vec<usize> {
        match self.output {
            Some(r) => {
                let base = self.creg_offset(r);
                (0..self.cregs[r as usize] as usize).map(|i| base + i).collect()
            }
            None => (0..self.num_clbits()).collect(),
        }
    }

    pub fn output_width(&self) -> usize {
        match self.output {
            Some(r) => self.cregs.get(r as usize).copied().unwrap_or(0) as usize,
            None => self.num_clbits(),
        }
    }

    pub fn add_qreg(&mut self, width: u32) -> u32 {
        self.qregs.push(width);
        (self.qregs.len() - 1) as u32
    }

    pub fn add_creg(&mut self, width: u32) -> u32 {
        self.cregs.push(width);
        (self.cregs.len() - 1) as u32
    }

    pub fn instruction_count(&self) -> usize {
        count_instructions(&self.body)
    }

    pub fn body_at(&self, path: &BodyPath) -> Option<&Vec<Instruction>> {
        let mut cur = &self.body;
        for step in &path.0 {
            cur = cur.get(step.index)?.body(step.branch)?;
        }
        Some(cur)
    }

    pub fn body_at_mut(&mut self, path: &BodyPath) -> Option<&mut Vec<Instruction>> {
        let mut cur = &mut self.body;
        for step in &path.0 {
            cur = cur.get_mut(step.index)?.body_mut(step.branch)?;
        }
        Some(cur)
    }

    pub fn instruction_at(&self, path: &InstrPath) -> Option<&Instruction> {
        let (last, steps) = path.0.split_last()?;
        if steps.len() % 2 != 0 {
            return None;
        }
        let body = BodyPath(steps.chunks(2).map(|c| PathStep { index: c[0], branch: c[1] }).collect());
        self.body_at(&body)?.get(*last)
    }

    /// Visits every instruction in preorder together with its path.
    pub fn walk<F: FnMut(&InstrPath, &Instruction)>(&self, mut f: F) {
        fn go<F: FnMut(&InstrPath, &Instruction)>(body: &[Instruction], path: &BodyPath, f: &mut F) {
            for (i, instr) in body.iter().enumerate() {
                f(&InstrPath::new(path, i), instr);
                for (b, child) in instr.bodies().into_iter().enumerate() {
                    go(child, &path.child(i, b), f);
                }
            }
        }
        go(&self.body, &BodyPath::root(), &mut f);
    }

    /// Paths of every instruction inside some dead region.
    pub fn dead_instruction_paths(&self) -> Vec<InstrPath> {
        let mut out = Vec::new();
        self.walk(|p, _| {
            if self.dead_regions.iter().any(|r| r.span.contains_path(p)) {
                out.push(p.clone());
            }
        });
        out
    }

    /// Orders dead regions by the position of their start marker.
    pub fn sort_regions(&mut self) {
        self.dead_regions.sort_by(|a, b| a.span.doc_key().cmp(&b.span.doc_key()).then(a.id.cmp(&b.id)));
    }
}
