//! Dead-code pattern catalog.
//!
//! Each [`PatternKind`] is a control-flow template whose marked region can
//! never run. Input-dependent patterns guard the region with a freshly
//! allocated ancilla whose measured (or unmeasured) value is forced before
//! the condition is evaluated; input-independent patterns rely only on loop
//! semantics.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{BodyPath, ClassicalCond, ClbitRef, CondSubject, GateKind, GateOp, Instruction, QubitRef, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    IfTestDead,
    WhileDead,
    SwitchDead,
    ForZero,
    ForContinue,
    ForBreak,
    ControlledOnIntDead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    InputDependent,
    InputIndependent,
}

impl PatternKind {
    pub const ALL: [PatternKind; 7] = [
        PatternKind::IfTestDead,
        PatternKind::WhileDead,
        PatternKind::SwitchDead,
        PatternKind::ForZero,
        PatternKind::ForContinue,
        PatternKind::ForBreak,
        PatternKind::ControlledOnIntDead,
    ];

    pub fn category(self) -> Category {
        match self {
            PatternKind::IfTestDead
            | PatternKind::WhileDead
            | PatternKind::SwitchDead
            | PatternKind::ControlledOnIntDead => Category::InputDependent,
            PatternKind::ForZero | PatternKind::ForContinue | PatternKind::ForBreak => Category::InputIndependent,
        }
    }

    /// Whether the dead span may itself contain further patterns.
    pub fn admits_nesting(self) -> bool {
        self != PatternKind::ControlledOnIntDead
    }

    pub fn name(self) -> &'static str {
        match self {
            PatternKind::IfTestDead => "if_test_dead",
            PatternKind::WhileDead => "while_dead",
            PatternKind::SwitchDead => "switch_dead",
            PatternKind::ForZero => "for_zero",
            PatternKind::ForContinue => "for_continue",
            PatternKind::ForBreak => "for_break",
            PatternKind::ControlledOnIntDead => "ctrl_on_int_dead",
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PatternKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PatternKind::ALL.iter().copied().find(|k| k.name() == s).ok_or_else(|| format!("unknown pattern kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatternInfo {
    pub kind: PatternKind,
    pub category: Category,
    pub admits_nesting: bool,
}

pub fn catalog() -> Vec<PatternInfo> {
    PatternKind::ALL
        .iter()
        .map(|&kind| PatternInfo { kind, category: kind.category(), admits_nesting: kind.admits_nesting() })
        .collect()
}

/// A marked span of the instruction tree that never executes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadRegion {
    pub id: u32,
    pub kind: PatternKind,
    pub span: Span,
    pub ancilla_qubits: Vec<QubitRef>,
    pub ancilla_clbits: Vec<ClbitRef>,
}

impl DeadRegion {
    pub fn category(&self) -> Category {
        self.kind.category()
    }

    /// The same region after its fragment is placed at `offset` in the list at `prefix`.
    pub fn rebased(&self, prefix: &BodyPath, offset: usize) -> DeadRegion {
        let span = if self.span.body.0.is_empty() {
            Span::new(prefix.clone(), self.span.start + offset, self.span.end + offset)
        } else {
            Span::new(prefix.rebase(offset, &self.span.body), self.span.start, self.span.end)
        };
        DeadRegion { span, ..self.clone() }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PatternError {
    #[error("{kind}: filler is empty")]
    EmptyFiller { kind: PatternKind },
    #[error("{kind}: filler must contain only gates, found {found}")]
    NonUnitaryFiller { kind: PatternKind, found: &'static str },
    #[error("{kind}: filler contains a break/continue outside of any loop")]
    FreeLoopControl { kind: PatternKind },
    #[error("{kind}: filler references undeclared {what}")]
    BadReference { kind: PatternKind, what: String },
    #[error("{kind}: nested regions are not allowed")]
    NestingNotAllowed { kind: PatternKind },
    #[error("control register width {0} is outside 1..=16")]
    CtrlWidth(u32),
}

/// Register bookkeeping shared between the generator and the patterns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegisterAlloc {
    pub qregs: Vec<u32>,
    pub cregs: Vec<u32>,
    pub next_region_id: u32,
}

impl RegisterAlloc {
    pub fn new(qregs: Vec<u32>, cregs: Vec<u32>) -> Self {
        Self { qregs, cregs, next_region_id: 0 }
    }

    pub fn alloc_qreg(&mut self, width: u32) -> u32 {
        self.qregs.push(width);
        (self.qregs.len() - 1) as u32
    }

    pub fn alloc_creg(&mut self, width: u32) -> u32 {
        self.cregs.push(width);
        (self.cregs.len() - 1) as u32
    }

    pub fn total_qubits(&self) -> usize {
        self.qregs.iter().map(|w| *w as usize).sum()
    }

    fn has_qubit(&self, q: QubitRef) -> bool {
        self.qregs.get(q.reg as usize).is_some_and(|w| q.offset < *w)
    }

    fn has_clbit(&self, c: ClbitRef) -> bool {
        self.cregs.get(c.reg as usize).is_some_and(|w| c.offset < *w)
    }

    fn has_creg(&self, r: u32) -> bool {
        (r as usize) < self.cregs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternOptions {
    /// Trip count for `ForContinue` / `ForBreak`.
    pub loop_trips: u64,
    /// Width of the control register for `ControlledOnIntDead`.
    pub ctrl_width: u32,
    /// Fixed control value; drawn from `1..2^ctrl_width` when absent.
    pub ctrl_value: Option<u64>,
}

impl Default for PatternOptions {
    fn default() -> Self {
        Self { loop_trips: 5, ctrl_width: 3, ctrl_value: None }
    }
}

/// Instructions plus the dead regions inside them, with spans relative to
/// `instrs`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fragment {
    pub instrs: Vec<Instruction>,
    pub regions: Vec<DeadRegion>,
}

impl From<Vec<Instruction>> for Fragment {
    fn from(instrs: Vec<Instruction>) -> Self {
        Self { instrs, regions: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instantiated {
    pub instrs: Vec<Instruction>,
    pub region: DeadRegion,
    /// Regions that were already inside the filler, rebased onto `instrs`.
    pub nested: Vec<DeadRegion>,
}

impl Instantiated {
    pub fn into_fragment(self) -> Fragment {
        let mut regions = vec![self.region];
        regions.extend(self.nested);
        Fragment { instrs: self.instrs, regions }
    }
}

fn check_filler(kind: PatternKind, filler: &Fragment, alloc: &RegisterAlloc) -> Result<(), PatternError> {
    if filler.instrs.is_empty() {
        return Err(PatternError::EmptyFiller { kind });
    }
    if !kind.admits_nesting() && !filler.regions.is_empty() {
        return Err(PatternError::NestingNotAllowed { kind });
    }
    fn walk(
        kind: PatternKind,
        body: &[Instruction],
        in_loop: bool,
        unitary_only: bool,
        alloc: &RegisterAlloc,
    ) -> Result<(), PatternError> {
        for instr in body {
            let bad = |what: String| PatternError::BadReference { kind, what };
            if unitary_only && !matches!(instr, Instruction::Gate(_)) {
                let found = match instr {
                    Instruction::Measure { .. } => "measure",
                    Instruction::Reset { .. } => "reset",
                    _ => "control flow",
                };
                return Err(PatternError::NonUnitaryFiller { kind, found });
            }
            match instr {
                Instruction::Gate(g) => {
                    if let Some(q) = g.targets.iter().find(|q| !alloc.has_qubit(**q)) {
                        return Err(bad(q.to_string()));
                    }
                }
                Instruction::Measure { qubit, clbit } => {
                    if !alloc.has_qubit(*qubit) {
                        return Err(bad(qubit.to_string()));
                    }
                    if !alloc.has_clbit(*clbit) {
                        return Err(bad(clbit.to_string()));
                    }
                }
                Instruction::Reset { qubit } => {
                    if !alloc.has_qubit(*qubit) {
                        return Err(bad(qubit.to_string()));
                    }
                }
                Instruction::BreakLoop | Instruction::ContinueLoop if !in_loop => {
                    return Err(PatternError::FreeLoopControl { kind });
                }
                Instruction::IfTest { cond, .. } | Instruction::WhileLoop { cond, .. } => {
                    check_subject(&cond.subject, alloc).map_err(bad)?;
                }
                Instruction::Switch { subject, .. } => check_subject(subject, alloc).map_err(bad)?,
                Instruction::ControlledOnInt { ctrl, .. } => {
                    if let Some(q) = ctrl.iter().find(|q| !alloc.has_qubit(**q)) {
                        return Err(bad(q.to_string()));
                    }
                }
                _ => {}
            }
            let child_in_loop = in_loop || instr.is_loop();
            for b in instr.bodies() {
                walk(kind, b, child_in_loop, unitary_only, alloc)?;
            }
        }
        Ok(())
    }
    walk(kind, &filler.instrs, false, kind == PatternKind::ControlledOnIntDead, alloc)
}

fn check_subject(subject: &CondSubject, alloc: &RegisterAlloc) -> Result<(), String> {
    match subject {
        CondSubject::Bit(b) if !alloc.has_clbit(*b) => Err(b.to_string()),
        CondSubject::Register(r) if !alloc.has_creg(*r) => Err(format!("c{r}")),
        _ => Ok(()),
    }
}

/// Wraps `filler` in the template for `kind`.
///
/// Input-dependent fragments carry their own guard preparation: an `X` on a
/// fresh ancilla followed by a measurement into a fresh one-bit register, so
/// the guard reads 1 on every path while the dead branch is taken on 0.
/// `live` is the data qubit used by the live branch of the template.
pub fn instantiate<R: Rng + ?Sized>(
    kind: PatternKind,
    filler: Fragment,
    live: QubitRef,
    alloc: &mut RegisterAlloc,
    opts: &PatternOptions,
    rng: &mut R,
) -> Result<Instantiated, PatternError> {
    check_filler(kind, &filler, alloc)?;
    let Fragment { instrs: filler, regions: inner } = filler;
    let n = filler.len();
    let id = alloc.next_region_id;

    let guard = |alloc: &mut RegisterAlloc| {
        let qreg = alloc.alloc_qreg(1);
        let creg = alloc.alloc_creg(1);
        let anc = QubitRef::new(qreg, 0);
        let bit = ClbitRef::new(creg, 0);
        let prep = vec![Instruction::gate(GateKind::X, vec![anc]), Instruction::measure(anc, bit)];
        (anc, bit, creg, prep)
    };

    let (instrs, body_path, start, anc_q, anc_c) = match kind {
        PatternKind::IfTestDead => {
            let (anc, bit, creg, mut prep) = guard(alloc);
            prep.push(Instruction::IfTest {
                cond: ClassicalCond::register_eq(creg, 0),
                then_body: filler,
                else_body: vec![Instruction::gate(GateKind::H, vec![live])],
            });
            (prep, BodyPath::root().child(2, 0), 0, vec![anc], vec![bit])
        }
        PatternKind::WhileDead => {
            let (anc, bit, creg, mut prep) = guard(alloc);
            prep.push(Instruction::WhileLoop { cond: ClassicalCond::register_eq(creg, 0), body: filler });
            (prep, BodyPath::root().child(2, 0), 0, vec![anc], vec![bit])
        }
        PatternKind::SwitchDead => {
            let (anc, bit, creg, mut prep) = guard(alloc);
            prep.push(Instruction::Switch {
                subject: CondSubject::Register(creg),
                cases: vec![(0, filler), (1, vec![Instruction::gate(GateKind::H, vec![live])])],
                default: Vec::new(),
            });
            (prep, BodyPath::root().child(2, 0), 0, vec![anc], vec![bit])
        }
        PatternKind::ForZero => (
            vec![Instruction::ForRange { count: 0, body: filler }],
            BodyPath::root().child(0, 0),
            0,
            Vec::new(),
            Vec::new(),
        ),
        PatternKind::ForContinue | PatternKind::ForBreak => {
            let jump =
                if kind == PatternKind::ForContinue { Instruction::ContinueLoop } else { Instruction::BreakLoop };
            let mut body = vec![Instruction::gate(GateKind::H, vec![live]), jump];
            body.extend(filler);
            (
                vec![Instruction::ForRange { count: opts.loop_trips, body }],
                BodyPath::root().child(0, 0),
                2,
                Vec::new(),
                Vec::new(),
            )
        }
        PatternKind::ControlledOnIntDead => {
            let width = opts.ctrl_width;
            if !(1..=16).contains(&width) {
                return Err(PatternError::CtrlWidth(width));
            }
            let max = 1u64 << width;
            let value = match opts.ctrl_value {
                Some(v) if v >= 1 && v < max => v,
                _ => rng.gen_range(1..max),
            };
            let reg = alloc.alloc_qreg(width);
            let ctrl: Vec<QubitRef> = (0..width).map(|o| QubitRef::new(reg, o)).collect();
            (
                vec![Instruction::ControlledOnInt { value, ctrl: ctrl.clone(), body: filler }],
                BodyPath::root().child(0, 0),
                0,
                ctrl,
                Vec::new(),
            )
        }
    };

    alloc.next_region_id += 1;
    let region = DeadRegion {
        id,
        kind,
        span: Span::new(body_path.clone(), start, start + n),
        ancilla_qubits: anc_q,
        ancilla_clbits: anc_c,
    };
    let nested = inner.iter().map(|r| r.rebased(&body_path, start)).collect();
    Ok(Instantiated { instrs, region, nested })
}

/// Convenience wrapper for a plain gate list.
pub fn instantiate_gates<R: Rng + ?Sized>(
    kind: PatternKind,
    gates: Vec<GateOp>,
    live: QubitRef,
    alloc: &mut RegisterAlloc,
    opts: &PatternOptions,
    rng: &mut R,
) -> Result<Instantiated, PatternError> {
    let filler = Fragment::from(gates.into_iter().map(Instruction::Gate).collect::<Vec<_>>());
    instantiate(kind, filler, live, alloc, opts, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn alloc() -> RegisterAlloc {
        RegisterAlloc::new(vec![3], vec![3])
    }

    #[test]
    fn catalog_lists_every_kind_once() {
        let c = catalog();
        assert_eq!(c.len(), 7);
        let dep = c.iter().filter(|p| p.category == Category::InputDependent).count();
        assert_eq!(dep, 4);
        assert_eq!(c.len() - dep, 3);
        assert_eq!(PatternKind::ForZero.category(), Category::InputIndependent);
        for p in &c {
            assert_eq!(p.admits_nesting, p.kind != PatternKind::ControlledOnIntDead);
        }
    }

    #[test]
    fn for_zero_wraps_filler() {
        let mut a = alloc();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = GateOp::single(GateKind::X, QubitRef::new(0, 0));
        let inst = instantiate_gates(
            PatternKind::ForZero,
            vec![x.clone()],
            QubitRef::new(0, 1),
            &mut a,
            &PatternOptions::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(inst.instrs, vec![Instruction::ForRange { count: 0, body: vec![Instruction::Gate(x)] }]);
        assert_eq!(inst.region.span, Span::new(BodyPath::root().child(0, 0), 0, 1));
        assert!(inst.region.ancilla_qubits.is_empty());
    }

    #[test]
    fn controlled_on_int_matches_the_rzz_example() {
        let mut a = alloc();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rzz = GateOp::rotation(GateKind::Rzz, 5.86706, vec![QubitRef::new(0, 1), QubitRef::new(0, 2)]);
        let opts = PatternOptions { ctrl_value: Some(7), ..Default::default() };
        let inst = instantiate_gates(
            PatternKind::ControlledOnIntDead,
            vec![rzz],
            QubitRef::new(0, 0),
            &mut a,
            &opts,
            &mut rng,
        )
        .unwrap();
        match &inst.instrs[0] {
            Instruction::ControlledOnInt { value, ctrl, body } => {
                assert_eq!(*value, 7);
                assert_eq!(ctrl.len(), 3);
                assert!(ctrl.iter().all(|q| q.reg == 1));
                assert_eq!(body.len(), 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(a.qregs, vec![3, 3]);
        assert_eq!(inst.region.ancilla_qubits.len(), 3);
    }

    #[test]
    fn random_ctrl_value_never_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let mut a = alloc();
            let g = GateOp::single(GateKind::X, QubitRef::new(0, 0));
            let inst = instantiate_gates(
                PatternKind::ControlledOnIntDead,
                vec![g],
                QubitRef::new(0, 0),
                &mut a,
                &PatternOptions::default(),
                &mut rng,
            )
            .unwrap();
            let Instruction::ControlledOnInt { value, .. } = inst.instrs[0] else { unreachable!() };
            assert!((1..8).contains(&value));
        }
    }

    #[test]
    fn controlled_on_int_rejects_measurement() {
        let mut a = alloc();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let filler = Fragment::from(vec![Instruction::measure(QubitRef::new(0, 0), ClbitRef::new(0, 0))]);
        let err = instantiate(
            PatternKind::ControlledOnIntDead,
            filler,
            QubitRef::new(0, 0),
            &mut a,
            &PatternOptions::default(),
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, PatternError::NonUnitaryFiller { found: "measure", .. }));
    }

    #[test]
    fn free_break_is_rejected() {
        let mut a = alloc();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let filler = Fragment::from(vec![Instruction::BreakLoop]);
        let err = instantiate(
            PatternKind::IfTestDead,
            filler,
            QubitRef::new(0, 0),
            &mut a,
            &PatternOptions::default(),
            &mut rng,
        )
        .unwrap_err();
        assert_eq!(err, PatternError::FreeLoopControl { kind: PatternKind::IfTestDead });
    }

    #[test]
    fn undeclared_reference_is_rejected() {
        let mut a = alloc();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = GateOp::single(GateKind::X, QubitRef::new(4, 0));
        let err = instantiate_gates(
            PatternKind::ForZero,
            vec![g],
            QubitRef::new(0, 0),
            &mut a,
            &PatternOptions::default(),
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, PatternError::BadReference { .. }));
    }

    #[test]
    fn nested_regions_are_rebased() {
        let mut a = alloc();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let opts = PatternOptions::default();
        let x = GateOp::single(GateKind::X, QubitRef::new(0, 0));
        let inner =
            instantiate_gates(PatternKind::ForZero, vec![x.clone()], QubitRef::new(0, 0), &mut a, &opts, &mut rng)
                .unwrap();
        let mut filler = Fragment::from(vec![Instruction::Gate(x)]);
        let inner_frag = inner.into_fragment();
        for r in inner_frag.regions {
            filler.regions.push(r.rebased(&BodyPath::root(), 1));
        }
        filler.instrs.extend(inner_frag.instrs);
        let outer =
            instantiate(PatternKind::ForContinue, filler, QubitRef::new(0, 1), &mut a, &opts, &mut rng).unwrap();
        // ForRange(5){H; continue; X; ForRange(0){X}}
        assert_eq!(outer.region.span, Span::new(BodyPath::root().child(0, 0), 2, 4));
        assert_eq!(outer.nested.len(), 1);
        let nested = &outer.nested[0];
        assert_eq!(nested.span.body, BodyPath::root().child(0, 0).child(3, 0));
        assert!(outer.region.span.encloses(&nested.span));
        assert_ne!(outer.region.id, nested.id);
    }
}
