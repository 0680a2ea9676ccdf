use std::collections::HashSet;

use thiserror::Error;

use super::{BodyPath, CondSubject, GateOp, InstrPath, Instruction, Program, QubitRef};
use crate::deadcode::Category;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid program at {path}: {message}")]
pub struct ValidationError {
    pub path: InstrPath,
    pub message: String,
}

struct Checker<'a> {
    p: &'a Program,
}

type Res = Result<(), ValidationError>;

fn err(path: &InstrPath, message: impl Into<String>) -> ValidationError {
    ValidationError { path: path.clone(), message: message.into() }
}

impl Checker<'_> {
    fn qubit(&self, path: &InstrPath, q: QubitRef) -> Res {
        match self.p.qregs.get(q.reg as usize) {
            None => Err(err(path, format!("undeclared quantum register q{}", q.reg))),
            Some(w) if q.offset >= *w => Err(err(path, format!("{q} out of range (width {w})"))),
            _ => Ok(()),
        }
    }

    fn clbit(&self, path: &InstrPath, c: super::ClbitRef) -> Res {
        match self.p.cregs.get(c.reg as usize) {
            None => Err(err(path, format!("undeclared classical register c{}", c.reg))),
            Some(w) if c.offset >= *w => Err(err(path, format!("{c} out of range (width {w})"))),
            _ => Ok(()),
        }
    }

    fn subject_width(&self, path: &InstrPath, s: &CondSubject) -> Result<u32, ValidationError> {
        match s {
            CondSubject::Bit(b) => self.clbit(path, *b).map(|_| 1),
            CondSubject::Register(r) => self
                .p
                .cregs
                .get(*r as usize)
                .copied()
                .ok_or_else(|| err(path, format!("undeclared classical register c{r}"))),
        }
    }

    fn value_fits(&self, path: &InstrPath, value: u64, width: u32) -> Res {
        if width < 64 && value >= (1u64 << width) {
            return Err(err(path, format!("value {value} does not fit in {width} bit(s)")));
        }
        Ok(())
    }

    fn gate(&self, path: &InstrPath, g: &GateOp) -> Res {
        if g.targets.len() != g.kind.arity() {
            return Err(err(
                path,
                format!("{} takes {} target(s), got {}", g.kind.name(), g.kind.arity(), g.targets.len()),
            ));
        }
        if g.params.len() != g.kind.param_count() {
            return Err(err(
                path,
                format!("{} takes {} angle(s), got {}", g.kind.name(), g.kind.param_count(), g.params.len()),
            ));
        }
        if g.params.iter().any(|a| !a.is_finite()) {
            return Err(err(path, "non-finite angle"));
        }
        let mut seen = HashSet::new();
        for q in &g.targets {
            self.qubit(path, *q)?;
            if !seen.insert(*q) {
                return Err(err(path, format!("repeated target {q}")));
            }
        }
        Ok(())
    }

    fn body(&self, body: &[Instruction], at: &BodyPath, loop_depth: usize) -> Res {
        for (i, instr) in body.iter().enumerate() {
            let path = InstrPath::new(at, i);
            self.instruction(instr, &path, loop_depth)?;
            let inner_depth = loop_depth + usize::from(instr.is_loop());
            for (b, child) in instr.bodies().into_iter().enumerate() {
                self.body(child, &at.child(i, b), inner_depth)?;
            }
        }
        Ok(())
    }

    fn instruction(&self, instr: &Instruction, path: &InstrPath, loop_depth: usize) -> Res {
        match instr {
            Instruction::Gate(g) => self.gate(path, g),
            Instruction::Measure { qubit, clbit } => {
                self.qubit(path, *qubit)?;
                self.clbit(path, *clbit)
            }
            Instruction::Reset { qubit } => self.qubit(path, *qubit),
            Instruction::IfTest { cond, .. } | Instruction::WhileLoop { cond, .. } => {
                let w = self.subject_width(path, &cond.subject)?;
                self.value_fits(path, cond.value, w)
            }
            Instruction::ForRange { .. } => Ok(()),
            Instruction::Switch { subject, cases, .. } => {
                let w = self.subject_width(path, subject)?;
                let mut seen = HashSet::new();
                for (v, _) in cases {
                    self.value_fits(path, *v, w)?;
                    if !seen.insert(*v) {
                        return Err(err(path, format!("duplicate switch case {v}")));
                    }
                }
                Ok(())
            }
            Instruction::BreakLoop | Instruction::ContinueLoop => {
                if loop_depth == 0 {
                    Err(err(path, "break/continue outside of a loop"))
                } else {
                    Ok(())
                }
            }
            Instruction::ControlledOnInt { value, ctrl, body } => {
                if ctrl.is_empty() {
                    return Err(err(path, "controlled-on-int needs at least one control"));
                }
                if ctrl.len() > 63 {
                    return Err(err(path, "too many control qubits"));
                }
                let mut seen = HashSet::new();
                for q in ctrl {
                    self.qubit(path, *q)?;
                    if !seen.insert(*q) {
                        return Err(err(path, format!("repeated control {q}")));
                    }
                }
                self.value_fits(path, *value, ctrl.len() as u32)?;
                for (j, b) in body.iter().enumerate() {
                    let mut inner = path.0.clone();
                    inner.extend([0, j]);
                    let inner = InstrPath(inner);
                    let Instruction::Gate(g) = b else {
                        return Err(err(&inner, "controlled-on-int body must contain only gates"));
                    };
                    if let Some(q) = g.targets.iter().find(|q| seen.contains(q)) {
                        return Err(err(&inner, format!("body gate targets control qubit {q}")));
                    }
                }
                Ok(())
            }
        }
    }

    fn registers(&self) -> Res {
        let top = InstrPath(Vec::new());
        if self.p.qregs.contains(&0) || self.p.cregs.contains(&0) {
            return Err(err(&top, "registers must have width at least 1"));
        }
        match self.p.output {
            Some(r) => {
                let w = self
                    .p
                    .cregs
                    .get(r as usize)
                    .ok_or_else(|| err(&top, format!("output register c{r} is undeclared")))?;
                if *w > 64 {
                    return Err(err(&top, "output register wider than 64 bits"));
                }
            }
            None if self.p.num_clbits() > 64 => {
                return Err(err(&top, "concatenated classical registers wider than 64 bits"));
            }
            None => {}
        }
        Ok(())
    }

    fn regions(&self) -> Res {
        let regions = &self.p.dead_regions;
        let mut ids = HashSet::new();
        for r in regions {
            let path = InstrPath::new(&r.span.body, r.span.start);
            if !ids.insert(r.id) {
                return Err(err(&path, format!("duplicate dead region id {}", r.id)));
            }
            let body = self
                .p
                .body_at(&r.span.body)
                .ok_or_else(|| err(&path, format!("dead region {} addresses a missing body", r.id)))?;
            if r.span.start >= r.span.end || r.span.end > body.len() {
                return Err(err(
                    &path,
                    format!(
                        "dead region {} span {}..{} invalid for body of length {}",
                        r.id,
                        r.span.start,
                        r.span.end,
                        body.len()
                    ),
                ));
            }
            for q in &r.ancilla_qubits {
                self.qubit(&path, *q)?;
            }
            for c in &r.ancilla_clbits {
                self.clbit(&path, *c)?;
            }
            let has_anc = !r.ancilla_qubits.is_empty();
            match r.category() {
                Category::InputDependent if !has_anc => {
                    return Err(err(&path, format!("input-dependent region {} has no ancilla", r.id)));
                }
                Category::InputIndependent if has_anc || !r.ancilla_clbits.is_empty() => {
                    return Err(err(&path, format!("input-independent region {} carries ancillas", r.id)));
                }
                _ => {}
            }
        }
        for (i, a) in regions.iter().enumerate() {
            for b in &regions[i + 1..] {
                if a.span == b.span {
                    return Err(err(
                        &InstrPath::new(&a.span.body, a.span.start),
                        format!("dead regions {} and {} share a span", a.id, b.id),
                    ));
                }
                if a.span.overlaps(&b.span) && !a.span.encloses(&b.span) && !b.span.encloses(&a.span) {
                    return Err(err(
                        &InstrPath::new(&a.span.body, a.span.start),
                        format!("dead regions {} and {} partially overlap", a.id, b.id),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Checks every structural invariant of `program`. Never panics.
pub fn validate(program: &Program) -> Result<(), ValidationError> {
    let c = Checker { p: program };
    c.registers()?;
    c.body(&program.body, &BodyPath::root(), 0)?;
    c.regions()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{ClbitRef, GateKind};

    fn q(o: u32) -> QubitRef {
        QubitRef::new(0, o)
    }

    #[test]
    fn minimal_program_is_valid() {
        let mut p = Program::new(vec![1], vec![1]);
        p.body = vec![Instruction::gate(GateKind::H, vec![q(0)]), Instruction::measure(q(0), ClbitRef::new(0, 0))];
        validate(&p).unwrap();
    }

    #[test]
    fn top_level_break_is_rejected_at_path_zero() {
        let mut p = Program::new(vec![1], vec![1]);
        p.body = vec![Instruction::BreakLoop];
        let e = validate(&p).unwrap_err();
        assert_eq!(e.path, InstrPath(vec![0]));
    }

    #[test]
    fn break_inside_if_inside_loop_is_fine() {
        let mut p = Program::new(vec![1], vec![1]);
        p.body = vec![Instruction::ForRange {
            count: 2,
            body: vec![Instruction::IfTest {
                cond: crate::ir::ClassicalCond::register_eq(0, 1),
                then_body: vec![Instruction::BreakLoop],
                else_body: vec![],
            }],
        }];
        validate(&p).unwrap();
    }

    #[test]
    fn controlled_on_int_value_boundary() {
        let mut p = Program::new(vec![2, 3], vec![]);
        let ctrl: Vec<QubitRef> = (0..3).map(|o| QubitRef::new(1, o)).collect();
        let body = vec![Instruction::gate(GateKind::X, vec![q(0)])];
        p.body = vec![Instruction::ControlledOnInt { value: 7, ctrl: ctrl.clone(), body: body.clone() }];
        validate(&p).unwrap();
        p.body = vec![Instruction::ControlledOnInt { value: 8, ctrl, body }];
        let e = validate(&p).unwrap_err();
        assert_eq!(e.path, InstrPath(vec![0]));
    }

    #[test]
    fn gate_arity_and_params() {
        let mut p = Program::new(vec![2], vec![]);
        p.body = vec![Instruction::gate(GateKind::Cx, vec![q(0)])];
        assert!(validate(&p).is_err());
        p.body = vec![Instruction::gate(GateKind::Cx, vec![q(0), q(0)])];
        assert!(validate(&p).is_err());
        p.body = vec![Instruction::gate(GateKind::Rz, vec![q(0)])];
        assert!(validate(&p).is_err());
        p.body = vec![Instruction::Gate(GateOp::rotation(GateKind::Rz, f64::NAN, vec![q(0)]))];
        assert!(validate(&p).is_err());
    }

    #[test]
    fn condition_value_must_fit() {
        let mut p = Program::new(vec![1], vec![2]);
        p.body = vec![Instruction::WhileLoop { cond: crate::ir::ClassicalCond::register_eq(0, 4), body: vec![] }];
        assert!(validate(&p).is_err());
        p.body = vec![Instruction::WhileLoop { cond: crate::ir::ClassicalCond::register_eq(0, 3), body: vec![] }];
        validate(&p).unwrap();
    }
}
