use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use super::{Deps, Resources};
use crate::ir::{ClbitRef, CondSubject, GateKind, GateOp, Instruction, Program};

const ANGLE_EPS: f64 = 1e-12;

/// Applies `f` to every instruction list, children before parents. The flag
/// tells whether the list is the body of a controlled-on-int node, where
/// global phase becomes relative phase.
pub(crate) fn rewrite(body: &mut Vec<Instruction>, in_ctrl: bool, f: &mut dyn FnMut(&mut Vec<Instruction>, bool)) {
    for instr in body.iter_mut() {
        let ctrl = matches!(instr, Instruction::ControlledOnInt { .. });
        for b in instr.bodies_mut() {
            rewrite(b, in_ctrl || ctrl, f);
        }
    }
    f(body, in_ctrl);
}

fn same_targets(a: &GateOp, b: &GateOp) -> bool {
    if a.targets == b.targets {
        return true;
    }
    match a.kind {
        k if k.is_symmetric() => a.targets.len() == 2 && a.targets[0] == b.targets[1] && a.targets[1] == b.targets[0],
        GateKind::Ccx => a.targets[2] == b.targets[2] && a.targets[0] == b.targets[1] && a.targets[1] == b.targets[0],
        _ => false,
    }
}

fn angle_is_zero(a: f64, exact: bool) -> bool {
    if exact {
        return a.abs() <= ANGLE_EPS;
    }
    let r = a.rem_euclid(TAU);
    r <= ANGLE_EPS || TAU - r <= ANGLE_EPS
}

/// True if `b` undoes `a`. Outside controlled bodies rotations are compared
/// modulo 2π, since a full turn is only a global phase there.
pub(crate) fn cancels(a: &GateOp, b: &GateOp, in_ctrl: bool) -> bool {
    if b.kind != a.inverse().kind || !same_targets(a, b) {
        return false;
    }
    a.params.iter().zip(&b.params).all(|(x, y)| angle_is_zero(x + y, in_ctrl))
}

pub(crate) fn cancel_in_body(body: &mut Vec<Instruction>, in_ctrl: bool) {
    let mut out: Vec<Instruction> = Vec::with_capacity(body.len());
    for instr in body.drain(..) {
        if let (Instruction::Gate(g), Some(Instruction::Gate(top))) = (&instr, out.last()) {
            if cancels(top, g, in_ctrl) {
                out.pop();
                continue;
            }
        }
        out.push(instr);
    }
    *body = out;
}

pub fn cancel_inverses(p: &Program) -> Program {
    let mut out = p.clone();
    rewrite(&mut out.body, false, &mut cancel_in_body);
    out
}

pub fn merge_rotations(p: &Program) -> Program {
    let mut out = p.clone();
    rewrite(&mut out.body, false, &mut |body, in_ctrl| {
        if in_ctrl {
            return;
        }
        let mut res: Vec<Instruction> = Vec::with_capacity(body.len());
        for instr in body.drain(..) {
            if let (Instruction::Gate(g), Some(Instruction::Gate(top))) = (&instr, res.last_mut()) {
                if g.kind.is_rotation() && top.kind == g.kind && same_targets(top, g) {
                    let a = (top.params[0] + g.params[0]).rem_euclid(TAU);
                    if angle_is_zero(a, false) {
                        res.pop();
                    } else {
                        top.params[0] = a;
                    }
                    continue;
                }
            }
            res.push(instr);
        }
        *body = res;
    });
    out
}

fn is_empty_cf(instr: &Instruction, ctrl_aware: bool) -> bool {
    match instr {
        Instruction::IfTest { .. } | Instruction::ForRange { .. } | Instruction::Switch { .. } => {
            instr.bodies().iter().all(|b| b.is_empty())
        }
        Instruction::ControlledOnInt { body, .. } => ctrl_aware && body.is_empty(),
        _ => false,
    }
}

/// Removes `if`, `for`, `switch` and controlled-on-int nodes whose bodies are
/// all empty. `while` is kept: an empty loop may still never terminate.
pub fn elide_empty_cf(p: &Program) -> Program {
    let mut out = p.clone();
    rewrite(&mut out.body, false, &mut |b, _| b.retain(|i| !is_empty_cf(i, true)));
    out
}

/// Variant of [`elide_empty_cf`] that does not know about controlled-on-int
/// nodes and leaves empty ones in place. Not registered as a pass.
pub fn elide_empty_cf_unaware(p: &Program) -> Program {
    let mut out = p.clone();
    rewrite(&mut out.body, false, &mut |b, _| b.retain(|i| !is_empty_cf(i, false)));
    out
}

/// Sorts the trailing run of top-level measurements by qubit when they touch
/// pairwise distinct qubits and bits.
pub fn canonicalize_measures(p: &Program) -> Program {
    let mut out = p.clone();
    let start = out.body.iter().rposition(|i| !matches!(i, Instruction::Measure { .. })).map_or(0, |i| i + 1);
    let tail = &mut out.body[start..];
    let qs: BTreeSet<_> = tail
        .iter()
        .filter_map(|i| if let Instruction::Measure { qubit, .. } = i { Some(*qubit) } else { None })
        .collect();
    let cs: BTreeSet<_> = tail
        .iter()
        .filter_map(|i| if let Instruction::Measure { clbit, .. } = i { Some(*clbit) } else { None })
        .collect();
    if qs.len() == tail.len() && cs.len() == tail.len() {
        tail.sort_by_key(|i| match i {
            Instruction::Measure { qubit, clbit } => (*qubit, *clbit),
            _ => unreachable!("tail holds measurements only"),
        });
    }
    out
}

/// Moves each control-flow node as far left as it can go past instructions
/// it does not conflict with.
pub(crate) fn commute_cf(p: &Program, deps: Deps) -> Program {
    let mut out = p.clone();
    let cregs = p.cregs.clone();
    rewrite(&mut out.body, false, &mut |body, _| {
        let res: Vec<Resources> = body.iter().map(|i| Resources::of(i, &cregs)).collect();
        let mut order: Vec<usize> = (0..body.len()).collect();
        for i in 0..order.len() {
            if !body[order[i]].is_control_flow() {
                continue;
            }
            let mut j = i;
            while j > 0 && !res[order[j - 1]].conflicts(&res[order[j]], deps) {
                order.swap(j - 1, j);
                j -= 1;
            }
        }
        let mut old: Vec<Option<Instruction>> = body.drain(..).map(Some).collect();
        body.extend(order.into_iter().map(|k| old[k].take().expect("permutation")));
    });
    out
}

/// As-late-as-possible rescheduling: levels are assigned walking the list
/// backwards, then emitted from the highest level down. With
/// `keep_order_in_moment` the instructions of one level keep their original
/// order; without it they stay in the reversed order of the backward walk.
pub(crate) fn alap(p: &Program, deps: Deps, keep_order_in_moment: bool) -> Program {
    let mut out = p.clone();
    let cregs = p.cregs.clone();
    rewrite(&mut out.body, false, &mut |body, _| {
        let n = body.len();
        let mut q_level = BTreeMap::new();
        let mut c_level: BTreeMap<ClbitRef, usize> = BTreeMap::new();
        let mut barrier = 0usize;
        let mut max_level = 0usize;
        let mut level = vec![0usize; n];
        for i in (0..n).rev() {
            let r = Resources::of(&body[i], &cregs);
            let full = deps == Deps::Full;
            let mut m = r.qubits.iter().map(|q| q_level.get(q).copied().unwrap_or(0)).max().unwrap_or(0);
            if full {
                m = m.max(r.clbits.iter().map(|c| c_level.get(c).copied().unwrap_or(0)).max().unwrap_or(0));
                m = m.max(barrier);
                if r.barrier {
                    m = m.max(max_level);
                }
            }
            let lv = m + 1;
            level[i] = lv;
            max_level = max_level.max(lv);
            for q in &r.qubits {
                q_level.insert(*q, lv);
            }
            if full {
                for c in &r.clbits {
                    c_level.insert(*c, lv);
                }
                if r.barrier {
                    barrier = lv;
                }
            }
        }
        let mut moments: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in (0..n).rev() {
            moments.entry(level[i]).or_default().push(i);
        }
        let mut order = Vec::with_capacity(n);
        for (_, mut items) in moments.into_iter().rev() {
            if keep_order_in_moment {
                items.reverse();
            }
            order.extend(items);
        }
        let mut old: Vec<Option<Instruction>> = body.drain(..).map(Some).collect();
        body.extend(order.into_iter().map(|k| old[k].take().expect("permutation")));
    });
    out
}

fn reads(instr: &Instruction, cregs: &[u32], unsafe_while: bool, out: &mut BTreeSet<ClbitRef>) {
    let mut subject = |s: &CondSubject| match s {
        CondSubject::Bit(b) => {
            out.insert(*b);
        }
        CondSubject::Register(r) => {
            let w = cregs.get(*r as usize).copied().unwrap_or(0);
            out.extend((0..w).map(|o| ClbitRef::new(*r, o)));
        }
    };
    match instr {
        Instruction::IfTest { cond, .. } => subject(&cond.subject),
        Instruction::WhileLoop { cond, body } if !unsafe_while || !body.is_empty() => subject(&cond.subject),
        Instruction::Switch { subject: s, .. } => subject(s),
        _ => {}
    }
    for b in instr.bodies() {
        for i in b {
            reads(i, cregs, unsafe_while, out);
        }
    }
}

/// Drops top-level measurements whose bit is not part of the output, is
/// never read afterwards, and whose qubit is idle afterwards. In unsafe mode
/// a `while` with an empty body is not treated as reading its condition.
pub(crate) fn remove_final_measures(p: &Program, unsafe_while: bool) -> Program {
    let mut out = p.clone();
    let output: BTreeSet<ClbitRef> = match p.output {
        Some(r) => (0..p.cregs[r as usize]).map(|o| ClbitRef::new(r, o)).collect(),
        None => return out,
    };
    let mut later_reads = BTreeSet::new();
    let mut later_qubits = BTreeSet::new();
    let mut keep = vec![true; p.body.len()];
    for (i, instr) in p.body.iter().enumerate().rev() {
        if let Instruction::Measure { qubit, clbit } = instr {
            if !output.contains(clbit) && !later_reads.contains(clbit) && !later_qubits.contains(qubit) {
                keep[i] = false;
                continue;
            }
        }
        reads(instr, &p.cregs, unsafe_while, &mut later_reads);
        later_qubits.extend(Resources::of(instr, &p.cregs).qubits);
    }
    let mut k = keep.into_iter();
    out.body.retain(|_| k.next().expect("one flag per instruction"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{ClassicalCond, QubitRef};

    fn q(o: u32) -> QubitRef {
        QubitRef::new(0, o)
    }
    fn c(o: u32) -> ClbitRef {
        ClbitRef::new(0, o)
    }

    #[test]
    fn xx_cancels() {
        let mut p = Program::new(vec![1], vec![1]);
        p.body = vec![
            Instruction::gate(GateKind::X, vec![q(0)]),
            Instruction::gate(GateKind::X, vec![q(0)]),
            Instruction::measure(q(0), c(0)),
        ];
        assert_eq!(cancel_inverses(&p).body, vec![Instruction::measure(q(0), c(0))]);
    }

    #[test]
    fn rotations_merge_mod_tau() {
        let mut p = Program::new(vec![1], vec![1]);
        p.body = vec![
            Instruction::Gate(GateOp::rotation(GateKind::Rz, 4.0, vec![q(0)])),
            Instruction::Gate(GateOp::rotation(GateKind::Rz, 3.0, vec![q(0)])),
        ];
        let out = merge_rotations(&p);
        assert_eq!(out.body.len(), 1);
        let Instruction::Gate(g) = &out.body[0] else { panic!() };
        assert!((g.params[0] - (7.0 - TAU)).abs() < 1e-12);
    }

    #[test]
    fn elision_variants_differ_on_controlled() {
        let mut p = Program::new(vec![1, 1], vec![1]);
        p.body = vec![
            Instruction::ControlledOnInt { value: 1, ctrl: vec![QubitRef::new(1, 0)], body: vec![] },
            Instruction::ForRange { count: 3, body: vec![] },
            Instruction::WhileLoop { cond: ClassicalCond::register_eq(0, 1), body: vec![] },
        ];
        assert_eq!(elide_empty_cf(&p).body.len(), 1);
        assert_eq!(elide_empty_cf_unaware(&p).body.len(), 2);
    }

    #[test]
    fn full_commute_respects_classical_reads() {
        let mut p = Program::new(vec![2], vec![1]);
        p.body = vec![
            Instruction::measure(q(0), c(0)),
            Instruction::IfTest {
                cond: ClassicalCond::register_eq(0, 1),
                then_body: vec![Instruction::gate(GateKind::X, vec![q(1)])],
                else_body: vec![],
            },
        ];
        assert_eq!(commute_cf(&p, Deps::Full).body, p.body);
        assert_eq!(commute_cf(&p, Deps::QubitsOnly).body[0], p.body[1]);
    }

    #[test]
    fn alap_keeps_dependencies() {
        let mut p = Program::new(vec![2], vec![2]);
        p.body = vec![
            Instruction::gate(GateKind::H, vec![q(0)]),
            Instruction::gate(GateKind::X, vec![q(1)]),
            Instruction::gate(GateKind::Cx, vec![q(0), q(1)]),
            Instruction::measure(q(0), c(0)),
            Instruction::measure(q(1), c(1)),
        ];
        let out = alap(&p, Deps::Full, true);
        assert_eq!(out.body, p.body);
        let flat = alap(&p, Deps::Full, false);
        assert_eq!(flat.body[3], Instruction::measure(q(1), c(1)));
    }
}
