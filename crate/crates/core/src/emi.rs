//! EMI variant derivation: delete the contents of every dead region and keep
//! the scaffolding around it.

use crate::ir::{Instruction, Program};
use crate::simulator::{enumerate_distribution, EnumCaps, EnumerationError};

/// Returns `p` with every instruction inside a dead region removed.
///
/// Guards, ancilla registers and the enclosing control-flow nodes stay, so an
/// `if` whose dead branch was emptied is still an `if`. A controlled-on-int
/// node left with an empty body is removed entirely. The variant has no dead
/// regions.
pub fn derive_variant(p: &Program) -> Program {
    let mut out = p.clone();
    let mut spans: Vec<_> = p.dead_regions.iter().map(|r| r.span.clone()).collect();
    // Deepest and latest first, so earlier spans keep their indices.
    spans.sort_by_key(|s| std::cmp::Reverse(s.doc_key()));
    for span in spans {
        if let Some(body) = out.body_at_mut(&span.body) {
            if span.start < span.end && span.end <= body.len() {
                body.drain(span.start..span.end);
            }
        }
    }
    if !p.dead_regions.is_empty() {
        drop_empty_controlled(&mut out.body);
    }
    out.dead_regions.clear();
    out
}

fn drop_empty_controlled(body: &mut Vec<Instruction>) {
    body.retain(|i| !matches!(i, Instruction::ControlledOnInt { body, .. } if body.is_empty()));
    for instr in body.iter_mut() {
        for b in instr.bodies_mut() {
            drop_empty_controlled(b);
        }
    }
}

/// Largest absolute difference between the exact output distributions of
/// `p` and `q`, with at most `limit` qubits in superposition at a time.
pub fn check_equivalence_exact(p: &Program, q: &Program, limit: usize) -> Result<f64, EnumerationError> {
    let caps = EnumCaps { max_qubits: limit, ..EnumCaps::default() };
    let a = enumerate_distribution(p, &caps)?;
    let b = enumerate_distribution(q, &caps)?;
    Ok(a.distribution.linf(&b.distribution))
}
