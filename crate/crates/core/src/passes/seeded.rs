use super::correct::cancel_in_body;
use crate::ir::{Instruction, Program};

fn has_while_or_switch(body: &[Instruction]) -> bool {
    body.iter().any(|i| {
        matches!(i, Instruction::WhileLoop { .. } | Instruction::Switch { .. })
            || i.bodies().iter().any(|b| has_while_or_switch(b))
    })
}

/// Inverse of one instruction as seen by the body canceller. Non-unitary
/// instructions are passed through; nested conditionals are inverted
/// branch by branch; loops have no inverse.
fn inverse(instr: &Instruction) -> Result<Option<Instruction>, String> {
    match instr {
        Instruction::Gate(g) => Ok(Some(Instruction::Gate(g.inverse()))),
        Instruction::IfTest { then_body, else_body, .. } => {
            for i in then_body.iter().chain(else_body) {
                inverse(i)?;
            }
            Ok(None)
        }
        Instruction::ControlledOnInt { body, .. } => {
            for i in body {
                inverse(i)?;
            }
            Ok(None)
        }
        Instruction::ForRange { .. } => Err("inverse() not implemented for for_loop".into()),
        Instruction::WhileLoop { .. } => Err("inverse() not implemented for while_loop".into()),
        Instruction::Switch { .. } => Err("inverse() not implemented for switch_case".into()),
        _ => Ok(None),
    }
}

fn process(body: &mut Vec<Instruction>, inside_cf: bool) -> Result<(), String> {
    for instr in body.iter_mut() {
        for b in instr.bodies_mut() {
            process(b, true)?;
        }
    }
    if inside_cf {
        for instr in body.iter() {
            inverse(instr)?;
        }
        cancel_in_body(body, false);
    }
    Ok(())
}

/// B3: cancels inverse pairs inside control-flow bodies by inverting every
/// instruction there. Programs with `while` or `switch` are skipped outright,
/// and a `for` loop inside a body has no inverse and aborts the pass.
pub fn cancel_inverses_cf(p: &Program) -> Result<Program, String> {
    if has_while_or_switch(&p.body) {
        return Ok(p.clone());
    }
    let mut out = p.clone();
    process(&mut out.body, false)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{GateKind, QubitRef};

    #[test]
    fn nested_for_aborts_top_level_for_does_not() {
        let x = Instruction::gate(GateKind::X, vec![QubitRef::new(0, 0)]);
        let mut p = Program::new(vec![1], vec![1]);
        p.body = vec![Instruction::ForRange { count: 2, body: vec![x.clone(), x.clone()] }];
        let out = cancel_inverses_cf(&p).unwrap();
        assert!(matches!(&out.body[0], Instruction::ForRange { body, .. } if body.is_empty()));
        p.body =
            vec![Instruction::ForRange { count: 2, body: vec![Instruction::ForRange { count: 0, body: vec![x] }] }];
        assert_eq!(cancel_inverses_cf(&p).unwrap_err(), "inverse() not implemented for for_loop");
    }
}
