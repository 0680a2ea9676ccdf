//! Program-to-program transformation passes: the system under test.
//!
//! The correct passes preserve the output distribution. The seeded-bug
//! passes each break a specific rule and are only reachable when a
//! [`Pipeline`] is built with `include_seeded_bugs`.

mod correct;
mod seeded;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{validate, ClbitRef, CondSubject, Instruction, Program, QubitRef};
use crate::simulator::{ErrorKind, ErrorRecord};

pub use correct::elide_empty_cf_unaware;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PassId {
    CancelInverses,
    MergeRotations,
    ElideEmptyCf,
    CanonicalizeMeasures,
    CommuteCf,
    AlapReschedule,
    RemoveFinalMeasures,
    /// B1: hoists control flow past instructions checking qubits only.
    CommuteSkipClassical,
    /// B2: reschedules by qubit-only moments and keeps moments reversed.
    AlapFlatMoments,
    /// B3: inverts control-flow bodies and has no inverse for `for` loops.
    CancelInversesCf,
    /// B4: ignores reads by `while` conditions whose body is empty.
    RemoveFinalMeasuresUnsafe,
}

impl PassId {
    pub const CORRECT: [PassId; 7] = [
        PassId::CancelInverses,
        PassId::MergeRotations,
        PassId::ElideEmptyCf,
        PassId::CanonicalizeMeasures,
        PassId::CommuteCf,
        PassId::AlapReschedule,
        PassId::RemoveFinalMeasures,
    ];

    pub const SEEDED: [PassId; 4] = [
        PassId::CommuteSkipClassical,
        PassId::AlapFlatMoments,
        PassId::CancelInversesCf,
        PassId::RemoveFinalMeasuresUnsafe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PassId::CancelInverses => "cancel-inverses",
            PassId::MergeRotations => "merge-rotations",
            PassId::ElideEmptyCf => "elide-empty-cf",
            PassId::CanonicalizeMeasures => "canonicalize-measures",
            PassId::CommuteCf => "commute-cf",
            PassId::AlapReschedule => "alap-reschedule",
            PassId::RemoveFinalMeasures => "remove-final-measures",
            PassId::CommuteSkipClassical => "commute-skip-classical",
            PassId::AlapFlatMoments => "alap-flat-moments",
            PassId::CancelInversesCf => "cancel-inverses-cf",
            PassId::RemoveFinalMeasuresUnsafe => "remove-final-measures-unsafe",
        }
    }

    /// Short alias `b1`..`b4` for seeded bugs.
    pub fn alias(self) -> Option<&'static str> {
        match self {
            PassId::CommuteSkipClassical => Some("b1"),
            PassId::AlapFlatMoments => Some("b2"),
            PassId::CancelInversesCf => Some("b3"),
            PassId::RemoveFinalMeasuresUnsafe => Some("b4"),
            _ => None,
        }
    }

    pub fn is_seeded_bug(self) -> bool {
        Self::SEEDED.contains(&self)
    }

    fn run(self, p: &Program) -> Result<Program, String> {
        match self {
            PassId::CancelInverses => Ok(correct::cancel_inverses(p)),
            PassId::MergeRotations => Ok(correct::merge_rotations(p)),
            PassId::ElideEmptyCf => Ok(correct::elide_empty_cf(p)),
            PassId::CanonicalizeMeasures => Ok(correct::canonicalize_measures(p)),
            PassId::CommuteCf => Ok(correct::commute_cf(p, Deps::Full)),
            PassId::AlapReschedule => Ok(correct::alap(p, Deps::Full, true)),
            PassId::RemoveFinalMeasures => Ok(correct::remove_final_measures(p, false)),
            PassId::CommuteSkipClassical => Ok(correct::commute_cf(p, Deps::QubitsOnly)),
            PassId::AlapFlatMoments => Ok(correct::alap(p, Deps::QubitsOnly, false)),
            PassId::CancelInversesCf => seeded::cancel_inverses_cf(p),
            PassId::RemoveFinalMeasuresUnsafe => Ok(correct::remove_final_measures(p, true)),
        }
    }
}

impl fmt::Display for PassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("unknown pass `{0}`")]
    Unknown(String),
    #[error("`{0}` is a seeded-bug pass; enable seeded bugs to use it")]
    SeededBugDisabled(String),
}

impl FromStr for PassId {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Self::CORRECT
            .iter()
            .chain(Self::SEEDED.iter())
            .copied()
            .find(|p| p.name() == s || p.alias() == Some(s))
            .ok_or_else(|| PipelineError::Unknown(s.to_string()))
    }
}

/// An ordered list of passes. Seeded-bug passes can only be present when
/// `include_seeded_bugs` is set.
///
/// A pipeline may also name an optimization level `O0`..`O3` for an external
/// stack. The builtin backend ignores it; the bridge forwards it as the
/// request's `pipeline_hint`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pipeline {
    passes: Vec<PassId>,
    include_seeded_bugs: bool,
    #[serde(default)]
    opt_level: Option<u8>,
}

pub const MAX_OPT_LEVEL: u8 = 3;

fn opt_level_token(s: &str) -> Option<u8> {
    let d = s.strip_prefix('O')?;
    d.parse::<u8>().ok().filter(|l| *l <= MAX_OPT_LEVEL && d.len() == 1)
}

impl Pipeline {
    pub fn new(passes: Vec<PassId>, include_seeded_bugs: bool) -> Result<Self, PipelineError> {
        if !include_seeded_bugs {
            if let Some(p) = passes.iter().find(|p| p.is_seeded_bug()) {
                return Err(PipelineError::SeededBugDisabled(p.name().to_string()));
            }
        }
        Ok(Self { passes, include_seeded_bugs, opt_level: None })
    }

    /// Parses `a+b+c`, where one token may be an optimization level such as
    /// `O2`. An empty string or `none` is the empty pipeline.
    pub fn parse(text: &str, include_seeded_bugs: bool) -> Result<Self, PipelineError> {
        let text = text.trim();
        if text.is_empty() || text == "none" {
            return Self::new(Vec::new(), include_seeded_bugs);
        }
        let mut passes = Vec::new();
        let mut opt_level = None;
        for tok in text.split('+').map(str::trim) {
            match opt_level_token(tok) {
                Some(l) if opt_level.is_none() => opt_level = Some(l),
                Some(_) => return Err(PipelineError::Unknown(format!("second optimization level {tok}"))),
                None => passes.push(PassId::from_str(tok)?),
            }
        }
        Ok(Self { opt_level, ..Self::new(passes, include_seeded_bugs)? })
    }

    pub fn opt_level(&self) -> Option<u8> {
        self.opt_level
    }

    pub fn passes(&self) -> &[PassId] {
        &self.passes
    }

    pub fn include_seeded_bugs(&self) -> bool {
        self.include_seeded_bugs
    }

    /// The same pipeline with `hint` passes run first. Unknown or seeded
    /// names in the hint are ignored.
    pub fn with_prefix(&self, hint: &[String]) -> Pipeline {
        let mut passes: Vec<PassId> =
            hint.iter().filter_map(|h| h.parse::<PassId>().ok()).filter(|p| !p.is_seeded_bug()).collect();
        passes.extend(self.passes.iter().copied());
        Pipeline { passes, ..self.clone() }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<String> = self.passes.iter().map(|p| p.name().to_string()).collect();
        names.extend(self.opt_level.map(|l| format!("O{l}")));
        if names.is_empty() {
            return f.write_str("none");
        }
        f.write_str(&names.join("+"))
    }
}

/// Runs every pass of `pipeline` in order. Failures come back as `Pass`
/// error records; the output never carries dead-region markers.
pub fn apply(pipeline: &Pipeline, p: &Program) -> Result<Program, ErrorRecord> {
    validate(p).map_err(|e| ErrorRecord::new(ErrorKind::Validation, e.to_string()))?;
    let mut cur = p.clone();
    cur.dead_regions.clear();
    for pass in &pipeline.passes {
        cur = pass.run(&cur).map_err(|m| ErrorRecord::new(ErrorKind::Pass, format!("{pass}: {m}")))?;
        cur.dead_regions.clear();
        validate(&cur)
            .map_err(|e| ErrorRecord::new(ErrorKind::Pass, format!("{pass}: produced an invalid program: {e}")))?;
    }
    Ok(cur)
}

/// Which dependencies a scheduling pass respects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Deps {
    Full,
    QubitsOnly,
}

/// Resources touched by an instruction subtree.
#[derive(Debug, Clone, Default)]
pub(crate) struct Resources {
    pub qubits: BTreeSet<QubitRef>,
    pub clbits: BTreeSet<ClbitRef>,
    /// Contains a `break`/`continue` that escapes the subtree.
    pub barrier: bool,
}

impl Resources {
    pub fn of(instr: &Instruction, cregs: &[u32]) -> Self {
        let mut r = Resources::default();
        r.add(instr, cregs, 0);
        r
    }

    fn subject(&mut self, s: &CondSubject, cregs: &[u32]) {
        match s {
            CondSubject::Bit(b) => {
                self.clbits.insert(*b);
            }
            CondSubject::Register(reg) => {
                let w = cregs.get(*reg as usize).copied().unwrap_or(0);
                self.clbits.extend((0..w).map(|o| ClbitRef::new(*reg, o)));
            }
        }
    }

    fn add(&mut self, instr: &Instruction, cregs: &[u32], loop_depth: usize) {
        match instr {
            Instruction::Gate(g) => self.qubits.extend(g.targets.iter().copied()),
            Instruction::Measure { qubit, clbit } => {
                self.qubits.insert(*qubit);
                self.clbits.insert(*clbit);
            }
            Instruction::Reset { qubit } => {
                self.qubits.insert(*qubit);
            }
            Instruction::IfTest { cond, .. } | Instruction::WhileLoop { cond, .. } => {
                self.subject(&cond.subject, cregs)
            }
            Instruction::Switch { subject, .. } => self.subject(subject, cregs),
            Instruction::ControlledOnInt { ctrl, .. } => self.qubits.extend(ctrl.iter().copied()),
            Instruction::BreakLoop | Instruction::ContinueLoop => {
                if loop_depth == 0 {
                    self.barrier = true;
                }
            }
            Instruction::ForRange { .. } => {}
        }
        let inner = loop_depth + usize::from(instr.is_loop());
        for b in instr.bodies() {
            for i in b {
                self.add(i, cregs, inner);
            }
        }
    }

    pub fn conflicts(&self, other: &Resources, deps: Deps) -> bool {
        if !self.qubits.is_disjoint(&other.qubits) {
            return true;
        }
        match deps {
            Deps::QubitsOnly => false,
            Deps::Full => self.barrier || other.barrier || !self.clbits.is_disjoint(&other.clbits),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_passes_need_the_flag() {
        assert!(matches!(Pipeline::parse("b1", false), Err(PipelineError::SeededBugDisabled(_))));
        let p = Pipeline::parse("cancel-inverses+b3", true).unwrap();
        assert_eq!(p.to_string(), "cancel-inverses+cancel-inverses-cf");
        assert!(Pipeline::parse("nope", true).is_err());
        assert_eq!(Pipeline::parse("none", false).unwrap().passes().len(), 0);
    }

    #[test]
    fn optimization_level_token() {
        let p = Pipeline::parse("O2+cancel-inverses", false).unwrap();
        assert_eq!(p.opt_level(), Some(2));
        assert_eq!(p.to_string(), "cancel-inverses+O2");
        assert_eq!(Pipeline::parse(&p.to_string(), false).unwrap(), p);
        assert_eq!(Pipeline::parse("O1", false).unwrap().to_string(), "O1");
        assert!(Pipeline::parse("O4", false).is_err());
        assert!(Pipeline::parse("O1+O2", false).is_err());
    }

    #[test]
    fn names_round_trip() {
        for p in PassId::CORRECT.iter().chain(PassId::SEEDED.iter()) {
            assert_eq!(p.name().parse::<PassId>().unwrap(), *p);
        }
    }
}
