//! Shot-based statevector simulator with mid-circuit measurement, classical
//! control flow, loop fuel and per-instruction coverage, plus an exact path
//! enumerator used as the reference oracle.
//!
//! Bit order: qubit 0 is the least-significant amplitude index bit, and bit
//! `c[0]` of the output register is the least-significant bit of an outcome.

mod exec;
pub mod statevector;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::Distribution;
use crate::ir::{validate, InstrPath, Program};
use crate::par::{map_indices, ExecMode};
use crate::rng::shot_stream;
use exec::{Compiled, ExecError, Executor, PathChooser, RngChooser};

pub use exec::PRUNE_EPS;
pub use statevector::StateVector;

/// Default per-loop iteration limit within one shot.
pub const DEFAULT_FUEL: u64 = 10_000;
/// Default limit on simultaneously superposed qubits.
pub const DEFAULT_MAX_ACTIVE: usize = 20;

const SHOT_CHUNK: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Validation,
    Pass,
    InfiniteLoop,
    Enumeration,
    Internal,
}

impl ErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Validation => "validation",
            ErrorKind::Pass => "pass",
            ErrorKind::InfiniteLoop => "infinite_loop",
            ErrorKind::Enumeration => "enumeration",
            ErrorKind::Internal => "internal",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Strips file paths, hex literals and digit runs from an error message so
/// that messages differing only in addresses, ids or counts compare equal.
pub fn normalize_message(message: &str) -> String {
    static RES: OnceLock<[Regex; 4]> = OnceLock::new();
    let [path, hex, digits, ws] = RES.get_or_init(|| {
        [
            Regex::new(r"(?:[A-Za-z]:)?(?:[\w.\-]*[/\\])+[\w.\-]+").expect("regex"),
            Regex::new(r"0[xX][0-9a-fA-F]+").expect("regex"),
            Regex::new(r"\d+").expect("regex"),
            Regex::new(r"\s+").expect("regex"),
        ]
    });
    let s = path.replace_all(message, "<path>");
    let s = hex.replace_all(&s, "<hex>");
    let s = digits.replace_all(&s, "<n>");
    ws.replace_all(s.trim(), " ").into_owned()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: ErrorKind,
    pub message: String,
    pub signature: String,
}

impl ErrorRecord {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        let message = message.into();
        let signature = format!("{}: {}", kind.name(), normalize_message(&message));
        Self { kind, message, signature }
    }
}

impl fmt::Display for ErrorRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

/// Histogram of output bitstrings. Keys are outcome integers of `width` bits.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Counts {
    width: usize,
    map: BTreeMap<u64, u64>,
    total: u64,
}

impl Counts {
    pub fn new(width: usize) -> Self {
        Self { width, map: BTreeMap::new(), total: 0 }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn map(&self) -> &BTreeMap<u64, u64> {
        &self.map
    }

    pub fn get(&self, outcome: u64) -> u64 {
        self.map.get(&outcome).copied().unwrap_or(0)
    }

    pub fn add(&mut self, outcome: u64, n: u64) {
        if n > 0 {
            *self.map.entry(outcome).or_default() += n;
            self.total += n;
        }
    }

    pub fn merge(&mut self, other: &Counts) {
        for (k, v) in &other.map {
            self.add(*k, *v);
        }
    }

    /// Outcome as a bitstring, most-significant bit first.
    pub fn bitstring(&self, outcome: u64) -> String {
        if self.width == 0 {
            return String::new();
        }
        format!("{:0w$b}", outcome, w = self.width)
    }

    pub fn to_bitstrings(&self) -> BTreeMap<String, u64> {
        self.map.iter().map(|(k, v)| (self.bitstring(*k), *v)).collect()
    }

    /// Inverse of [`Counts::to_bitstrings`]. Every key must have `width`
    /// binary digits.
    pub fn from_bitstrings(width: usize, map: &BTreeMap<String, u64>) -> Result<Self, String> {
        let mut c = Counts::new(width);
        for (k, v) in map {
            if k.len() != width || !k.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(format!("bad bitstring key {k:?} for width {width}"));
            }
            let key = if width == 0 { 0 } else { u64::from_str_radix(k, 2).map_err(|e| e.to_string())? };
            c.add(key, *v);
        }
        Ok(c)
    }

    pub fn to_distribution(&self) -> Distribution {
        let t = self.total.max(1) as f64;
        Distribution::from_probs(self.width, self.map.iter().map(|(k, v)| (*k, *v as f64 / t)))
    }
}

impl Serialize for Counts {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire {
            width: usize,
            total: u64,
            counts: BTreeMap<String, u64>,
        }
        Wire { width: self.width, total: self.total, counts: self.to_bitstrings() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Counts {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            width: usize,
            counts: BTreeMap<String, u64>,
        }
        let w = Wire::deserialize(d)?;
        Counts::from_bitstrings(w.width, &w.counts).map_err(serde::de::Error::custom)
    }
}

pub type ExecOutcome = Result<Counts, ErrorRecord>;

/// Execution count per instruction path.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoverageMap(pub BTreeMap<InstrPath, u64>);

impl CoverageMap {
    pub fn get(&self, path: &InstrPath) -> u64 {
        self.0.get(path).copied().unwrap_or(0)
    }

    fn from_vec(c: &Compiled, counts: &[u64]) -> Self {
        CoverageMap(c.paths.iter().cloned().zip(counts.iter().copied()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub fuel: u64,
    pub max_active_qubits: usize,
    pub mode: ExecMode,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { fuel: DEFAULT_FUEL, max_active_qubits: DEFAULT_MAX_ACTIVE, mode: ExecMode::Parallel }
    }
}

fn exec_error_record(e: ExecError) -> ErrorRecord {
    match e {
        ExecError::InfiniteLoop { path, fuel } => {
            ErrorRecord::new(ErrorKind::InfiniteLoop, format!("loop at {path} exceeded fuel of {fuel} iterations"))
        }
        ExecError::QubitCap { cap } => {
            ErrorRecord::new(ErrorKind::Internal, format!("more than {cap} qubits in superposition"))
        }
        ExecError::Internal(m) => ErrorRecord::new(ErrorKind::Internal, m),
    }
}

/// Samples `shots` shots of `p` with default options.
pub fn run(p: &Program, shots: u64, seed: u64) -> (ExecOutcome, CoverageMap) {
    run_with(p, shots, seed, &RunOptions::default())
}

/// Samples `shots` shots. Shot `i` draws its measurement outcomes from
/// `shot_stream(seed, i)`, so the result does not depend on `opts.mode`.
pub fn run_with(p: &Program, shots: u64, seed: u64, opts: &RunOptions) -> (ExecOutcome, CoverageMap) {
    if let Err(e) = validate(p) {
        return (Err(ErrorRecord::new(ErrorKind::Validation, e.to_string())), CoverageMap::default());
    }
    let compiled = Compiled::new(p);
    let width = p.output_width();
    let chunks = shots.div_ceil(SHOT_CHUNK) as usize;
    let parts = map_indices(opts.mode, chunks, |ci| {
        let start = ci as u64 * SHOT_CHUNK;
        let end = (start + SHOT_CHUNK).min(shots);
        let mut counts = Counts::new(width);
        let chooser = RngChooser(shot_stream(seed, start));
        let mut ex = Executor::new(&compiled, chooser, opts.fuel, opts.max_active_qubits, false);
        for shot in start..end {
            ex.reset_shot();
            ex.chooser = RngChooser(shot_stream(seed, shot));
            match ex.run_shot() {
                Ok(o) => counts.add(o, 1),
                Err(e) => return (Err(e), ex.coverage),
            }
        }
        (Ok(counts), ex.coverage)
    });
    let mut total = Counts::new(width);
    let mut cov = vec![0u64; compiled.nodes.len()];
    let mut first_err = None;
    for (res, c) in parts {
        for (a, b) in cov.iter_mut().zip(&c) {
            *a += b;
        }
        match res {
            Ok(counts) => total.merge(&counts),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let coverage = CoverageMap::from_vec(&compiled, &cov);
    match first_err {
        Some(e) => (Err(exec_error_record(e)), coverage),
        None => (Ok(total), coverage),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumCaps {
    pub max_qubits: usize,
    pub max_paths: usize,
    pub fuel: u64,
}

impl Default for EnumCaps {
    fn default() -> Self {
        Self { max_qubits: DEFAULT_MAX_ACTIVE, max_paths: 1 << 16, fuel: DEFAULT_FUEL }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnumerationError {
    #[error("invalid program: {0}")]
    Invalid(String),
    #[error("loop at {path} exceeded fuel of {fuel} iterations")]
    Fuel { path: InstrPath, fuel: u64 },
    #[error("more than {0} qubits in superposition")]
    QubitCap(usize),
    #[error("more than {0} measurement paths")]
    PathCap(usize),
    #[error("internal: {0}")]
    Internal(String),
}

impl From<EnumerationError> for ErrorRecord {
    fn from(e: EnumerationError) -> Self {
        let kind = match e {
            EnumerationError::Invalid(_) => ErrorKind::Validation,
            EnumerationError::Fuel { .. } => ErrorKind::InfiniteLoop,
            _ => ErrorKind::Enumeration,
        };
        ErrorRecord::new(kind, e.to_string())
    }
}

/// Outcome statistics for one Measure instruction over all reachable paths.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeasureStat {
    /// Number of (path, execution) pairs that reached the measurement.
    pub executions: u64,
    /// Largest probability of the less likely outcome seen at any execution.
    pub max_minority: f64,
    /// Path-probability mass that observed outcome 0 and outcome 1.
    pub mass: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct Enumeration {
    pub distribution: Distribution,
    /// Number of reachable paths on which each instruction ran at least once.
    pub coverage: CoverageMap,
    pub measures: BTreeMap<InstrPath, MeasureStat>,
    pub paths: usize,
}

/// Computes the exact output distribution by following both outcomes of
/// every non-deterministic measurement. Branches with probability at or
/// below [`PRUNE_EPS`] are dropped.
pub fn enumerate_distribution(p: &Program, caps: &EnumCaps) -> Result<Enumeration, EnumerationError> {
    validate(p).map_err(|e| EnumerationError::Invalid(e.to_string()))?;
    let compiled = Compiled::new(p);
    let mut probs: BTreeMap<u64, f64> = BTreeMap::new();
    let mut cov = vec![0u64; compiled.nodes.len()];
    let mut stats: BTreeMap<usize, MeasureStat> = BTreeMap::new();
    let mut work: Vec<Vec<bool>> = vec![Vec::new()];
    let mut paths = 0usize;
    while let Some(prefix) = work.pop() {
        let mut ex = Executor::new(&compiled, PathChooser::new(prefix), caps.fuel, caps.max_qubits, true);
        let out = ex.run_shot().map_err(|e| match e {
            ExecError::InfiniteLoop { path, fuel } => EnumerationError::Fuel { path, fuel },
            ExecError::QubitCap { cap } => EnumerationError::QubitCap(cap),
            ExecError::Internal(m) => EnumerationError::Internal(m),
        })?;
        let prob = ex.chooser.prob;
        work.extend(ex.chooser.pending.drain(..).rev());
        if prob <= PRUNE_EPS {
            continue;
        }
        paths += 1;
        if paths > caps.max_paths {
            return Err(EnumerationError::PathCap(caps.max_paths));
        }
        *probs.entry(out).or_default() += prob;
        for (a, b) in cov.iter_mut().zip(&ex.coverage) {
            *a += u64::from(*b > 0);
        }
        for &(id, p1, bit) in &ex.events {
            let s = stats.entry(id).or_default();
            s.executions += 1;
            s.max_minority = s.max_minority.max(p1.min(1.0 - p1));
            s.mass[usize::from(bit)] += prob;
        }
    }
    Ok(Enumeration {
        distribution: Distribution::from_probs(p.output_width(), probs),
        coverage: CoverageMap::from_vec(&compiled, &cov),
        measures: stats.into_iter().map(|(id, s)| (compiled.paths[id].clone(), s)).collect(),
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{ClassicalCond, ClbitRef, GateKind, Instruction, QubitRef};

    fn q(o: u32) -> QubitRef {
        QubitRef::new(0, o)
    }
    fn c(o: u32) -> ClbitRef {
        ClbitRef::new(0, o)
    }

    #[test]
    fn bell_enumeration_is_exact() {
        let mut p = Program::new(vec![2], vec![2]);
        p.body = vec![
            Instruction::gate(GateKind::H, vec![q(0)]),
            Instruction::gate(GateKind::Cx, vec![q(0), q(1)]),
            Instruction::measure(q(0), c(0)),
            Instruction::measure(q(1), c(1)),
        ];
        let e = enumerate_distribution(&p, &EnumCaps::default()).unwrap();
        assert_eq!(e.paths, 2);
        assert!((e.distribution.prob(0b00) - 0.5).abs() < 1e-15);
        assert!((e.distribution.prob(0b11) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn x_then_measure_is_deterministic() {
        let mut p = Program::new(vec![1], vec![1]);
        p.body = vec![Instruction::gate(GateKind::X, vec![q(0)]), Instruction::measure(q(0), c(0))];
        let (out, cov) = run(&p, 100, 3);
        let counts = out.unwrap();
        assert_eq!(counts.get(1), 100);
        assert_eq!(counts.to_bitstrings().keys().collect::<Vec<_>>(), vec!["1"]);
        assert_eq!(cov.get(&InstrPath(vec![0])), 100);
    }

    #[test]
    fn unbounded_while_hits_fuel() {
        let mut p = Program::new(vec![1], vec![1]);
        p.body = vec![Instruction::WhileLoop { cond: ClassicalCond::register_eq(0, 0), body: vec![] }];
        let (out, _) = run(&p, 4, 0);
        assert_eq!(out.unwrap_err().kind, ErrorKind::InfiniteLoop);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let mut p = Program::new(vec![3], vec![3]);
        p.body = vec![
            Instruction::gate(GateKind::H, vec![q(0)]),
            Instruction::gate(GateKind::Ry, vec![q(1)]),
            Instruction::measure(q(0), c(0)),
            Instruction::measure(q(1), c(1)),
        ];
        if let Instruction::Gate(g) = &mut p.body[1] {
            g.params = vec![0.7];
        }
        let seq = RunOptions { mode: ExecMode::Sequential, ..RunOptions::default() };
        let a = run_with(&p, 1000, 9, &seq);
        let b = run_with(&p, 1000, 9, &RunOptions::default());
        assert_eq!(a, b);
    }

    #[test]
    fn signatures_drop_numbers_paths_and_hex() {
        let a = ErrorRecord::new(ErrorKind::Pass, "boom at 0x7ffe12 in /tmp/x/y.py line 12");
        let b = ErrorRecord::new(ErrorKind::Pass, "boom at 0xdead in /usr/lib/z.py line 400");
        assert_eq!(a.signature, b.signature);
        assert_ne!(a.signature, ErrorRecord::new(ErrorKind::Internal, "boom").signature);
    }

    #[test]
    fn counts_bitstrings_round_trip() {
        let mut c = Counts::new(3);
        c.add(0b101, 4);
        c.add(0b001, 1);
        let m = c.to_bitstrings();
        assert_eq!(m["101"], 4);
        assert_eq!(Counts::from_bitstrings(3, &m).unwrap(), c);
        assert!(Counts::from_bitstrings(2, &m).is_err());
    }
}
