//! Seeded random program generator.
//!
//! A program has four parts: register declarations, random live operations,
//! dead-code pattern sites and an optional pass hint. Every random choice is
//! drawn from a stream named after its purpose (`plan`, `live`, `pattern`,
//! `place`), so changing one part of the plan does not reshuffle the others.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution as _;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deadcode::{instantiate, DeadRegion, Fragment, PatternError, PatternKind, PatternOptions, RegisterAlloc};
use crate::ir::{
    BodyPath, ClassicalCond, ClbitRef, CondSubject, GateKind, GateOp, Instruction, Program, ProgramMeta, QubitRef,
};
use crate::rng::{stream, StreamRng};

/// Relative frequency of each gate kind in live and filler code. Gates that
/// create superposition are kept rare so output distributions stay small.
const GATE_WEIGHTS: [(GateKind, u32); 16] = [
    (GateKind::H, 2),
    (GateKind::X, 4),
    (GateKind::Y, 1),
    (GateKind::Z, 2),
    (GateKind::S, 2),
    (GateKind::Sdg, 1),
    (GateKind::T, 2),
    (GateKind::Tdg, 1),
    (GateKind::Rx, 1),
    (GateKind::Ry, 1),
    (GateKind::Rz, 2),
    (GateKind::Rzz, 2),
    (GateKind::Cx, 4),
    (GateKind::Cz, 2),
    (GateKind::Ccx, 1),
    (GateKind::Swap, 1),
];

/// Pass names the generator may attach as a hint. All are semantics
/// preserving.
const HINT_PASSES: [&str; 4] = ["cancel-inverses", "merge-rotations", "elide-empty-cf", "canonicalize-measures"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_qubits: u32,
    /// Number of random live gates before pattern insertion.
    pub depth: usize,
    pub seed: u64,
    pub pattern_weights: BTreeMap<PatternKind, f64>,
    /// Longest chain of nested patterns at one site.
    pub max_nesting: usize,
    /// Number of top-level pattern sites.
    pub pattern_sites: usize,
    /// Largest number of random gates in a dead filler.
    pub filler_max: usize,
    /// Chance of inserting one library subcircuit.
    pub subcircuit_prob: f64,
    /// Chance of attaching a pass-pipeline hint.
    pub pass_pipeline_prob: f64,
    /// Number of candidate live control-flow sites.
    pub control_sites: usize,
    /// Chance that a candidate site becomes live control flow.
    pub live_control_prob: f64,
    /// Largest trip count of a live `for` loop.
    pub for_trip_max: u64,
    /// Allow live `switch` statements.
    pub live_switch: bool,
    /// Allow live `for` loops.
    pub live_for: bool,
    pub patterns: PatternOptions,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_qubits: 5,
            depth: 10,
            seed: 0,
            pattern_weights: PatternKind::ALL.iter().map(|k| (*k, 1.0)).collect(),
            max_nesting: 3,
            pattern_sites: 2,
            filler_max: 3,
            subcircuit_prob: 0.1,
            pass_pipeline_prob: 0.3,
            control_sites: 2,
            live_control_prob: 0.25,
            for_trip_max: 3,
            live_switch: true,
            live_for: true,
            patterns: PatternOptions::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("config file: {0}")]
    Parse(String),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

impl GenConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, GenError> {
        let cfg: GenConfig = toml::from_str(text).map_err(|e| GenError::Parse(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::Config(m.to_string()));
        if self.n_qubits == 0 || self.n_qubits > 64 {
            return bad("n_qubits must be in 1..=64");
        }
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if self.max_nesting == 0 || self.pattern_sites == 0 || self.filler_max == 0 {
            return bad("max_nesting, pattern_sites and filler_max must be at least 1");
        }
        if self.pattern_weights.values().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("pattern weights must be finite and non-negative");
        }
        if !self.pattern_weights.values().any(|w| *w > 0.0) {
            return bad("at least one pattern weight must be positive");
        }
        for (name, p) in [
            ("subcircuit_prob", self.subcircuit_prob),
            ("pass_pipeline_prob", self.pass_pipeline_prob),
            ("live_control_prob", self.live_control_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must be in [0, 1]"));
            }
        }
        if self.for_trip_max == 0 {
            return bad("for_trip_max must be at least 1");
        }
        Ok(())
    }

    fn weights(&self) -> Vec<f64> {
        PatternKind::ALL.iter().map(|k| self.pattern_weights.get(k).copied().unwrap_or(0.0)).collect()
    }
}

/// Draws a nesting chain for one pattern site, outermost kind first. The
/// chain length is uniform in `1..=max_nesting`; a controlled-on-int pattern
/// ends the chain because its body must stay unitary.
pub fn choose_patterns<R: Rng + ?Sized>(config: &GenConfig, rng: &mut R) -> Vec<PatternKind> {
    let dist = WeightedIndex::new(config.weights()).expect("checked weights");
    let depth = rng.gen_range(1..=config.max_nesting.max(1));
    let mut chain = Vec::with_capacity(depth);
    for _ in 0..depth {
        let kind = PatternKind::ALL[dist.sample(rng)];
        chain.push(kind);
        if !kind.admits_nesting() {
            break;
        }
    }
    chain
}

fn angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (rng.gen_range(0.0..TAU) * 1e5).round() / 1e5
}

fn data(q: u32) -> QubitRef {
    QubitRef::new(0, q)
}

fn random_gate<R: Rng + ?Sized>(n: u32, rng: &mut R) -> GateOp {
    let dist = WeightedIndex::new(GATE_WEIGHTS.iter().map(|(k, w)| if k.arity() as u32 <= n { *w } else { 0 }))
        .expect("single-qubit gates always allowed");
    let kind = GATE_WEIGHTS[dist.sample(rng)].0;
    let mut qs: Vec<u32> = (0..n).collect();
    let mut targets = Vec::with_capacity(kind.arity());
    for _ in 0..kind.arity() {
        let i = rng.gen_range(0..qs.len());
        targets.push(data(qs.swap_remove(i)));
    }
    let params = (0..kind.param_count()).map(|_| angle(rng)).collect();
    GateOp { kind, params, targets }
}

fn random_gates<R: Rng + ?Sized>(n: u32, count: usize, rng: &mut R) -> Vec<Instruction> {
    (0..count).map(|_| Instruction::Gate(random_gate(n, rng))).collect()
}

/// Picks `k` distinct data qubits.
fn pick_qubits<R: Rng + ?Sized>(n: u32, k: usize, rng: &mut R) -> Vec<QubitRef> {
    rand::seq::index::sample(rng, n as usize, k.min(n as usize)).into_iter().map(|i| data(i as u32)).collect()
}

/// Library subcircuits, lowered to the base gate set.
fn subcircuit<R: Rng + ?Sized>(n: u32, rng: &mut R) -> Vec<Instruction> {
    let width = rng.gen_range(1..=n.min(3)) as usize;
    let qs = pick_qubits(n, width, rng);
    let g = |k: GateKind, t: Vec<QubitRef>| Instruction::gate(k, t);
    let mut out = Vec::new();
    match rng.gen_range(0..3) {
        0 => {
            // GHZ preparation
            out.push(g(GateKind::H, vec![qs[0]]));
            for w in qs.windows(2) {
                out.push(g(GateKind::Cx, vec![w[0], w[1]]));
            }
        }
        1 => {
            // QFT-like ladder with controlled phases written as RZ/RZZ
            for (i, q) in qs.iter().enumerate() {
                out.push(g(GateKind::H, vec![*q]));
                for (j, r) in qs.iter().enumerate().skip(i + 1) {
                    let theta = std::f64::consts::PI / f64::from(1u32 << (j - i));
                    let theta = (theta * 1e5).round() / 1e5;
                    out.push(Instruction::Gate(GateOp::rotation(GateKind::Rz, theta, vec![*q])));
                    out.push(Instruction::Gate(GateOp::rotation(GateKind::Rz, theta, vec![*r])));
                    out.push(Instruction::Gate(GateOp::rotation(GateKind::Rzz, -theta, vec![*q, *r])));
                }
            }
        }
        _ => {
            // random Clifford block
            for _ in 0..2 * width {
                let k = [GateKind::H, GateKind::S, GateKind::Cx, GateKind::X][rng.gen_range(0..4)];
                if k == GateKind::Cx && width >= 2 {
                    let i = rng.gen_range(0..width);
                    let j = (i + rng.gen_range(1..width)) % width;
                    out.push(g(k, vec![qs[i], qs[j]]));
                } else if k != GateKind::Cx {
                    out.push(g(k, vec![qs[rng.gen_range(0..width)]]));
                }
            }
        }
    }
    out
}

/// One live control-flow construct conditioned on a mid-circuit measurement
/// or a fixed trip count.
fn live_control<R: Rng + ?Sized>(cfg: &GenConfig, alloc: &mut RegisterAlloc, rng: &mut R) -> Vec<Instruction> {
    let n = cfg.n_qubits;
    let body = |rng: &mut R| random_gates(n, rng.gen_range(1..=2), rng);
    let kinds: Vec<u8> = [(0, true), (1, cfg.live_switch), (2, cfg.live_for)]
        .into_iter()
        .filter_map(|(k, on)| on.then_some(k))
        .collect();
    match kinds[rng.gen_range(0..kinds.len())] {
        0 => {
            let q = data(rng.gen_range(0..n));
            let creg = alloc.alloc_creg(1);
            vec![
                Instruction::measure(q, ClbitRef::new(creg, 0)),
                Instruction::IfTest {
                    cond: ClassicalCond::register_eq(creg, rng.gen_range(0..2)),
                    then_body: body(rng),
                    else_body: if rng.gen_bool(0.5) { body(rng) } else { Vec::new() },
                },
            ]
        }
        1 => {
            let width = rng.gen_range(1..=n.min(2));
            let creg = alloc.alloc_creg(width);
            let qs = pick_qubits(n, width as usize, rng);
            let mut out: Vec<Instruction> =
                qs.iter().enumerate().map(|(i, q)| Instruction::measure(*q, ClbitRef::new(creg, i as u32))).collect();
            let values = 1u64 << width;
            let n_cases = rng.gen_range(1..=values.min(3));
            let cases = rand::seq::index::sample(rng, values as usize, n_cases as usize)
                .into_iter()
                .map(|v| (v as u64, body(rng)))
                .collect::<Vec<_>>();
            let mut cases = cases;
            cases.sort_by_key(|(v, _)| *v);
            let default = if rng.gen_bool(0.5) { body(rng) } else { Vec::new() };
            out.push(Instruction::Switch { subject: CondSubject::Register(creg), cases, default });
            out
        }
        _ => vec![Instruction::ForRange { count: rng.gen_range(1..=cfg.for_trip_max), body: body(rng) }],
    }
}

/// Builds the nested fragment for one pattern site.
fn pattern_site<R: Rng + ?Sized>(
    cfg: &GenConfig,
    chain: &[PatternKind],
    alloc: &mut RegisterAlloc,
    rng: &mut R,
) -> Result<Fragment, GenError> {
    let n = cfg.n_qubits;
    let mut filler = Fragment::from(random_gates(n, rng.gen_range(1..=cfg.filler_max), rng));
    for (level, kind) in chain.iter().rev().enumerate() {
        if level > 0 && rng.gen_bool(0.5) {
            // pad the nested fragment with dead gates in front of it
            let pad = random_gates(n, rng.gen_range(1..=cfg.filler_max), rng);
            let off = pad.len();
            let mut instrs = pad;
            instrs.append(&mut filler.instrs);
            let regions = filler.regions.iter().map(|r| r.rebased(&BodyPath::root(), off)).collect();
            filler = Fragment { instrs, regions };
        }
        let live = data(rng.gen_range(0..n));
        filler = instantiate(*kind, filler, live, alloc, &cfg.patterns, rng)?.into_fragment();
    }
    Ok(filler)
}

/// Generates one program from `config`. Identical configs give identical
/// programs.
pub fn generate(config: &GenConfig) -> Result<Program, GenError> {
    config.check()?;
    let n = config.n_qubits;
    let mut plan_rng: StreamRng = stream(config.seed, "plan");
    let mut live_rng = stream(config.seed, "live");
    let mut pattern_rng = stream(config.seed, "pattern");
    let mut place_rng = stream(config.seed, "place");

    let mut alloc = RegisterAlloc::new(vec![n], vec![n]);

    // live operations, as top-level items so pattern sites can go between them
    let mut items: Vec<Fragment> =
        random_gates(n, config.depth, &mut live_rng).into_iter().map(|i| vec![i].into()).collect();
    if live_rng.gen_bool(config.subcircuit_prob) {
        let at = live_rng.gen_range(0..=items.len());
        items.insert(at, subcircuit(n, &mut live_rng).into());
    }
    for _ in 0..config.control_sites {
        if live_rng.gen_bool(config.live_control_prob) {
            let at = live_rng.gen_range(0..=items.len());
            let ctl = live_control(config, &mut alloc, &mut live_rng);
            items.insert(at, ctl.into());
        }
    }
    let mut touched = vec![false; n as usize];
    for it in &items {
        for instr in &it.instrs {
            let mut qs = Vec::new();
            instr.qubits(&mut qs);
            for q in qs.into_iter().filter(|q| q.reg == 0) {
                touched[q.offset as usize] = true;
            }
        }
    }
    for q in 0..n {
        if !touched[q as usize] {
            let kind = [GateKind::X, GateKind::H, GateKind::S, GateKind::Z][live_rng.gen_range(0..4)];
            items.push(vec![Instruction::gate(kind, vec![data(q)])].into());
        }
    }

    // dead-code sites
    let mut patterns = Vec::new();
    for _ in 0..config.pattern_sites {
        let chain = choose_patterns(config, &mut plan_rng);
        patterns.extend(chain.iter().copied());
        let site = pattern_site(config, &chain, &mut alloc, &mut pattern_rng)?;
        let at = place_rng.gen_range(0..=items.len());
        items.insert(at, site);
    }

    let mut body = Vec::new();
    let mut regions: Vec<DeadRegion> = Vec::new();
    for it in items {
        let off = body.len();
        regions.extend(it.regions.iter().map(|r| r.rebased(&BodyPath::root(), off)));
        body.extend(it.instrs);
    }
    for q in 0..n {
        body.push(Instruction::measure(data(q), ClbitRef::new(0, q)));
    }

    let mut passes = Vec::new();
    if plan_rng.gen_bool(config.pass_pipeline_prob) {
        let k = plan_rng.gen_range(1..=2);
        for i in rand::seq::index::sample(&mut plan_rng, HINT_PASSES.len(), k).into_iter() {
            passes.push(HINT_PASSES[i].to_string());
        }
    }

    let mut p = Program::new(alloc.qregs, alloc.cregs);
    p.output = Some(0);
    p.body = body;
    p.dead_regions = regions;
    p.meta = ProgramMeta { seed: config.seed, n_qubits: n, patterns, passes };
    p.sort_regions();
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{serialize, validate};

    #[test]
    fn same_config_same_text() {
        let cfg = GenConfig { seed: 1, n_qubits: 3, ..GenConfig::default() };
        let a = serialize(&generate(&cfg).unwrap());
        let b = serialize(&generate(&cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn generated_programs_validate() {
        for seed in 0..50 {
            let cfg = GenConfig { seed, n_qubits: 1 + (seed % 5) as u32, ..GenConfig::default() };
            let p = generate(&cfg).unwrap();
            validate(&p).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            assert!(!p.dead_regions.is_empty());
        }
    }

    #[test]
    fn single_level_plans() {
        let cfg = GenConfig { max_nesting: 1, ..GenConfig::default() };
        let mut rng = stream(3, "t");
        for _ in 0..100 {
            assert_eq!(choose_patterns(&cfg, &mut rng).len(), 1);
        }
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = GenConfig::default();
        cfg.pattern_weights.values_mut().for_each(|w| *w = 0.0);
        assert!(matches!(generate(&cfg), Err(GenError::Config(_))));
        let cfg = GenConfig { n_qubits: 0, ..GenConfig::default() };
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = GenConfig { seed: 9, ..GenConfig::default() };
        let back = GenConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        let partial = GenConfig::from_toml_str("n_qubits = 2\n[pattern_weights]\nfor_zero = 1.0\n").unwrap();
        assert_eq!(partial.n_qubits, 2);
        assert_eq!(partial.pattern_weights.len(), 1);
    }
}
