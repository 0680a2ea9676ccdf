//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use qfuzz_core::checker::{budget, hellinger, speedup_ratio, Distribution};
use qfuzz_core::deadcode::{Category, PatternKind};
use qfuzz_core::emi::derive_variant;
use qfuzz_core::generator::{generate, GenConfig};
use qfuzz_core::harness::{run_campaign, BuiltinExecutor, CampaignConfig, CampaignSummary, Verdict};
use qfuzz_core::ir::{Instruction, Program};
use qfuzz_core::passes::{apply, PassId, Pipeline};
use qfuzz_core::simulator::{enumerate_distribution, run, EnumCaps, ErrorKind};

const MASTER_SEED: u64 = 20_240_611;

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

struct Gate {
    failed: usize,
}

impl Gate {
    fn check(&mut self, name: &str, f: impl FnOnce() -> Result<String, String>) {
        let t = Instant::now();
        let r = f();
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(detail) => println!("PASS {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                self.failed += 1;
                println!("FAIL {name}: {detail} ({secs:.1}s)");
            }
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn budget_table() -> Result<String, String> {
    let b6 = budget(0.1, 6).map_err(|e| e.to_string())?;
    let b8 = budget(0.1, 8).map_err(|e| e.to_string())?;
    ensure((b6.s_round, b6.s_std, b6.s_max) == (476, 2263, 4526), || format!("n=6 gave {b6:?}"))?;
    ensure((b8.s_round, b8.s_std, b8.s_max) == (800, 6400, 12800), || format!("n=8 gave {b8:?}"))?;
    let want6 = vec![952, 1428, 1904, 2380, 2856, 3332, 3808, 4284, 4526];
    let want8: Vec<u64> = (2..=16).map(|k| k * 800).collect();
    ensure(b6.termination_points() == want6, || format!("n=6 points {:?}", b6.termination_points()))?;
    ensure(b8.termination_points() == want8, || format!("n=8 points {:?}", b8.termination_points()))?;
    Ok("n=6 (476, 2263, 4526), n=8 (800, 6400, 12800), shot rows match".into())
}

/// Nesting depth of every region: 1 for a region with no enclosing region.
fn region_depths(p: &Program) -> Vec<usize> {
    p.dead_regions
        .iter()
        .map(|r| 1 + p.dead_regions.iter().filter(|o| o.id != r.id && o.span.encloses(&r.span)).count())
        .collect()
}

fn corpus() -> Vec<Program> {
    (0..200u64)
        .map(|i| {
            let cfg = GenConfig {
                n_qubits: 2 + (i % 4) as u32,
                seed: MASTER_SEED ^ i,
                max_nesting: 3,
                ..GenConfig::default()
            };
            generate(&cfg).expect("default generator config is valid")
        })
        .collect()
}

fn emi_preservation(corpus: &[Program]) -> Result<String, String> {
    let caps = EnumCaps::default();
    let mut kinds = BTreeSet::new();
    let mut deepest = 0;
    let mut worst: f64 = 0.0;
    for (i, p) in corpus.iter().enumerate() {
        kinds.extend(p.dead_regions.iter().map(|r| r.kind));
        deepest = deepest.max(region_depths(p).into_iter().max().unwrap_or(0));
        let v = derive_variant(p);
        let ep = enumerate_distribution(p, &caps).map_err(|e| format!("program {i}: {e}"))?;
        let ev = enumerate_distribution(&v, &caps).map_err(|e| format!("variant {i}: {e}"))?;
        let d = ep.distribution.linf(&ev.distribution);
        worst = worst.max(d);
        ensure(d <= 1e-9, || format!("program {i}: L-inf {d:e}"))?;
        let (sampled, cov) = run(p, 10_000, MASTER_SEED + i as u64);
        sampled.map_err(|e| format!("program {i} failed to run: {e}"))?;
        for path in p.dead_instruction_paths() {
            ensure(ep.coverage.get(&path) == 0, || format!("program {i}: dead {path} reached in enumeration"))?;
            ensure(cov.get(&path) == 0, || format!("program {i}: dead {path} ran in sampling"))?;
        }
    }
    ensure(kinds.len() == PatternKind::ALL.len(), || format!("patterns exercised: {kinds:?}"))?;
    ensure(deepest >= 3, || format!("deepest nesting {deepest}"))?;
    Ok(format!("200 programs, {} pattern kinds, nesting up to {deepest}, max L-inf {worst:.1e}", kinds.len()))
}

fn guard_determinism(corpus: &[Program]) -> Result<String, String> {
    let caps = EnumCaps::default();
    let mut checked = 0;
    let mut ctrl_checked = 0;
    let mut worst: f64 = 0.0;
    for (i, p) in corpus.iter().enumerate() {
        let e = enumerate_distribution(p, &caps).map_err(|e| format!("program {i}: {e}"))?;
        for r in p.dead_regions.iter().filter(|r| r.kind.category() == Category::InputDependent) {
            if r.kind == PatternKind::ControlledOnIntDead {
                // no measurement: the control register must stay in |0..0>,
                // which never equals the nonzero control value
                let mut touched = false;
                p.walk(|path, instr| {
                    let mut qs = Vec::new();
                    if matches!(instr, Instruction::Gate(_) | Instruction::Measure { .. } | Instruction::Reset { .. }) {
                        instr.qubits(&mut qs);
                    }
                    if !r.span.contains_path(path) && qs.iter().any(|q| r.ancilla_qubits.contains(q)) {
                        touched = true;
                    }
                });
                ensure(!touched, || format!("program {i}: control register of region {} is written", r.id))?;
                ctrl_checked += 1;
                continue;
            }
            let mut guards = Vec::new();
            p.walk(|path, instr| {
                if let Instruction::Measure { clbit, .. } = instr {
                    if r.ancilla_clbits.contains(clbit) {
                        guards.push(path.clone());
                    }
                }
            });
            ensure(!guards.is_empty(), || format!("program {i}: region {} has no guard measurement", r.id))?;
            for g in guards {
                let s = e.measures.get(&g).copied().unwrap_or_default();
                worst = worst.max(s.max_minority);
                ensure(s.max_minority <= 1e-12, || format!("program {i}: guard {g} minority {:e}", s.max_minority))?;
                ensure(s.mass[0] <= 1e-12, || format!("program {i}: guard {g} reads 0 with mass {:e}", s.mass[0]))?;
                checked += 1;
            }
        }
    }
    ensure(checked > 0, || "no guards in corpus".into())?;
    Ok(format!("{checked} guard measurements, {ctrl_checked} control registers, max minority {worst:.1e}"))
}

fn campaign(
    pipelines: &[&str],
    seed_bugs: bool,
    iters: u64,
    n: u32,
    out: Option<&Path>,
    par: usize,
) -> CampaignSummary {
    let cfg = CampaignConfig {
        max_iter: iters,
        n_qubits: n,
        delta: 0.1,
        master_seed: MASTER_SEED,
        pipelines: pipelines.iter().map(|s| Pipeline::parse(s, seed_bugs).expect("pipeline")).collect(),
        output_dir: out.map(Path::to_path_buf),
        parallelism: par,
        ..CampaignConfig::default()
    };
    run_campaign(&cfg, &BuiltinExecutor::default()).expect("campaign runs")
}

fn seeded_bugs() -> Result<String, String> {
    let mut found = Vec::new();
    for bug in ["b1", "b2", "b3", "b4"] {
        let s = campaign(&[bug], true, 500, 5, None, workers());
        let hit = s.reports.iter().find(|r| {
            let m = &r.meta;
            match bug {
                "b1" => m.label == Verdict::Wrong && m.final_h.is_some_and(|h| h >= 0.1),
                "b2" => m.label.is_bug(),
                "b3" => {
                    m.label == Verdict::Crash
                        && [&m.error_original, &m.error_variant]
                            .iter()
                            .filter_map(|e| e.as_ref())
                            .any(|e| e.message.contains("for_loop"))
                        && m.error_original.as_ref().map(|e| &e.signature)
                            != m.error_variant.as_ref().map(|e| &e.signature)
                }
                _ => {
                    let inf = |e: &Option<qfuzz_core::simulator::ErrorRecord>| {
                        e.as_ref().is_some_and(|e| e.kind == ErrorKind::InfiniteLoop)
                    };
                    m.label == Verdict::Crash
                        && (inf(&m.error_original) ^ inf(&m.error_variant))
                        && (m.error_original.is_none() || m.error_variant.is_none())
                }
            }
        });
        let r = hit.ok_or_else(|| format!("{bug} not flagged in 500 iterations: {:?}", s.verdict_counts()))?;
        if bug == "b1" {
            // the divergence exists in the exact distributions too
            let pl = Pipeline::parse(&r.meta.pipeline, true).expect("stored pipeline");
            let a = apply(&pl, &r.original).map_err(|e| e.to_string())?;
            let b = apply(&pl, &r.variant).map_err(|e| e.to_string())?;
            let caps = EnumCaps::default();
            let da = enumerate_distribution(&a, &caps).map_err(|e| e.to_string())?.distribution;
            let db = enumerate_distribution(&b, &caps).map_err(|e| e.to_string())?.distribution;
            let h = hellinger(&da, &db).map_err(|e| e.to_string())?;
            ensure(h >= 0.1, || format!("b1 report at iteration {} has exact H {h}", r.meta.iteration))?;
        }
        found.push(format!("{bug}:{}@{}", r.meta.label.name(), r.meta.iteration));
    }
    Ok(found.join(" "))
}

fn false_positives() -> Result<String, String> {
    let mut pipelines: Vec<String> = vec!["none".into()];
    pipelines.extend(PassId::CORRECT.iter().map(|p| p.name().to_string()));
    pipelines.push(PassId::CORRECT.iter().map(|p| p.name()).collect::<Vec<_>>().join("+"));
    let refs: Vec<&str> = pipelines.iter().map(String::as_str).collect();
    let s = campaign(&refs, false, 500, 5, None, workers());
    let bad: Vec<String> = s
        .reports
        .iter()
        .take(5)
        .map(|r| format!("{}@{}:{}", r.meta.label.name(), r.meta.iteration, r.meta.pipeline))
        .collect();
    ensure(s.reports.is_empty(), || format!("{} reports, e.g. {bad:?}", s.reports.len()))?;
    Ok(format!("0 reports over {} pairs {:?}", s.pairs.len(), s.verdict_counts()))
}

fn early_stop_sample() -> (Vec<u64>, u64, u64) {
    let s = campaign(&["none"], false, 600, 6, None, workers());
    let early: Vec<u64> = s.early_stop_shots().into_iter().take(500).collect();
    (early, s.budget.s_std, s.budget.s_round)
}

fn speedup(early: &[u64], s_std: u64) -> Result<String, String> {
    ensure(early.len() == 500, || format!("only {} equivalent pairs", early.len()))?;
    ensure(s_std == 2263, || format!("s_std {s_std}"))?;
    let r = speedup_ratio(early, s_std);
    ensure(r >= 0.40, || format!("speedup {r:.4}"))?;
    Ok(format!("speedup {:.2}% over 500 pairs at n=6", 100.0 * r))
}

fn histogram(early: &[u64], s_round: u64) -> Result<String, String> {
    ensure(!early.is_empty(), || "no equivalent pairs".into())?;
    let mut h: BTreeMap<u64, usize> = BTreeMap::new();
    for s in early {
        *h.entry(*s).or_default() += 1;
    }
    let at_two = h.get(&(2 * s_round)).copied().unwrap_or(0);
    let frac = at_two as f64 / early.len() as f64;
    ensure(frac >= 0.8, || format!("{at_two}/{} at 2*S_round, histogram {h:?}", early.len()))?;
    Ok(format!("{at_two}/{} ({:.1}%) at {} shots, histogram {h:?}", early.len(), 100.0 * frac, 2 * s_round))
}

fn checker_values() -> Result<String, String> {
    let d = |pairs: &[(u64, f64)]| Distribution::from_probs(1, pairs.iter().copied());
    let h = |a: &Distribution, b: &Distribution| hellinger(a, b).map_err(|e| e.to_string());
    let disjoint = h(&d(&[(0, 1.0)]), &d(&[(1, 1.0)]))?;
    let same = h(&d(&[(0, 0.3), (1, 0.7)]), &d(&[(0, 0.3), (1, 0.7)]))?;
    let half = h(&d(&[(0, 0.5), (1, 0.5)]), &d(&[(0, 1.0)]))?;
    // 1 - BC with BC = sqrt(1/2)
    let want = (1.0 - 0.5f64.sqrt()).sqrt();
    ensure((disjoint - 1.0).abs() < 1e-12, || format!("H(disjoint) = {disjoint}"))?;
    ensure(same.abs() < 1e-12, || format!("H(P,P) = {same}"))?;
    ensure((half - want).abs() < 1e-12 && (half - 0.541196).abs() < 1e-6, || format!("H = {half}"))?;
    Ok(format!("H(disjoint)={disjoint} H(P,P)={same} H(half,point)={half:.6}"))
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("readable") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("inside").to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).expect("readable"));
            }
        }
    }
    out
}

fn determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pipes = ["b1", "b2", "b3", "b4", "cancel-inverses+commute-cf+alap-reschedule"];
    let dirs: Vec<_> = ["a", "b", "par"].iter().map(|n| tmp.path().join(n)).collect();
    campaign(&pipes, true, 150, 5, Some(&dirs[0]), 1);
    campaign(&pipes, true, 150, 5, Some(&dirs[1]), 1);
    campaign(&pipes, true, 150, 5, Some(&dirs[2]), workers().max(2));
    let (a, b, c) = (tree(&dirs[0]), tree(&dirs[1]), tree(&dirs[2]));
    ensure(a.len() > 3, || "campaign produced no reports".into())?;
    ensure(a == b, || "two sequential runs differ".into())?;
    ensure(a == c, || "parallel run differs from sequential run".into())?;
    Ok(format!("{} files byte-identical across 2 sequential runs and 1 parallel run", a.len()))
}

fn main() -> ExitCode {
    let mut gate = Gate { failed: 0 };
    let corpus = corpus();
    gate.check("budget table", budget_table);
    gate.check("EMI semantic preservation", || emi_preservation(&corpus));
    gate.check("dead-guard determinism", || guard_determinism(&corpus));
    gate.check("seeded-bug detection", seeded_bugs);
    gate.check("false-positive control", false_positives);
    let (early, s_std, s_round) = early_stop_sample();
    gate.check("early-stop speedup", || speedup(&early, s_std));
    gate.check("early-stop shot histogram", || histogram(&early, s_round));
    gate.check("checker unit values", checker_values);
    gate.check("campaign determinism", determinism);
    if gate.failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", gate.failed);
        ExitCode::FAILURE
    }
}
