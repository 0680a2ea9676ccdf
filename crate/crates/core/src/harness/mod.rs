//! Campaign driver: generate a program, derive its variant, push both through
//! every configured pipeline, execute them and classify the outcome.

mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::{
    budget, compare_errors, early_stop_compare, Budget, CompareError, ConsistencyResult, ErrorComparison, Hellinger,
    Side,
};
use crate::emi::derive_variant;
use crate::generator::{generate, GenConfig};
use crate::ir::Program;
use crate::par::{map_indices, with_workers, ExecMode};
use crate::passes::{apply, Pipeline};
use crate::rng::derive_seed;
use crate::simulator::{run_with, ErrorRecord, ExecOutcome, RunOptions};

pub use report::{
    read_report, report_digest, reproduce, write_report, write_summary, BugReport, PairId, ReportMeta, ReproError,
    Reproduction, META_VERSION, REPORT_FILES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Builtin,
    Bridge,
}

/// Something that can transform and execute programs.
pub trait Executor: Sync {
    fn backend(&self) -> Backend;

    /// Applies `pipeline` to `p`.
    fn transform(&self, p: &Program, pipeline: &Pipeline) -> Result<Program, ErrorRecord>;

    /// Runs `shots` shots of a program already transformed by `pipeline`.
    fn execute(&self, p: &Program, pipeline: &Pipeline, shots: u64, seed: u64) -> ExecOutcome;
}

/// Pass pipeline and simulator built into this crate.
#[derive(Debug, Clone, Default)]
pub struct BuiltinExecutor {
    pub run: RunOptions,
}

impl BuiltinExecutor {
    pub fn new(mode: ExecMode) -> Self {
        Self { run: RunOptions { mode, ..RunOptions::default() } }
    }
}

impl Executor for BuiltinExecutor {
    fn backend(&self) -> Backend {
        Backend::Builtin
    }

    fn transform(&self, p: &Program, pipeline: &Pipeline) -> Result<Program, ErrorRecord> {
        apply(pipeline, p)
    }

    fn execute(&self, p: &Program, _pipeline: &Pipeline, shots: u64, seed: u64) -> ExecOutcome {
        run_with(p, shots, seed, &self.run).0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Both sides ran and the distributions were judged equal.
    Pass,
    /// Both sides failed with the same normalized error.
    SameError,
    /// The budget ran out while the distance was already back under delta.
    Inconclusive,
    Crash,
    Wrong,
}

impl Verdict {
    pub fn is_bug(self) -> bool {
        matches!(self, Verdict::Crash | Verdict::Wrong)
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::SameError => "same_error",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Crash => "crash",
            Verdict::Wrong => "wrong",
        }
    }
}

/// Result of comparing one program pair under one pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub verdict: Verdict,
    pub error_original: Option<ErrorRecord>,
    pub error_variant: Option<ErrorRecord>,
    pub consistency: Option<ConsistencyResult>,
}

/// Seed for shot round `round` of one side of a pair.
pub fn exec_seed(pair_seed: u64, side: Side, round: usize) -> u64 {
    let tag = match side {
        Side::Original => "original",
        Side::Variant => "variant",
    };
    derive_seed(pair_seed, tag, round as u64)
}

/// Transforms and executes `p` and `p_prime` under `pipeline` and classifies
/// the pair. A one-sided or mismatched failure is a crash. When both sides
/// run, the early-stop comparison decides; a non-equivalent result is only
/// reported as wrong if the final distance is at least delta.
pub fn evaluate_pair(
    p: &Program,
    p_prime: &Program,
    pipeline: &Pipeline,
    budget: &Budget,
    pair_seed: u64,
    executor: &dyn Executor,
) -> Evaluation {
    let ta = executor.transform(p, pipeline);
    let tb = executor.transform(p_prime, pipeline);
    let first = |t: &Result<Program, ErrorRecord>, side| match t {
        Ok(prog) => executor.execute(prog, pipeline, budget.s_round, exec_seed(pair_seed, side, 0)),
        Err(e) => Err(e.clone()),
    };
    let ra = first(&ta, Side::Original);
    let rb = first(&tb, Side::Variant);
    let errs = |a: &ExecOutcome, b: &ExecOutcome| (a.as_ref().err().cloned(), b.as_ref().err().cloned());
    match compare_errors(&ra, &rb) {
        ErrorComparison::BothOk => {}
        cmp => {
            let (ea, eb) = errs(&ra, &rb);
            let verdict = if cmp == ErrorComparison::SameError { Verdict::SameError } else { Verdict::Crash };
            return Evaluation { verdict, error_original: ea, error_variant: eb, consistency: None };
        }
    }
    let (pa, pb) = (ta.expect("ran"), tb.expect("ran"));
    let mut first_a = Some(ra);
    let mut first_b = Some(rb);
    let mut sample_a = |round: usize, shots: u64| match (round, first_a.take()) {
        (0, Some(r)) => r,
        _ => executor.execute(&pa, pipeline, shots, exec_seed(pair_seed, Side::Original, round)),
    };
    let mut sample_b = |round: usize, shots: u64| match (round, first_b.take()) {
        (0, Some(r)) => r,
        _ => executor.execute(&pb, pipeline, shots, exec_seed(pair_seed, Side::Variant, round)),
    };
    match early_stop_compare(&mut sample_a, &mut sample_b, budget, &Hellinger) {
        Ok(res) => {
            let verdict = if res.equivalent {
                Verdict::Pass
            } else if res.final_h >= budget.delta {
                Verdict::Wrong
            } else {
                Verdict::Inconclusive
            };
            Evaluation { verdict, error_original: None, error_variant: None, consistency: Some(res) }
        }
        Err(CompareError::Exec { side, round, error }) => {
            // a later round failed on one side; run the other side's round to
            // see whether it fails the same way
            let (other, pa_or_pb) = match side {
                Side::Original => (Side::Variant, &pb),
                Side::Variant => (Side::Original, &pa),
            };
            let again = executor.execute(pa_or_pb, pipeline, budget.s_round, exec_seed(pair_seed, other, round));
            let (ea, eb) = match side {
                Side::Original => (Some(error), again.err()),
                Side::Variant => (again.err(), Some(error)),
            };
            let verdict = match (&ea, &eb) {
                (Some(a), Some(b)) if a.signature == b.signature => Verdict::SameError,
                _ => Verdict::Crash,
            };
            Evaluation { verdict, error_original: ea, error_variant: eb, consistency: None }
        }
        Err(CompareError::Normalization(e)) => Evaluation {
            verdict: Verdict::Crash,
            error_original: Some(ErrorRecord::new(crate::simulator::ErrorKind::Internal, e.to_string())),
            error_variant: None,
            consistency: None,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub backend: Backend,
    pub max_iter: u64,
    pub delta: f64,
    pub n_qubits: u32,
    pub master_seed: u64,
    pub gen: GenConfig,
    /// The set of pipelines every pair is run under.
    pub pipelines: Vec<Pipeline>,
    pub output_dir: Option<PathBuf>,
    pub parallelism: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Builtin,
            max_iter: 100,
            delta: 0.1,
            n_qubits: 5,
            master_seed: 0,
            gen: GenConfig::default(),
            pipelines: vec![Pipeline::parse("none", false).expect("empty pipeline")],
            output_dir: None,
            parallelism: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid campaign config: {0}")]
    Config(String),
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Outcome of one (iteration, pipeline) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub iteration: u64,
    pub pipeline_index: usize,
    pub verdict: Verdict,
    /// Shots per side when both sides ran to a decision.
    pub shots: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSummary {
    pub budget: Budget,
    pub pairs: Vec<PairRecord>,
    pub reports: Vec<BugReport>,
    /// Iterations whose program could not be generated, with the reason.
    pub generation_failures: Vec<(u64, String)>,
}

impl CampaignSummary {
    pub fn verdict_counts(&self) -> BTreeMap<&'static str, u64> {
        let mut m = BTreeMap::new();
        for p in &self.pairs {
            *m.entry(p.verdict.name()).or_insert(0) += 1;
        }
        m
    }

    /// Shots per side for every pair judged equivalent.
    pub fn early_stop_shots(&self) -> Vec<u64> {
        self.pairs.iter().filter(|p| p.verdict == Verdict::Pass).filter_map(|p| p.shots).collect()
    }
}

/// Seed of iteration `i`.
pub fn iteration_seed(master: u64, i: u64) -> u64 {
    derive_seed(master, "iter", i)
}

/// Seed of the pair run under pipeline `index` in an iteration.
pub fn pair_seed(iter_seed: u64, index: usize) -> u64 {
    derive_seed(iter_seed, "pipeline", index as u64)
}

struct IterResult {
    pairs: Vec<PairRecord>,
    reports: Vec<BugReport>,
    failure: Option<(u64, String)>,
    io_error: Option<HarnessError>,
}

fn run_iteration(cfg: &CampaignConfig, budget: &Budget, executor: &dyn Executor, i: u64) -> IterResult {
    let iter_seed = iteration_seed(cfg.master_seed, i);
    let gen = GenConfig { seed: iter_seed, n_qubits: cfg.n_qubits, ..cfg.gen.clone() };
    let mut out = IterResult { pairs: Vec::new(), reports: Vec::new(), failure: None, io_error: None };
    let p = match generate(&gen) {
        Ok(p) => p,
        Err(e) => {
            out.failure = Some((i, e.to_string()));
            return out;
        }
    };
    let v = derive_variant(&p);
    for (k, sigma) in cfg.pipelines.iter().enumerate() {
        let pipeline = sigma.with_prefix(&p.meta.passes);
        let seed = pair_seed(iter_seed, k);
        let ev = evaluate_pair(&p, &v, &pipeline, budget, seed, executor);
        out.pairs.push(PairRecord {
            iteration: i,
            pipeline_index: k,
            verdict: ev.verdict,
            shots: ev.consistency.as_ref().map(|c| c.total_shots),
        });
        if ev.verdict.is_bug() {
            let id = PairId { iteration: i, pipeline_index: k, iteration_seed: iter_seed, pair_seed: seed };
            let r = BugReport::new(cfg, id, &pipeline, budget, &p, &v, &ev);
            if let Some(dir) = &cfg.output_dir {
                if let Err(e) = write_report(dir, &r) {
                    out.io_error.get_or_insert(e);
                }
            }
            out.reports.push(r);
        }
    }
    out
}

/// Runs the campaign loop. Iterations are independent and may run in
/// parallel; results are collected in iteration order, so the summary and
/// the report directory do not depend on scheduling.
pub fn run_campaign(cfg: &CampaignConfig, executor: &dyn Executor) -> Result<CampaignSummary, HarnessError> {
    if cfg.max_iter == 0 {
        return Err(HarnessError::Config("max_iter must be at least 1".into()));
    }
    if cfg.pipelines.is_empty() {
        return Err(HarnessError::Config("at least one pipeline is required".into()));
    }
    let budget = budget(cfg.delta, cfg.n_qubits).map_err(|e| HarnessError::Config(e.to_string()))?;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.clone(), source })?;
    }
    let mode = ExecMode::from_parallelism(cfg.parallelism);
    let results = with_workers(cfg.parallelism, || {
        map_indices(mode, cfg.max_iter as usize, |i| run_iteration(cfg, &budget, executor, i as u64))
    });
    let mut summary =
        CampaignSummary { budget, pairs: Vec::new(), reports: Vec::new(), generation_failures: Vec::new() };
    for r in results {
        if let Some(e) = r.io_error {
            return Err(e);
        }
        summary.pairs.extend(r.pairs);
        summary.reports.extend(r.reports);
        summary.generation_failures.extend(r.failure);
    }
    if let Some(dir) = &cfg.output_dir {
        write_summary(dir, cfg, &summary)?;
    }
    Ok(summary)
}
