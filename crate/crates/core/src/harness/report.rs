//! Bug-report persistence and reproduction.
//!
//! A report is a directory `iter-NNNNNN-pK/` with `original.qir-txt`,
//! `variant.qir-txt` and `meta.json`. Directories are staged under a
//! temporary name and renamed into place, so a reader never sees a partial
//! report.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{evaluate_pair, Backend, CampaignConfig, CampaignSummary, Evaluation, Executor, HarnessError, Verdict};
use crate::checker::Budget;
use crate::ir::{deserialize, serialize, ParseError, Program};
use crate::passes::Pipeline;
use crate::simulator::{Counts, ErrorRecord};

pub const REPORT_FILES: [&str; 3] = ["original.qir-txt", "variant.qir-txt", "meta.json"];

pub const META_VERSION: u32 = 1;

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportMeta {
    pub version: u32,
    pub label: Verdict,
    pub backend: Backend,
    pub iteration: u64,
    pub pipeline_index: usize,
    pub master_seed: u64,
    pub iteration_seed: u64,
    pub pair_seed: u64,
    /// Full pipeline, including passes hinted by the program.
    pub pipeline: String,
    pub seeded_bugs: bool,
    pub delta: f64,
    pub budget: Budget,
    pub total_shots: Option<u64>,
    pub final_h: Option<f64>,
    pub h_trace: Vec<f64>,
    pub counts_original: Option<Counts>,
    pub counts_variant: Option<Counts>,
    pub error_original: Option<ErrorRecord>,
    pub error_variant: Option<ErrorRecord>,
    /// FNV-1a over both program texts and the pipeline.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BugReport {
    pub meta: ReportMeta,
    pub original: Program,
    pub variant: Program,
}

/// Identifies one pair inside a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairId {
    pub iteration: u64,
    pub pipeline_index: usize,
    pub iteration_seed: u64,
    pub pair_seed: u64,
}

fn fnv1a(parts: &[&str]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.bytes().chain(std::iter::once(0)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

pub fn report_digest(original: &str, variant: &str, pipeline: &str) -> String {
    fnv1a(&[original, variant, pipeline])
}

impl BugReport {
    pub fn new(
        cfg: &CampaignConfig,
        id: PairId,
        pipeline: &Pipeline,
        budget: &Budget,
        original: &Program,
        variant: &Program,
        ev: &Evaluation,
    ) -> Self {
        let pipeline_s = pipeline.to_string();
        let digest = report_digest(&serialize(original), &serialize(variant), &pipeline_s);
        let c = ev.consistency.as_ref();
        let meta = ReportMeta {
            version: META_VERSION,
            label: ev.verdict,
            backend: cfg.backend,
            iteration: id.iteration,
            pipeline_index: id.pipeline_index,
            master_seed: cfg.master_seed,
            iteration_seed: id.iteration_seed,
            pair_seed: id.pair_seed,
            pipeline: pipeline_s,
            seeded_bugs: pipeline.include_seeded_bugs(),
            delta: budget.delta,
            budget: *budget,
            total_shots: c.map(|c| c.total_shots),
            final_h: c.map(|c| c.final_h),
            h_trace: c.map(|c| c.trace.clone()).unwrap_or_default(),
            counts_original: c.map(|c| c.counts_a.clone()),
            counts_variant: c.map(|c| c.counts_b.clone()),
            error_original: ev.error_original.clone(),
            error_variant: ev.error_variant.clone(),
            digest,
        };
        Self { meta, original: original.clone(), variant: variant.clone() }
    }

    pub fn dir_name(&self) -> String {
        format!("iter-{:06}-p{}", self.meta.iteration, self.meta.pipeline_index)
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// Writes `report` under `root` and returns its directory.
pub fn write_report(root: &Path, report: &BugReport) -> Result<PathBuf, HarnessError> {
    let name = report.dir_name();
    let dest = root.join(&name);
    let tmp = root.join(format!(".tmp-{name}"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(io(&tmp))?;
    }
    fs::create_dir_all(&tmp).map_err(io(&tmp))?;
    let meta = serde_json::to_string_pretty(&report.meta).expect("meta serializes") + "\n";
    let contents = [serialize(&report.original), serialize(&report.variant), meta];
    for (file, body) in REPORT_FILES.iter().zip(contents) {
        let path = tmp.join(file);
        fs::write(&path, body).map_err(io(&path))?;
    }
    if dest.exists() {
        fs::remove_dir_all(&dest).map_err(io(&dest))?;
    }
    fs::rename(&tmp, &dest).map_err(io(&dest))?;
    Ok(dest)
}

#[derive(Debug, Serialize)]
struct SummaryFile<'a> {
    iterations: u64,
    master_seed: u64,
    backend: Backend,
    delta: f64,
    n_qubits: u32,
    pipelines: Vec<String>,
    budget: &'a Budget,
    verdicts: std::collections::BTreeMap<&'static str, u64>,
    generation_failures: &'a [(u64, String)],
    reports: Vec<String>,
    early_stop: EarlyStopStats,
}

#[derive(Debug, Serialize)]
struct EarlyStopStats {
    pairs: usize,
    histogram: std::collections::BTreeMap<u64, u64>,
    speedup: Option<f64>,
}

/// Writes `summary.json` for a finished campaign.
pub fn write_summary(root: &Path, cfg: &CampaignConfig, summary: &CampaignSummary) -> Result<PathBuf, HarnessError> {
    let early = summary.early_stop_shots();
    let mut histogram = std::collections::BTreeMap::new();
    for s in &early {
        *histogram.entry(*s).or_insert(0) += 1;
    }
    let speedup = (!early.is_empty()).then(|| crate::checker::speedup_ratio(&early, summary.budget.s_std));
    let file = SummaryFile {
        iterations: cfg.max_iter,
        master_seed: cfg.master_seed,
        backend: cfg.backend,
        delta: cfg.delta,
        n_qubits: cfg.n_qubits,
        pipelines: cfg.pipelines.iter().map(|p| p.to_string()).collect(),
        budget: &summary.budget,
        verdicts: summary.verdict_counts(),
        generation_failures: &summary.generation_failures,
        reports: summary.reports.iter().map(|r| r.dir_name()).collect(),
        early_stop: EarlyStopStats { pairs: early.len(), histogram, speedup },
    };
    let path = root.join("summary.json");
    let body = serde_json::to_string_pretty(&file).expect("summary serializes") + "\n";
    fs::write(&path, body).map_err(io(&path))?;
    Ok(path)
}

#[derive(Debug, Error)]
pub enum ReproError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed meta.json in {path}: {source}")]
    Meta { path: PathBuf, source: serde_json::Error },
    #[error("unsupported meta.json version {0}")]
    Version(u32),
    #[error("cannot parse {path}: {source}")]
    Program { path: PathBuf, source: ParseError },
    #[error("bad pipeline `{pipeline}`: {source}")]
    Pipeline { pipeline: String, source: crate::passes::PipelineError },
    #[error("bad budget: {0}")]
    Budget(#[from] crate::checker::DomainError),
}

/// Loads a report directory.
pub fn read_report(dir: &Path) -> Result<BugReport, ReproError> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|source| ReproError::Io { path, source })
    };
    let meta_path = dir.join("meta.json");
    let meta: ReportMeta =
        serde_json::from_str(&read("meta.json")?).map_err(|source| ReproError::Meta { path: meta_path, source })?;
    if meta.version != META_VERSION {
        return Err(ReproError::Version(meta.version));
    }
    let prog = |name: &str| -> Result<Program, ReproError> {
        deserialize(&read(name)?).map_err(|source| ReproError::Program { path: dir.join(name), source })
    };
    Ok(BugReport { original: prog(REPORT_FILES[0])?, variant: prog(REPORT_FILES[1])?, meta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reproduction {
    pub stored: Verdict,
    pub verdict: Verdict,
    pub evaluation: Evaluation,
    /// Problems worth telling the user about, such as an edited program.
    pub warnings: Vec<String>,
}

impl Reproduction {
    pub fn matches(&self) -> bool {
        self.stored == self.verdict
    }
}

/// Re-runs the pair stored in `dir` with its stored pipeline and seeds.
pub fn reproduce(dir: &Path, executor: &dyn Executor) -> Result<Reproduction, ReproError> {
    let report = read_report(dir)?;
    let m = &report.meta;
    let pipeline = Pipeline::parse(&m.pipeline, m.seeded_bugs)
        .map_err(|source| ReproError::Pipeline { pipeline: m.pipeline.clone(), source })?;
    let budget = crate::checker::budget(m.delta, m.budget.n_qubits)?;
    let mut warnings = Vec::new();
    let digest = report_digest(&serialize(&report.original), &serialize(&report.variant), &m.pipeline);
    if digest != m.digest {
        warnings
            .push(format!("digest mismatch: stored {} but files hash to {digest}; the report was edited", m.digest));
    }
    if budget != m.budget {
        warnings.push("stored budget differs from the recomputed one".to_string());
    }
    if m.backend != executor.backend() {
        warnings.push(format!("report was produced by the {:?} backend", m.backend).to_lowercase());
    }
    let evaluation = evaluate_pair(&report.original, &report.variant, &pipeline, &budget, m.pair_seed, executor);
    if evaluation.verdict != m.label {
        warnings.push(format!(
            "verdict mismatch: stored {} but re-run gives {}",
            m.label.name(),
            evaluation.verdict.name()
        ));
    }
    Ok(Reproduction { stored: m.label, verdict: evaluation.verdict, evaluation, warnings })
}
