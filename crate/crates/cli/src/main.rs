use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use qfuzz_core::bridge::{self, BridgeConfig, BridgeExecutor};
use qfuzz_core::checker::budget;
use qfuzz_core::emi::derive_variant;
use qfuzz_core::generator::{generate, GenConfig};
use qfuzz_core::harness::{
    reproduce, run_campaign, Backend, BuiltinExecutor, CampaignConfig, Executor, ReportMeta, REPORT_FILES,
};
use qfuzz_core::ir::{deserialize, serialize};
use qfuzz_core::par::ExecMode;
use qfuzz_core::passes::Pipeline;

const EXIT_BUGS: u8 = 2;

#[derive(Parser)]
#[command(name = "qfuzz", version, about = "Differential testing of quantum compiler passes with dead-code variants")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Builtin,
    Bridge,
}

#[derive(clap::Args)]
struct AdapterArgs {
    /// Adapter command line for the bridge backend. Defaults to this
    /// binary's reference adapter.
    #[arg(long)]
    adapter: Option<String>,
    /// Per-request adapter timeout in seconds.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    /// Dialect requested from the adapter.
    #[arg(long, default_value = bridge::BUILTIN_DIALECT)]
    dialect: String,
}

#[derive(clap::Args)]
struct CampaignArgs {
    #[arg(long, value_enum, default_value = "builtin")]
    backend: BackendArg,
    #[arg(long, default_value_t = 100)]
    iters: u64,
    #[arg(long, default_value_t = 5)]
    qubits: u32,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated pipelines; passes within one pipeline are joined
    /// with `+`, e.g. `cancel-inverses+commute-cf,O2`.
    #[arg(long, default_value = "none")]
    pipeline: String,
    /// Allow the seeded-bug passes b1..b4.
    #[arg(long)]
    seed_bugs: bool,
    #[arg(long)]
    out: PathBuf,
    /// Generator settings (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    adapter: AdapterArgs,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a fuzzing campaign and write bug reports.
    Campaign(CampaignArgs),
    /// Re-run a stored report, or every report under a campaign directory.
    Reproduce {
        dir: PathBuf,
        #[command(flatten)]
        adapter: AdapterArgs,
    },
    /// Print the shot budget for a distance threshold and width.
    Budget {
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long)]
        qubits: u32,
        #[arg(long)]
        json: bool,
    },
    /// Generate one program with dead regions.
    Generate {
        #[arg(long, default_value_t = 5)]
        qubits: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Derive the variant of a program by deleting its dead regions.
    Derive {
        input: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Reference adapter: speaks the bridge protocol on stdin/stdout.
    Adapter,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_gen(path: Option<&Path>) -> Result<GenConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(GenConfig::from_toml_str(&text)?)
        }
        None => Ok(GenConfig::default()),
    }
}

fn bridge_executor(a: &AdapterArgs) -> Result<BridgeExecutor> {
    let command = match &a.adapter {
        Some(s) => shlex::split(s).with_context(|| format!("cannot split adapter command `{s}`"))?,
        None => {
            let exe = std::env::current_exe().context("locating the reference adapter")?;
            vec![exe.to_string_lossy().into_owned(), "adapter".to_string()]
        }
    };
    if !(a.timeout > 0.0 && a.timeout.is_finite()) {
        bail!("--timeout must be positive");
    }
    let cfg = BridgeConfig { command, timeout: Duration::from_secs_f64(a.timeout), dialect: a.dialect.clone() };
    Ok(BridgeExecutor::new(cfg)?)
}

fn parse_pipelines(list: &str, seed_bugs: bool) -> Result<Vec<Pipeline>> {
    list.split(',').map(|s| Pipeline::parse(s, seed_bugs).map_err(Into::into)).collect()
}

fn campaign(a: &CampaignArgs) -> Result<bool> {
    let pipelines = parse_pipelines(&a.pipeline, a.seed_bugs)?;
    let mut gen = load_gen(a.config.as_deref())?;
    let bridge_exec;
    let builtin = BuiltinExecutor::new(ExecMode::from_parallelism(a.jobs));
    let (executor, backend): (&dyn Executor, Backend) = match a.backend {
        BackendArg::Builtin => {
            if let Some(p) = pipelines.iter().find(|p| p.opt_level().is_some()) {
                bail!("pipeline `{p}` has an optimization level, which only the bridge backend uses");
            }
            (&builtin, Backend::Builtin)
        }
        BackendArg::Bridge => {
            bridge_exec = bridge_executor(&a.adapter)?;
            gen = bridge::restrict_gen_config(&gen, bridge_exec.capabilities())?;
            (&bridge_exec, Backend::Bridge)
        }
    };
    let cfg = CampaignConfig {
        backend,
        max_iter: a.iters,
        delta: a.delta,
        n_qubits: a.qubits,
        master_seed: a.seed,
        gen,
        pipelines,
        output_dir: Some(a.out.clone()),
        parallelism: a.jobs,
    };
    let summary = run_campaign(&cfg, executor)?;
    let b = &summary.budget;
    println!("budget: S_round={} S_std={} S_max={}", b.s_round, b.s_std, b.s_max);
    for (verdict, n) in summary.verdict_counts() {
        println!("{verdict}: {n}");
    }
    for (i, why) in &summary.generation_failures {
        eprintln!("warning: iteration {i}: {why}");
    }
    let early = summary.early_stop_shots();
    if !early.is_empty() {
        let s = qfuzz_core::checker::speedup_ratio(&early, b.s_std);
        println!("early-stop speedup: {:.2}% over {} pairs", 100.0 * s, early.len());
    }
    for r in &summary.reports {
        println!("{} {} {}", r.meta.label.name(), a.out.join(r.dir_name()).display(), r.meta.pipeline);
    }
    println!("{} bug report(s) in {}", summary.reports.len(), a.out.display());
    Ok(!summary.reports.is_empty())
}

fn report_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(REPORT_FILES[2]).is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(REPORT_FILES[2]).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() && !dir.join("summary.json").is_file() {
        bail!("no reports found in {}", dir.display());
    }
    Ok(dirs)
}

fn stored_backend(dir: &Path) -> Result<Backend> {
    let path = dir.join(REPORT_FILES[2]);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let meta: ReportMeta = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(meta.backend)
}

fn reproduce_cmd(dir: &Path, adapter: &AdapterArgs) -> Result<bool> {
    let dirs = report_dirs(dir)?;
    if dirs.is_empty() {
        println!("campaign in {} has no reports", dir.display());
    }
    let builtin = BuiltinExecutor::default();
    let mut bridge_exec = None;
    let mut any_bug = false;
    for d in dirs {
        let executor: &dyn Executor = match stored_backend(&d)? {
            Backend::Builtin => &builtin,
            Backend::Bridge => {
                if bridge_exec.is_none() {
                    bridge_exec = Some(bridge_executor(adapter)?);
                }
                bridge_exec.as_ref().expect("just set")
            }
        };
        let r = reproduce(&d, executor).with_context(|| format!("reproducing {}", d.display()))?;
        for w in &r.warnings {
            eprintln!("warning: {}: {w}", d.display());
        }
        let h = r.evaluation.consistency.as_ref().map(|c| format!(" H={:.6}", c.final_h)).unwrap_or_default();
        let status = if r.matches() { "reproduced" } else { "MISMATCH" };
        println!("{}: stored {} got {}{h} [{status}]", d.display(), r.stored.name(), r.verdict.name());
        for (side, e) in [("original", &r.evaluation.error_original), ("variant", &r.evaluation.error_variant)] {
            if let Some(e) = e {
                println!("  {side}: {}", e.signature);
            }
        }
        any_bug |= r.verdict.is_bug();
    }
    Ok(any_bug)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Campaign(a) => campaign(&a),
        Cmd::Reproduce { dir, adapter } => reproduce_cmd(&dir, &adapter),
        Cmd::Budget { delta, qubits, json } => {
            let b = budget(delta, qubits)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&b)?);
            } else {
                println!("delta={} n={}", b.delta, b.n_qubits);
                println!("S_round={} S_std={} S_max={}", b.s_round, b.s_std, b.s_max);
                let pts: Vec<String> = b.termination_points().iter().map(u64::to_string).collect();
                println!("termination points: {}", pts.join(" "));
            }
            Ok(false)
        }
        Cmd::Generate { qubits, seed, config, out } => {
            let gen = GenConfig { n_qubits: qubits, seed, ..load_gen(config.as_deref())? };
            let p = generate(&gen)?;
            emit(out.as_deref(), &serialize(&p))?;
            Ok(false)
        }
        Cmd::Derive { input, out } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let p = deserialize(&text).with_context(|| format!("parsing {}", input.display()))?;
            emit(out.as_deref(), &serialize(&derive_variant(&p)))?;
            Ok(false)
        }
        Cmd::Adapter => {
            bridge::serve(BufReader::new(io::stdin().lock()), io::stdout().lock())?;
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(EXIT_BUGS),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
