//! Harness side of the line-JSON adapter protocol.
//!
//! An adapter is a child process. It prints a hello line with its protocol
//! version and capabilities, then answers one request line with one response
//! line, strictly in order. See `docs/bridge-protocol.md`.
//!
//! [`serve`] is a reference adapter backed by the builtin simulator; the CLI
//! exposes it as `qfuzz adapter`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deadcode::PatternKind;
use crate::generator::GenConfig;
use crate::harness::{Backend, Executor};
use crate::ir::{deserialize, serialize, Instruction, Program};
use crate::par::ExecMode;
use crate::passes::{apply, PassId, Pipeline};
use crate::simulator::{run_with, Counts, ErrorKind, ErrorRecord, ExecOutcome, RunOptions};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
/// Dialect spoken by the reference adapter: the IR text itself.
pub const BUILTIN_DIALECT: &str = "qir-txt";

/// Construct names used in the capability list.
pub const CAPABILITIES: [&str; 8] =
    ["if_test", "while_loop", "switch_case", "for_loop", "break_loop", "continue_loop", "controlled_on_int", "reset"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hello {
    pub v: u32,
    #[serde(default)]
    pub dialects: Vec<String>,
    pub capabilities: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub v: u32,
    pub id: u64,
    pub dialect: String,
    pub program: String,
    pub shots: u64,
    pub seed: u64,
    pub pipeline_hint: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireError {
    #[serde(rename = "type")]
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireResponse {
    pub id: u64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub counts: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WireError>,
}

/// Maps an adapter error type onto the harness error kinds. The type is kept
/// in the message, so two different SDK exceptions never share a signature.
pub fn error_record(e: &WireError) -> ErrorRecord {
    let kind = match e.kind.as_str() {
        "infinite_loop" | "timeout" => ErrorKind::InfiniteLoop,
        "validation" | "parse" => ErrorKind::Validation,
        "protocol" | "internal" | "unsupported_dialect" => ErrorKind::Internal,
        _ => ErrorKind::Pass,
    };
    ErrorRecord::new(kind, format!("{}: {}", e.kind, e.message))
}

/// Converts a response into an outcome for a program with `width` output bits.
pub fn response_outcome(resp: &WireResponse, width: usize) -> ExecOutcome {
    match resp.status {
        Status::Ok => Counts::from_bitstrings(width, &resp.counts)
            .map_err(|m| ErrorRecord::new(ErrorKind::Internal, format!("protocol: bad counts: {m}"))),
        Status::Error => Err(match &resp.error {
            Some(e) => error_record(e),
            None => ErrorRecord::new(ErrorKind::Internal, "protocol: error response without an error object"),
        }),
    }
}

/// Capability names a program needs.
pub fn required_capabilities(p: &Program) -> BTreeSet<&'static str> {
    fn walk(body: &[Instruction], out: &mut BTreeSet<&'static str>) {
        for i in body {
            let name = match i {
                Instruction::IfTest { .. } => Some("if_test"),
                Instruction::WhileLoop { .. } => Some("while_loop"),
                Instruction::Switch { .. } => Some("switch_case"),
                Instruction::ForRange { .. } => Some("for_loop"),
                Instruction::BreakLoop => Some("break_loop"),
                Instruction::ContinueLoop => Some("continue_loop"),
                Instruction::ControlledOnInt { .. } => Some("controlled_on_int"),
                Instruction::Reset { .. } => Some("reset"),
                Instruction::Gate(_) | Instruction::Measure { .. } => None,
            };
            out.extend(name);
            for b in i.bodies() {
                walk(b, out);
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(&p.body, &mut out);
    out
}

fn pattern_needs(kind: PatternKind) -> &'static [&'static str] {
    match kind {
        PatternKind::IfTestDead => &["if_test"],
        PatternKind::WhileDead => &["while_loop"],
        PatternKind::SwitchDead => &["switch_case"],
        PatternKind::ForZero => &["for_loop"],
        PatternKind::ForContinue => &["for_loop", "continue_loop"],
        PatternKind::ForBreak => &["for_loop", "break_loop"],
        PatternKind::ControlledOnIntDead => &["controlled_on_int"],
    }
}

/// Narrows `gen` to what the adapter supports: unsupported patterns get
/// weight zero and unsupported live control flow is switched off. Live
/// `if` statements are always generated, so `if_test` is required.
pub fn restrict_gen_config(gen: &GenConfig, caps: &BTreeSet<String>) -> Result<GenConfig, BridgeError> {
    let has = |c: &str| caps.contains(c);
    let mut out = gen.clone();
    for (kind, w) in out.pattern_weights.iter_mut() {
        if !pattern_needs(*kind).iter().all(|c| has(c)) {
            *w = 0.0;
        }
    }
    out.live_switch &= has("switch_case");
    out.live_for &= has("for_loop");
    if !has("if_test") || !out.pattern_weights.values().any(|w| *w > 0.0) {
        return Err(BridgeError::Capabilities(format!("{caps:?}")));
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("adapter command is empty")]
    EmptyCommand,
    #[error("cannot start adapter `{command}`: {source}")]
    Spawn { command: String, source: io::Error },
    #[error("adapter handshake failed: {0}")]
    Handshake(String),
    #[error("adapter speaks protocol version {0}, expected {PROTOCOL_VERSION}")]
    Version(u32),
    #[error("adapter does not offer dialect `{0}`")]
    Dialect(String),
    #[error("adapter capabilities {0} cannot express any dead-code pattern")]
    Capabilities(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeConfig {
    /// Program and arguments.
    pub command: Vec<String>,
    pub timeout: Duration,
    pub dialect: String,
}

impl BridgeConfig {
    pub fn new(command: Vec<String>) -> Self {
        Self { command, timeout: DEFAULT_TIMEOUT, dialect: BUILTIN_DIALECT.to_string() }
    }
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<io::Result<String>>,
}

impl Process {
    fn spawn(cfg: &BridgeConfig) -> Result<(Self, Hello), BridgeError> {
        let (prog, args) = cfg.command.split_first().ok_or(BridgeError::EmptyCommand)?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|source| BridgeError::Spawn { command: cfg.command.join(" "), source })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut proc = Process { child, stdin, lines: rx };
        let hello = match proc.lines.recv_timeout(cfg.timeout) {
            Ok(Ok(line)) => {
                serde_json::from_str::<Hello>(&line).map_err(|e| BridgeError::Handshake(format!("bad hello line: {e}")))
            }
            Ok(Err(e)) => Err(BridgeError::Handshake(e.to_string())),
            Err(RecvTimeoutError::Timeout) => Err(BridgeError::Handshake("no hello line before the timeout".into())),
            Err(RecvTimeoutError::Disconnected) => Err(BridgeError::Handshake("adapter exited before hello".into())),
        };
        let hello = match hello {
            Ok(h) => h,
            Err(e) => {
                proc.kill();
                return Err(e);
            }
        };
        if hello.v != PROTOCOL_VERSION {
            proc.kill();
            return Err(BridgeError::Version(hello.v));
        }
        if !hello.dialects.is_empty() && !hello.dialects.contains(&cfg.dialect) {
            proc.kill();
            return Err(BridgeError::Dialect(cfg.dialect.clone()));
        }
        Ok((proc, hello))
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// One adapter process. Requests are sequential. A request that gets no
/// answer within the timeout kills the process; the next request starts a
/// fresh one.
pub struct BridgeClient {
    cfg: BridgeConfig,
    proc: Option<Process>,
    hello: Hello,
    next_id: u64,
    restarts: u64,
}

impl BridgeClient {
    pub fn spawn(cfg: BridgeConfig) -> Result<Self, BridgeError> {
        let (proc, hello) = Process::spawn(&cfg)?;
        Ok(Self { cfg, proc: Some(proc), hello, next_id: 0, restarts: 0 })
    }

    pub fn hello(&self) -> &Hello {
        &self.hello
    }

    /// Number of times the adapter process was replaced.
    pub fn restarts(&self) -> u64 {
        self.restarts
    }

    fn drop_process(&mut self) {
        if let Some(mut p) = self.proc.take() {
            p.kill();
        }
    }

    fn internal(msg: impl Into<String>) -> ErrorRecord {
        ErrorRecord::new(ErrorKind::Internal, msg)
    }

    /// Sends one request and waits for its response.
    pub fn request(
        &mut self,
        program: &str,
        shots: u64,
        seed: u64,
        pipeline_hint: u8,
    ) -> Result<WireResponse, ErrorRecord> {
        if self.proc.is_none() {
            let (proc, hello) = Process::spawn(&self.cfg).map_err(|e| Self::internal(e.to_string()))?;
            self.proc = Some(proc);
            self.hello = hello;
            self.restarts += 1;
        }
        let id = self.next_id;
        self.next_id += 1;
        let req = WireRequest {
            v: PROTOCOL_VERSION,
            id,
            dialect: self.cfg.dialect.clone(),
            program: program.to_string(),
            shots,
            seed,
            pipeline_hint,
        };
        let line = serde_json::to_string(&req).expect("request serializes");
        let proc = self.proc.as_mut().expect("process running");
        if writeln!(proc.stdin, "{line}").and_then(|_| proc.stdin.flush()).is_err() {
            self.drop_process();
            return Err(Self::internal("adapter exited: cannot write request"));
        }
        let deadline = Instant::now() + self.cfg.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let proc = self.proc.as_mut().expect("process running");
            match proc.lines.recv_timeout(left) {
                Ok(Ok(text)) if text.trim().is_empty() => continue,
                Ok(Ok(text)) => {
                    let resp: WireResponse = match serde_json::from_str(&text) {
                        Ok(r) => r,
                        Err(e) => {
                            self.drop_process();
                            return Err(Self::internal(format!("protocol: malformed response: {e}")));
                        }
                    };
                    if resp.id < id {
                        continue;
                    }
                    if resp.id > id {
                        self.drop_process();
                        return Err(Self::internal(format!("protocol: response id {} for request {id}", resp.id)));
                    }
                    return Ok(resp);
                }
                Err(RecvTimeoutError::Timeout) => {
                    self.drop_process();
                    return Err(ErrorRecord::new(
                        ErrorKind::InfiniteLoop,
                        format!("timeout: no response within {} s", self.cfg.timeout.as_secs_f64()),
                    ));
                }
                Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => {
                    self.drop_process();
                    return Err(Self::internal("adapter exited"));
                }
            }
        }
    }
}

impl Drop for BridgeClient {
    fn drop(&mut self) {
        self.drop_process();
    }
}

/// Executor that runs programs through adapter processes. Builtin passes in
/// the pipeline run locally; the pipeline's optimization level is sent as the
/// request's `pipeline_hint`. Each concurrent caller gets its own process.
pub struct BridgeExecutor {
    cfg: BridgeConfig,
    hello: Hello,
    idle: Mutex<Vec<BridgeClient>>,
}

impl BridgeExecutor {
    pub fn new(cfg: BridgeConfig) -> Result<Self, BridgeError> {
        let client = BridgeClient::spawn(cfg.clone())?;
        let hello = client.hello().clone();
        Ok(Self { cfg, hello, idle: Mutex::new(vec![client]) })
    }

    pub fn capabilities(&self) -> &BTreeSet<String> {
        &self.hello.capabilities
    }

    fn checkout(&self) -> Result<BridgeClient, ErrorRecord> {
        if let Some(c) = self.idle.lock().expect("pool lock").pop() {
            return Ok(c);
        }
        BridgeClient::spawn(self.cfg.clone()).map_err(|e| ErrorRecord::new(ErrorKind::Internal, e.to_string()))
    }
}

impl Executor for BridgeExecutor {
    fn backend(&self) -> Backend {
        Backend::Bridge
    }

    fn transform(&self, p: &Program, pipeline: &Pipeline) -> Result<Program, ErrorRecord> {
        let out = apply(pipeline, p)?;
        let missing: Vec<&str> =
            required_capabilities(&out).into_iter().filter(|c| !self.hello.capabilities.contains(*c)).collect();
        if !missing.is_empty() {
            return Err(ErrorRecord::new(
                ErrorKind::Validation,
                format!("adapter lacks capabilities: {}", missing.join(", ")),
            ));
        }
        Ok(out)
    }

    fn execute(&self, p: &Program, pipeline: &Pipeline, shots: u64, seed: u64) -> ExecOutcome {
        let mut client = self.checkout()?;
        let resp = client.request(&serialize(p), shots, seed, pipeline.opt_level().unwrap_or(0));
        self.idle.lock().expect("pool lock").push(client);
        let counts = response_outcome(&resp?, p.output_width())?;
        if counts.total() != shots {
            let m = format!("protocol: counts sum to {}, expected {shots}", counts.total());
            return Err(ErrorRecord::new(ErrorKind::Internal, m));
        }
        Ok(counts)
    }
}

/// Passes the reference adapter runs at each optimization level.
pub fn level_pipeline(level: u8) -> Pipeline {
    let n = match level {
        0 => 0,
        1 => 2,
        2 => 5,
        _ => PassId::CORRECT.len(),
    };
    Pipeline::new(PassId::CORRECT[..n].to_vec(), false).expect("correct passes only")
}

fn error_response(id: u64, kind: &str, message: impl Into<String>) -> WireResponse {
    WireResponse {
        id,
        status: Status::Error,
        counts: BTreeMap::new(),
        error: Some(WireError { kind: kind.to_string(), message: message.into() }),
    }
}

/// Answers one request line.
pub fn handle_line(line: &str) -> WireResponse {
    let value: serde_json::Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return error_response(0, "protocol", format!("malformed JSON: {e}")),
    };
    let id = value.get("id").and_then(serde_json::Value::as_u64).unwrap_or(0);
    let req: WireRequest = match serde_json::from_value(value) {
        Ok(r) => r,
        Err(e) => return error_response(id, "protocol", format!("malformed request: {e}")),
    };
    if req.v != PROTOCOL_VERSION {
        return error_response(id, "protocol", format!("unsupported version {}", req.v));
    }
    if req.dialect != BUILTIN_DIALECT {
        return error_response(id, "unsupported_dialect", req.dialect);
    }
    let program = match deserialize(&req.program) {
        Ok(p) => p,
        Err(e) => return error_response(id, "parse", e.to_string()),
    };
    let compiled = match apply(&level_pipeline(req.pipeline_hint), &program) {
        Ok(p) => p,
        Err(e) if e.kind == ErrorKind::Validation => return error_response(id, "validation", e.message),
        Err(e) => return error_response(id, "transpile", e.message),
    };
    let opts = RunOptions { mode: ExecMode::Sequential, ..RunOptions::default() };
    match run_with(&compiled, req.shots, req.seed, &opts).0 {
        Ok(c) => WireResponse { id, status: Status::Ok, counts: c.to_bitstrings(), error: None },
        Err(e) => {
            let kind = if e.kind == ErrorKind::InfiniteLoop { "infinite_loop" } else { "simulation" };
            error_response(id, kind, e.message)
        }
    }
}

/// Reference adapter main loop: hello, then one response per request line.
pub fn serve<R: BufRead, W: Write>(input: R, mut output: W) -> io::Result<()> {
    let hello = Hello {
        v: PROTOCOL_VERSION,
        dialects: vec![BUILTIN_DIALECT.to_string()],
        capabilities: CAPABILITIES.iter().map(|c| c.to_string()).collect(),
    };
    writeln!(output, "{}", serde_json::to_string(&hello).expect("hello serializes"))?;
    output.flush()?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = handle_line(&line);
        writeln!(output, "{}", serde_json::to_string(&resp).expect("response serializes"))?;
        output.flush()?;
    }
    Ok(())
}
