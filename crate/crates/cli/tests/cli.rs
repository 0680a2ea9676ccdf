use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn qfuzz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfuzz")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn campaign(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["campaign", "--out", out.to_str().unwrap(), "--seed", "3"];
    args.extend_from_slice(extra);
    qfuzz(&args)
}

#[test]
fn budget_prints_the_table_values() {
    let o = qfuzz(&["budget", "--delta", "0.1", "--qubits", "6"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("S_round=476 S_std=2263 S_max=4526"), "{}", stdout(&o));
    let o = qfuzz(&["budget", "--delta", "0.1", "--qubits", "8", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!((v["s_round"].as_u64(), v["s_std"].as_u64()), (Some(800), Some(6400)));
    assert_eq!(qfuzz(&["budget", "--delta", "1.5", "--qubits", "4"]).status.code(), Some(1));
}

#[test]
fn generate_then_derive() {
    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("p.qir-txt");
    let o = qfuzz(&["generate", "--qubits", "4", "--seed", "11", "-o", prog.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(fs::read_to_string(&prog).unwrap().contains("#dead"));
    let o = qfuzz(&["derive", prog.to_str().unwrap()]);
    assert!(o.status.success());
    let v = stdout(&o);
    assert!(!v.contains("#dead"));
    assert!(v.len() < fs::read_to_string(&prog).unwrap().len());
}

#[test]
fn correct_pipelines_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = campaign(dir.path(), &["--iters", "30", "--pipeline", "none,cancel-inverses+commute-cf"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("0 bug report(s)"));
    assert!(dir.path().join("summary.json").is_file());
    let r = qfuzz(&["reproduce", dir.path().to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    assert!(stdout(&r).contains("has no reports"));
}

#[test]
fn seeded_bug_is_found_and_reproduced() {
    let dir = tempfile::tempdir().unwrap();
    let o = campaign(dir.path(), &["--iters", "60", "--pipeline", "b4", "--seed-bugs", "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    let r = qfuzz(&["reproduce", dir.path().to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let text = stdout(&r);
    assert!(text.contains("[reproduced]"));
    assert!(!text.contains("MISMATCH"), "{text}");
}

#[test]
fn bad_input_is_a_tool_error() {
    let dir = tempfile::tempdir().unwrap();
    for pipeline in ["no-such-pass", "b1", "O2"] {
        let o = campaign(dir.path(), &["--iters", "1", "--pipeline", pipeline]);
        assert_eq!(o.status.code(), Some(1), "{pipeline}");
    }
    assert_eq!(qfuzz(&["reproduce", dir.path().join("missing").to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn bridge_campaign_with_reference_adapter() {
    let dir = tempfile::tempdir().unwrap();
    let o = campaign(
        dir.path(),
        &["--backend", "bridge", "--iters", "8", "--qubits", "3", "--pipeline", "O0,cancel-inverses+O2"],
    );
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["verdicts"]["pass"].as_u64(), Some(16), "{summary}");
}

#[test]
fn hanging_adapter_is_a_same_error() {
    let dir = tempfile::tempdir().unwrap();
    let hang = r#"sh -c "echo '{\"v\":1,\"capabilities\":[\"if_test\"]}'; exec sleep 30""#;
    let o = campaign(
        dir.path(),
        &["--backend", "bridge", "--iters", "2", "--qubits", "3", "--adapter", hang, "--timeout", "0.2"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("same_error: 2"), "{}", stdout(&o));
}

#[test]
fn adapter_subcommand_speaks_the_protocol() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_qfuzz"))
        .arg("adapter")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let prog = "qir-txt 1\nqreg 1\ncreg 1\noutput c0\nx q0[0]\nmeasure q0[0] -> c0[0]\n";
    let req = serde_json::json!({"v": 1, "id": 0, "dialect": "qir-txt", "program": prog, "shots": 5, "seed": 1, "pipeline_hint": 0});
    writeln!(child.stdin.take().unwrap(), "{req}").unwrap();
    let out = child.wait_with_output().unwrap();
    let lines: Vec<serde_json::Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["v"], 1);
    assert_eq!(lines[1]["status"], "ok", "{}", lines[1]);
    assert_eq!(lines[1]["counts"]["1"], 5);
}
