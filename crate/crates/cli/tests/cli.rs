use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn oad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oad")).args(args).env_remove("RUST_LOG").output().expect("spawn oad")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_is_deterministic_and_report_reproduces_it() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = oad(&["run", "--out", path(dir), "--set", "eval.synthetic_samples=6"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["transcripts.jsonl", "metrics.json", "report.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_eq!(fs::read_to_string(a.join("transcripts.jsonl")).unwrap().lines().count(), 6);

    let report = oad(&["report", path(&a)]);
    assert!(report.status.success());
    assert_eq!(String::from_utf8(report.stdout).unwrap(), fs::read_to_string(a.join("report.txt")).unwrap());
}

#[test]
fn report_detects_edited_transcripts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("r");
    assert!(oad(&["run", "--out", path(&dir), "--set", "eval.synthetic_samples=3"]).status.success());
    let t = dir.join("transcripts.jsonl");
    let text = fs::read_to_string(&t).unwrap();
    let first = text.lines().next().unwrap().to_owned();
    fs::write(&t, text.replacen(&first, "", 1).trim_start()).unwrap();
    let out = oad(&["report", path(&dir)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn memory_seed_inspect_compact() {
    let tmp = tempfile::tempdir().unwrap();
    let mem = tmp.path().join("mem.jsonl");
    let out = oad(&["memory", "seed", "--k", "60", "--out", path(&mem)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&mem).unwrap().lines().count(), 61);

    let out = oad(&["memory", "inspect", path(&mem), "--limit", "3"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("examples: 60"), "{text}");
    assert!(text.contains("next index: 61"));

    let small = tmp.path().join("small.jsonl");
    assert!(oad(&["memory", "compact", path(&mem), "--keep", "10", "--out", path(&small)]).status.success());
    let text = String::from_utf8(oad(&["memory", "inspect", path(&small), "--limit", "1"]).stdout).unwrap();
    assert!(text.contains("examples: 10"), "{text}");
    assert!(text.contains("    51  "), "kept entries keep their indices: {text}");
}

#[test]
fn memory_round_trips_through_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mem = tmp.path().join("mem.jsonl");
    let after = tmp.path().join("after.jsonl");
    assert!(oad(&["memory", "seed", "--k", "5", "--out", path(&mem)]).status.success());
    let out = oad(&[
        "run",
        "--out",
        path(&tmp.path().join("r")),
        "--memory-in",
        path(&mem),
        "--memory-out",
        path(&after),
        "--set",
        "eval.synthetic_samples=4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let last = fs::read_to_string(tmp.path().join("r/transcripts.jsonl")).unwrap().lines().last().unwrap().to_owned();
    let last: serde_json::Value = serde_json::from_str(&last).unwrap();
    let expected = last["memory"]["after"].as_u64().unwrap();
    assert!(expected > 5);
    let text = String::from_utf8(oad(&["memory", "inspect", path(&after)]).stdout).unwrap();
    assert!(text.contains(&format!("examples: {expected}\n")), "{text}");
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(oad(&["--bogus"]).status.code(), Some(1));
    assert_eq!(oad(&["run"]).status.code(), Some(1));
    assert_eq!(oad(&["ablate", "--grid", "nope", "--out", "x"]).status.code(), Some(1));
    let tmp = tempfile::tempdir().unwrap();
    let out = oad(&["run", "--out", path(tmp.path()), "--set", "mka.n=0"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let out = oad(&["run", "--out", path(tmp.path()), "--set", "no.such.key=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(oad(&["--help"]).status.code(), Some(0));
    assert_eq!(oad(&["--version"]).status.code(), Some(0));
}

#[test]
fn ablation_with_failing_llm_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("a");
    let ok = oad(&["ablate", "--grid", "layouts", "--out", path(&dir), "--set", "eval.synthetic_samples=2"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert_eq!(String::from_utf8(ok.stdout).unwrap().lines().count(), 4);
    assert!(dir.join("cell-1/transcripts.jsonl").exists());

    let out = oad(&[
        "ablate",
        "--grid",
        "modules",
        "--out",
        path(&tmp.path().join("b")),
        "--set",
        "eval.synthetic_samples=2",
        "--set",
        "backends.mock.fail_endpoints=[\"llm\"]",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn conformance_against_unreachable_server_exits_two() {
    // nothing listens on the discard port
    let out = oad(&["conformance", "--base-url", "http://127.0.0.1:9", "--endpoint", "qa", "--timeout-ms", "500"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("FAIL /v1/qa schema"));
    assert_eq!(oad(&["conformance", "--base-url", "x", "--endpoint", "nope"]).status.code(), Some(1));
}

#[test]
fn served_mock_passes_conformance() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut server = Command::new(env!("CARGO_BIN_EXE_oad"))
        .args(["serve-mock", "--port", &port.to_string(), "--feature-dim", "16"])
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let base = format!("http://127.0.0.1:{port}");
    let deadline = std::time::Instant::now() + std::time::Duration::from_secs(10);
    while std::net::TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(std::time::Instant::now() < deadline, "mock server did not start");
        std::thread::sleep(std::time::Duration::from_millis(20));
    }
    let out = oad(&["conformance", "--base-url", &base, "--feature-dim", "16"]);
    let wrong = oad(&["conformance", "--base-url", &base, "--feature-dim", "8", "--endpoint", "embed"]);
    server.kill().unwrap();
    let _ = server.wait();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS ")).count(), 41);
    assert_eq!(wrong.status.code(), Some(2));
}
