use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn coplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coplan"))
        .args(args)
        .env_remove("COPLAN_CONFIG")
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

const SMALL: [&str; 6] = [
    "--set",
    "doe.trends=[\"T1\"]",
    "--set",
    "doe.consolidation=[\"Min\"]",
    "--set",
    "doe.visibility=[{label=\"V4\", firm_length=10}]",
];

fn simulate(out: &Path, extra: &[&str]) -> Output {
    let config = repo("configs/reference.toml");
    let mut args = vec!["simulate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    args.extend(extra);
    coplan(&args)
}

fn only_experiment(root: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = std::fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs[0].clone()
}

#[test]
fn evaluate_supplier_fixture() {
    let out = tempfile::tempdir().unwrap();
    let o = coplan(&["evaluate", repo("fixtures/table4.csv").to_str().unwrap(), "--actor", "supplier", "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let stdout = text(&o.stdout);
    assert!(stdout.contains("alpha = 0.854604 (29383/34382)"), "{stdout}");
    assert!(stdout.contains("-46597..73034"));
    for f in ["supplier-diagram.json", "supplier-regret.json", "supplier-summary.txt"] {
        assert!(out.path().join(f).is_file(), "{f}");
    }
    let d: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("supplier-diagram.json")).unwrap()).unwrap();
    assert_eq!(d["savage"]["winners"], serde_json::json!(["S1"]));
}

#[test]
fn evaluate_customer_fixture() {
    let out = tempfile::tempdir().unwrap();
    let o = coplan(&["evaluate", repo("fixtures/table4.csv").to_str().unwrap(), "--actor", "customer", "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success());
    let stdout = text(&o.stdout);
    assert!(stdout.contains("-44240..300"), "{stdout}");
    assert!(stdout.contains("-76100..900"));
    let o = coplan(&["evaluate", repo("fixtures/table9.csv").to_str().unwrap(), "--actor", "customer", "--out", out.path().to_str().unwrap()]);
    assert!(text(&o.stdout).contains("-63760..5900"));
}

#[test]
fn evaluate_errors() {
    let out = tempfile::tempdir().unwrap();
    let o_str = out.path().to_str().unwrap();
    let t4 = repo("fixtures/table4.csv");
    let o = coplan(&["evaluate", t4.to_str().unwrap(), "--actor", "supplier", "--penalties", "S1=10", "--out", o_str]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("penalties apply to cost matrices only"));
    let o = coplan(&["evaluate", t4.to_str().unwrap(), "--actor", "customer", "--penalties", "V2", "--out", o_str]);
    assert_eq!(o.status.code(), Some(2));
    let o = coplan(&["evaluate", "/no/such.csv", "--actor", "customer", "--out", o_str]);
    assert_eq!(o.status.code(), Some(2));
    let o = coplan(&["evaluate", t4.to_str().unwrap(), "--actor", "broker", "--out", o_str]);
    assert_eq!(o.status.code(), Some(2));
    assert!(std::fs::read_dir(out.path()).unwrap().next().is_none());
}

#[test]
fn simulate_usage_errors_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let o = coplan(&["simulate", "--config", "/no/config.toml", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let o = coplan(&["simulate", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = simulate(&out, &["--set", "run.turbo=true"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("turbo"));
    assert!(!out.exists());
}

#[test]
fn simulate_is_idempotent_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let o = simulate(&out, &[]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("strategy"));
    let exp = only_experiment(&out);
    let csv = std::fs::read_to_string(exp.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let json = std::fs::read_to_string(exp.join("results.json")).unwrap();
    assert!(exp.join("traces/T1-Min-V4-S2.jsonl").is_file());

    let o = simulate(&out, &[]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(exp.join("results.csv")).unwrap(), csv);
    assert_eq!(std::fs::read_to_string(exp.join("results.json")).unwrap(), json);

    let rep = dir.path().join("report");
    let o = coplan(&["report", exp.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert_eq!(std::fs::read_to_string(rep.join("costs.csv")).unwrap().lines().count(), 3);
    let series = std::fs::read_to_string(rep.join("series/T1-Min-V4-S1.csv")).unwrap();
    assert_eq!(series.lines().count(), 1 + 36);

    // The config path may also come from the environment.
    let o = Command::new(env!("CARGO_BIN_EXE_coplan"))
        .args(["simulate", "--out", out.to_str().unwrap()])
        .args(SMALL)
        .env("COPLAN_CONFIG", repo("configs/reference.toml"))
        .output()
        .unwrap();
    assert!(o.status.success());
}

#[test]
fn scenario_failures_exit_1_and_keep_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let o = simulate(&out, &["--set", "run.inventory_cap=0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("2 of 2 scenarios failed"));
    let exp = only_experiment(&out);
    assert!(exp.join("results.json").is_file());
    let o = coplan(&["report", exp.to_str().unwrap(), "--out", dir.path().join("rep").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("missing series"));
}

#[test]
fn report_on_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = coplan(&["report", dir.path().to_str().unwrap(), "--out", dir.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

fn http_get(addr: &str, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(addr).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: test\r\nConnection: close\r\n\r\n").ok()?;
    let mut buf = String::new();
    s.read_to_string(&mut buf).ok()?;
    Some(buf)
}

#[test]
fn serve_answers_health_and_reports_busy_ports() {
    let dir = tempfile::tempdir().unwrap();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let mut child = Command::new(env!("CARGO_BIN_EXE_coplan"))
        .args(["serve", dir.path().to_str().unwrap(), "--bind", &addr])
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let body = loop {
        if let Some(b) = http_get(&addr, "/health") {
            break b;
        }
        assert!(Instant::now() < deadline, "server did not start");
        std::thread::sleep(Duration::from_millis(50));
    };
    assert!(body.contains("\"ok\""), "{body}");
    assert!(http_get(&addr, "/experiments").unwrap().ends_with("[]"));

    let o = coplan(&["serve", dir.path().to_str().unwrap(), "--bind", &addr]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("cannot bind"));
    child.kill().unwrap();
    child.wait().unwrap();

    let o = coplan(&["serve", "/no/such/dir"]);
    assert_eq!(o.status.code(), Some(2));
}
