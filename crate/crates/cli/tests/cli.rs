use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::thread;
use std::time::Duration;

use hqflow_core::assets::{sample_engine, sample_workflow, QUEUES_YAML, WORKFLOW_YAML};
use hqflow_core::engine::EngineConfig;

fn cli(state: &Path, args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["hqflow", "--state-dir", state.to_str().unwrap()];
    argv.extend_from_slice(args);
    let code = hqflow_cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn field(line: &str, key: &str) -> f64 {
    let start = line.find(&format!("{key}=")).unwrap() + key.len() + 1;
    line[start..].split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn apply_prints_reconstruction_and_oracle_delta() {
    let dir = tempfile::tempdir().unwrap();
    let wf = dir.path().join("wf.yaml");
    std::fs::write(&wf, WORKFLOW_YAML).unwrap();
    let (code, out, err) = cli(dir.path(), &["--seed", "9", "apply", "-f", wf.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("succeeded"), "{out}");
    assert!(
        out.contains("tasks: 650  pending=0 active=0 succeeded=650 failed=0"),
        "{out}"
    );
    let line = out.lines().find(|l| l.starts_with("reconstruct:")).unwrap();
    let (value, oracle, delta, sigma) = (
        field(line, "value"),
        field(line, "oracle"),
        field(line, "delta"),
        field(line, "uncertainty"),
    );
    assert!((value - oracle - delta).abs() < 1e-12);
    assert!(delta.abs() < 5.0 * sigma, "{line}");

    // A second apply in the same state dir gets the next run id.
    let (code, out, _) = cli(dir.path(), &["--seed", "9", "apply", "-f", wf.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.starts_with("run run-0002 "), "{out}");

    let (code, out, _) = cli(dir.path(), &["status", "run-0001"]);
    assert_eq!(code, 0);
    assert!(out.contains("execute-subcircuits-qpu"));
    let row = out.lines().find(|l| l.starts_with("execute-subcircuits-gpu")).unwrap();
    assert_eq!(
        row.split_whitespace().skip(1).collect::<Vec<_>>(),
        ["216", "216", "0", "0", "0"]
    );
    let (_, json_a, _) = cli(dir.path(), &["status", "run-0001", "--json"]);
    let (_, json_b, _) = cli(dir.path(), &["status", "run-0002", "--json"]);
    assert_eq!(json_a, json_b);

    let (code, _, err) = cli(dir.path(), &["status", "run-0099"]);
    assert_eq!(code, 2);
    assert!(err.contains("run-0099"));
}

#[test]
fn queues_mid_run_match_the_scheduler() {
    let dir = tempfile::tempdir().unwrap();
    let wf = dir.path().join("wf.yaml");
    std::fs::write(&wf, WORKFLOW_YAML).unwrap();
    assert_eq!(cli(dir.path(), &["apply", "-f", wf.to_str().unwrap()]).0, 0);

    let mut e = sample_engine(EngineConfig::default());
    e.submit(sample_workflow()).unwrap();
    let mut seen = 0;
    let mut probes = 0;
    while !e.step().unwrap().is_empty() {
        seen = e.events().len();
        probes += 1;
        if probes % 40 != 0 {
            continue;
        }
        let (code, out, _) = cli(
            dir.path(),
            &["queues", "--run", "run-0001", "--at-event", &seen.to_string()],
        );
        assert_eq!(code, 0);
        for s in e.scheduler().status() {
            let row = out.lines().find(|l| l.starts_with(&format!("{} ", s.queue))).unwrap();
            let cols: Vec<&str> = row.split_whitespace().collect();
            assert_eq!(cols[1], s.cluster_queue);
            assert_eq!(cols[2], s.pending.to_string(), "event {seen}: {row}");
            assert_eq!(cols[3], s.admitted.to_string(), "event {seen}: {row}");
        }
    }
    assert!(seen > 0);
    let (_, out, _) = cli(dir.path(), &["queues"]);
    assert_eq!(out.lines().count(), 4);
    assert!(out.lines().skip(1).all(|l| l.ends_with(" 0        0")), "{out}");
}

#[test]
fn validate_reports_diagnostics_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.yaml");
    std::fs::write(&good, WORKFLOW_YAML).unwrap();
    let (code, out, _) = cli(dir.path(), &["validate", "-f", good.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("650 tasks"), "{out}");

    let bad = dir.path().join("bad.yaml");
    std::fs::write(
        &bad,
        WORKFLOW_YAML.replace("template: reconstruct", "template: nowhere"),
    )
    .unwrap();
    let (code, out, err) = cli(dir.path(), &["validate", "-f", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(err.contains("E011"), "{err}");

    let (code, _, err) = cli(dir.path(), &["validate", "-f", "/nonexistent.yaml"]);
    assert_eq!(code, 2);
    assert!(err.contains("nonexistent"));
    assert_eq!(cli(dir.path(), &["frobnicate"]).0, 2);
    assert_eq!(cli(dir.path(), &["apply"]).0, 2);
    let (code, out, _) = cli(dir.path(), &["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("apply") && out.contains("metrics"));
}

#[test]
fn failed_runs_exit_1_and_bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let wf = dir.path().join("wf.yaml");
    std::fs::write(&wf, WORKFLOW_YAML).unwrap();
    // Without the token secret every QPU task fails.
    let secrets = dir.path().join("secrets.yaml");
    std::fs::write(
        &secrets,
        "apiVersion: v1\nkind: Secret\nmetadata:\n  name: unrelated\nstringData: {}\n",
    )
    .unwrap();
    let (code, out, err) = cli(
        dir.path(),
        &[
            "--secrets",
            secrets.to_str().unwrap(),
            "apply",
            "-f",
            wf.to_str().unwrap(),
        ],
    );
    if code == 2 {
        panic!("secrets document rejected: {err}");
    }
    assert_eq!(code, 1, "{out}{err}");
    assert!(out.contains(" failed\n"), "{out}");
    assert!(out.contains("failed: execute-subcircuits-qpu"), "{out}");
    assert!(!out.contains("reconstruct:"));

    let queues = dir.path().join("queues.yaml");
    std::fs::write(&queues, QUEUES_YAML.replace("ClusterQueue", "Bogus")).unwrap();
    let (code, _, err) = cli(
        dir.path(),
        &[
            "--queues",
            queues.to_str().unwrap(),
            "apply",
            "-f",
            wf.to_str().unwrap(),
        ],
    );
    assert_eq!(code, 2, "{err}");
}

#[test]
fn metrics_print_and_serve_the_recorded_export() {
    let dir = tempfile::tempdir().unwrap();
    let (code, idle, _) = cli(dir.path(), &["metrics"]);
    assert_eq!(code, 0);
    assert!(idle.contains("hqflow_tasks{state=\"pending\"} 0"), "{idle}");

    let wf = dir.path().join("wf.yaml");
    std::fs::write(&wf, WORKFLOW_YAML).unwrap();
    assert_eq!(cli(dir.path(), &["apply", "-f", wf.to_str().unwrap()]).0, 0);
    let (code, text, _) = cli(dir.path(), &["metrics", "--run", "run-0001"]);
    assert_eq!(code, 0);
    assert!(text.contains("hqflow_tasks{state=\"succeeded\"} 650 "), "{text}");
    assert!(text.contains("hqflow_workflow_completed_total 1 "));

    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let state = dir.path().to_path_buf();
    let server = {
        let addr = addr.clone();
        thread::spawn(move || cli(&state, &["metrics", "--serve", &addr, "--once"]))
    };
    let mut stream = None;
    for _ in 0..200 {
        match TcpStream::connect(&addr) {
            Ok(s) => {
                stream = Some(s);
                break;
            }
            Err(_) => thread::sleep(Duration::from_millis(10)),
        }
    }
    let mut stream = stream.expect("server came up");
    stream
        .write_all(b"GET /metrics HTTP/1.1\r\nHost: localhost\r\n\r\n")
        .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    let (code, _, err) = server.join().unwrap();
    assert_eq!(code, 0, "{err}");
    assert!(response.starts_with("HTTP/1.1 200 OK\r\n"), "{response}");
    assert!(response.contains("Content-Type: text/plain; version=0.0.4"));
    let body = response.split("\r\n\r\n").nth(1).unwrap();
    assert_eq!(body, text);
}
