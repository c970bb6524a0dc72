use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use hqflow_core::artifacts::SecretStore;
use hqflow_core::assets::{sample_cluster, sample_engine, sample_queues, sample_secrets, sample_workflow};
use hqflow_core::engine::{
    load_run_dir, write_run_dir, Engine, EngineConfig, EngineError, EventKind, Replay, RunReport, RunState, TaskState,
};
use hqflow_core::metrics::MetricsRecorder;
use hqflow_core::payload::{
    Payload, PayloadError, PayloadOutput, PayloadRegistry, QuantumPayload, TaskContext, QUANTUM_IMAGE, SLEEP_IMAGE,
};
use hqflow_core::scheduler::{parse_queues, Scheduler};
use hqflow_core::workflow::parse_workflow;

const SECRET_VALUE: &str = "sample-token-not-a-real-credential";

/// Delegates to `inner` except for one task id, which fails.
struct FailOn {
    inner: Arc<dyn Payload>,
    task: String,
}

impl Payload for FailOn {
    fn run(&self, ctx: &mut TaskContext<'_>) -> Result<PayloadOutput, PayloadError> {
        if ctx.task.id == self.task {
            return Err(PayloadError::Failed("injected failure".into()));
        }
        self.inner.run(ctx)
    }
}

fn engine_with(payloads: PayloadRegistry, config: EngineConfig) -> Engine {
    Engine::new(
        sample_cluster(),
        Scheduler::new(sample_queues()).unwrap(),
        payloads,
        sample_secrets(),
        config,
    )
}

/// Steps to the end, checking engine invariants after every cycle.
fn drive(e: &mut Engine) -> Result<usize, EngineError> {
    let mut steps = 0;
    loop {
        let ev = e.step()?;
        e.check_invariants().unwrap();
        if ev.is_empty() {
            return Ok(steps);
        }
        steps += 1;
    }
}

fn sleep_workflow(body: &str) -> String {
    format!(
        "apiVersion: argoproj.io/v1alpha1\nkind: Workflow\nmetadata:\n  name: small\n  namespace: quantum-workflows\nspec:\n{body}"
    )
}

#[test]
fn poc_run_succeeds_and_reconstruct_waits_for_every_execute_task() {
    let mut e = sample_engine(EngineConfig {
        seed: 11,
        retry_budget: 0,
    });
    let run = e.submit(sample_workflow()).unwrap();
    assert_eq!(e.tasks(&run).unwrap().len(), 650);
    drive(&mut e).unwrap();
    assert_eq!(e.run_state(&run), Some(RunState::Succeeded));

    let report = e.report(&run).unwrap();
    assert_eq!(report.census.succeeded, 650);
    assert_eq!(report.task_count, 650);
    assert!(report.timeline.iter().all(|p| p.total() == 650));

    let execute: Vec<_> = report
        .tasks
        .iter()
        .filter(|t| t.template.starts_with("execute-"))
        .collect();
    assert_eq!(execute.len(), 648);
    let last_finish = execute.iter().map(|t| t.finished_ns.unwrap()).max().unwrap();
    let rec = report.task("reconstruct").unwrap();
    assert!(rec.started_ns.unwrap() >= last_finish);
    // Dispatch happens in the cycle that completes the last execute task.
    assert_eq!(rec.enqueued_ns, Some(last_finish));

    // Artifact index from the event log matches the store.
    assert_eq!(report.artifacts, e.artifacts(&run).unwrap().index());
    let paths: Vec<&str> = report.artifacts.iter().map(|a| a.path.as_str()).collect();
    assert!(paths.contains(&"plan.json"));
    assert!(paths.contains(&"reconstruction.json"));
    assert_eq!(paths.iter().filter(|p| p.ends_with(".frag")).count(), 432);
    assert_eq!(paths.iter().filter(|p| p.starts_with("results/")).count(), 432);

    let out = &report.outputs["reconstruct"];
    let delta: f64 = out["delta"].parse().unwrap();
    let sigma: f64 = out["uncertainty"].parse().unwrap();
    assert_eq!(out["mode"], "sampled");
    assert!(delta.abs() <= 5.0 * sigma, "delta {delta} vs stderr {sigma}");

    // All resources are back.
    for n in e.cluster().nodes() {
        assert_eq!(n.allocatable, n.capacity, "{}", n.name);
    }
}

#[test]
fn injected_failures_leave_reconstruct_pending_and_fail_the_run() {
    for victim in [
        "execute-subcircuits-cpu(0)",
        "execute-subcircuits-gpu(100)",
        "execute-subcircuits-qpu(215)",
    ] {
        let mut payloads = PayloadRegistry::with_defaults();
        payloads.register(
            QUANTUM_IMAGE,
            Arc::new(FailOn {
                inner: Arc::new(QuantumPayload::default()),
                task: victim.into(),
            }),
        );
        let mut e = engine_with(payloads, EngineConfig::default());
        let run = e.submit(sample_workflow()).unwrap();
        drive(&mut e).unwrap();
        assert_eq!(e.run_state(&run), Some(RunState::Failed), "{victim}");
        let report = RunReport::from_events(&run, e.events()).unwrap();
        assert_eq!(report.state, RunState::Failed);
        assert_eq!(report.census.failed, 1, "{victim}");
        assert_eq!(report.census.active, 0);
        assert_eq!(report.task(victim).unwrap().state, Some(TaskState::Failed));
        assert_eq!(report.task("reconstruct").unwrap().state, Some(TaskState::Pending));
        assert!(report.task("reconstruct").unwrap().enqueued_ns.is_none());
        assert!(
            e.scheduler().workloads().next().is_none(),
            "queued workloads must be evicted"
        );
        for n in e.cluster().nodes() {
            assert_eq!(n.allocatable, n.capacity, "{victim}: {}", n.name);
        }
    }
}

#[test]
fn identical_seeds_give_identical_reports_and_metrics() {
    let run_once = |seed: u64| {
        let mut e = sample_engine(EngineConfig { seed, retry_budget: 0 });
        let run = e.submit(sample_workflow()).unwrap();
        let mut rec = MetricsRecorder::new();
        let mut exports = Vec::new();
        loop {
            let ev = e.step().unwrap();
            if ev.is_empty() {
                break;
            }
            for x in &ev {
                rec.record(x);
            }
            exports.push(rec.export());
        }
        (e.report(&run).unwrap().to_json(), exports)
    };
    let (a, ma) = run_once(5);
    let (b, mb) = run_once(5);
    assert_eq!(a, b);
    assert_eq!(ma, mb);
    let (c, _) = run_once(6);
    assert_ne!(a, c, "the seed must reach the sampled QPU results");
}

#[test]
fn zero_quota_deadlocks() {
    let text = zero_quotas(hqflow_core::assets::QUEUES_YAML);
    let mut e = Engine::new(
        sample_cluster(),
        Scheduler::new(parse_queues(text.as_bytes()).unwrap()).unwrap(),
        PayloadRegistry::with_defaults(),
        sample_secrets(),
        EngineConfig::default(),
    );
    let spec = parse_workflow(
        sleep_workflow(
            "  entrypoint: main\n  templates:\n    - name: main\n      steps:\n        - - {name: a, template: work}\n    - name: work\n      metadata:\n        labels: {kueue.x-k8s.io/queue-name: queue-cpu}\n      container:\n        image: hqflow/sleep:latest\n        resources:\n          requests: {cpu: 100m}\n",
        )
        .as_bytes(),
    )
    .unwrap();
    let run = e.submit(spec).unwrap();
    match e.run_to_completion(&run) {
        Err(EngineError::Deadlock { tasks }) => assert_eq!(tasks, vec![format!("{run}:a")]),
        other => panic!("expected deadlock, got {other:?}"),
    }
}

/// Sets every nominalQuota in the queue document to zero.
fn zero_quotas(text: &str) -> String {
    text.lines()
        .map(|l| match l.find("nominalQuota:") {
            Some(i) => format!("{}nominalQuota: \"0\"}}", &l[..i]),
            None => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn single_task_and_empty_runs() {
    let one = sleep_workflow(
        "  entrypoint: main\n  templates:\n    - name: main\n      container:\n        image: hqflow/sleep:latest\n        env: [{name: COST_SECONDS, value: \"3\"}]\n",
    );
    let mut e = sample_engine(EngineConfig::default());
    // Entrypoint is the container itself; it is direct-bound.
    let spec = parse_workflow(one.as_bytes()).unwrap();
    let r1 = e.submit(spec.clone()).unwrap();
    let report = e.run_to_completion(&r1).unwrap();
    assert_eq!(report.state, RunState::Succeeded);
    assert_eq!(report.task_count, 1);
    assert_eq!(report.makespan_ns, 3_000_000_000);
    let r2 = e.submit(spec).unwrap();
    assert_ne!(r1, r2);
    let report2 = e.run_to_completion(&r2).unwrap();
    assert_eq!(report.spec_sha256, report2.spec_sha256);

    let empty = sleep_workflow(
        "  entrypoint: main\n  templates:\n    - name: main\n      steps:\n        - - {name: none, template: work, withSequence: {count: 0}}\n    - name: work\n      container: {image: hqflow/sleep:latest}\n",
    );
    let run = e.submit(parse_workflow(empty.as_bytes()).unwrap()).unwrap();
    let report = e.run_to_completion(&run).unwrap();
    assert_eq!(report.state, RunState::Succeeded);
    assert_eq!(report.task_count, 0);
    assert_eq!(report.makespan_ns, 0);
}

/// Records whether a path exists when it runs, then writes its own file.
struct Probe;

impl Payload for Probe {
    fn run(&self, ctx: &mut TaskContext<'_>) -> Result<PayloadOutput, PayloadError> {
        let mut summary = BTreeMap::new();
        if let Some(p) = ctx.env("PROBE") {
            summary.insert("sees".into(), ctx.fs.exists(p).to_string());
        }
        if let Some(p) = ctx.env("WRITE") {
            let p = p.to_string();
            ctx.fs.write(&p, b"x".to_vec())?;
        }
        Ok(PayloadOutput {
            cost_seconds: ctx.env("COST").map(|c| c.parse().unwrap()).unwrap_or(1.0),
            summary,
        })
    }
}

#[test]
fn writes_are_invisible_to_siblings_and_visible_to_successors() {
    let mut payloads = PayloadRegistry::with_defaults();
    payloads.register("probe:latest", Arc::new(Probe));
    let mut e = engine_with(payloads, EngineConfig::default());
    let text = sleep_workflow(
        r#"  entrypoint: main
  volumes:
    - {name: data, persistentVolumeClaim: {claimName: pvc}}
  templates:
    - name: main
      steps:
        - - {name: fast, template: fast}
          - {name: slow, template: slow}
        - - {name: after, template: after}
    - name: fast
      container:
        image: probe:latest
        env: [{name: WRITE, value: /data/fast.txt}, {name: COST, value: "0.5"}]
        volumeMounts: [{name: data, mountPath: /data}]
    - name: slow
      container:
        image: probe:latest
        env: [{name: PROBE, value: /data/fast.txt}, {name: COST, value: "5"}]
        volumeMounts: [{name: data, mountPath: /data}]
    - name: after
      container:
        image: probe:latest
        env: [{name: PROBE, value: /data/fast.txt}]
        volumeMounts: [{name: data, mountPath: /data}]
"#,
    );
    let run = e.submit(parse_workflow(text.as_bytes()).unwrap()).unwrap();
    let report = e.run_to_completion(&run).unwrap();
    assert_eq!(report.state, RunState::Succeeded);
    assert_eq!(report.outputs["slow"]["sees"], "false");
    assert_eq!(report.outputs["after"]["sees"], "true");
}

#[test]
fn secrets_mount_read_only_and_never_reach_the_run_record() {
    let mut payloads = PayloadRegistry::with_defaults();
    payloads.register("probe:latest", Arc::new(Probe));
    let mut e = engine_with(payloads, EngineConfig::default());
    let text = sleep_workflow(
        r#"  entrypoint: main
  volumes:
    - {name: tokens, secret: {secretName: iqm-tokens}}
  templates:
    - name: main
      container:
        image: probe:latest
        env: [{name: PROBE, value: /s/tokens.json}, {name: WRITE, value: /s/stolen.json}]
        volumeMounts: [{name: tokens, mountPath: /s}]
"#,
    );
    let run = e.submit(parse_workflow(text.as_bytes()).unwrap()).unwrap();
    let report = e.run_to_completion(&run).unwrap();
    assert_eq!(report.state, RunState::Failed);
    assert!(report.tasks[0].error.as_deref().unwrap().contains("read-only"));

    // The full PoC reads the token; nothing persisted may contain it.
    let mut e = sample_engine(EngineConfig::default());
    let run = e.submit(sample_workflow()).unwrap();
    e.run_to_completion(&run).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run_dir(dir.path(), &e.record(&run).unwrap()).unwrap();
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let bytes = std::fs::read(entry.unwrap().path()).unwrap();
        assert!(!String::from_utf8_lossy(&bytes).contains(SECRET_VALUE));
    }
    let log: String = e.events().iter().map(|x| x.to_json_line()).collect();
    assert!(!log.contains(SECRET_VALUE));
    assert!(!format!("{:?}", sample_secrets()).contains(SECRET_VALUE));

    let loaded = load_run_dir(dir.path()).unwrap();
    assert_eq!(loaded.report, e.report(&run).unwrap());
    assert_eq!(loaded.artifacts, e.artifacts(&run).unwrap().index());
}

#[test]
fn missing_secret_fails_the_task() {
    let mut e = Engine::new(
        sample_cluster(),
        Scheduler::new(sample_queues()).unwrap(),
        PayloadRegistry::with_defaults(),
        SecretStore::new(),
        EngineConfig::default(),
    );
    let run = e.submit(sample_workflow()).unwrap();
    let report = e.run_to_completion(&run).unwrap();
    assert_eq!(report.state, RunState::Failed);
    let failed: Vec<_> = report
        .tasks
        .iter()
        .filter(|t| t.state == Some(TaskState::Failed))
        .collect();
    assert!(failed.iter().all(|t| t.template == "execute-subcircuits-qpu"));
    assert!(failed[0].error.as_deref().unwrap().contains("iqm-tokens"));
}

/// Fails the first `failures` calls.
struct Flaky {
    failures: u32,
    calls: AtomicU32,
}

impl Payload for Flaky {
    fn run(&self, _ctx: &mut TaskContext<'_>) -> Result<PayloadOutput, PayloadError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) < self.failures {
            return Err(PayloadError::Failed("transient".into()));
        }
        Ok(PayloadOutput {
            cost_seconds: 1.0,
            summary: BTreeMap::new(),
        })
    }
}

#[test]
fn retry_budget_keeps_the_task_active() {
    let text =
        sleep_workflow("  entrypoint: main\n  templates:\n    - name: main\n      container: {image: flaky:latest}\n");
    for (budget, expect) in [(0, RunState::Failed), (1, RunState::Succeeded)] {
        let mut payloads = PayloadRegistry::new();
        payloads.register(
            "flaky:latest",
            Arc::new(Flaky {
                failures: 1,
                calls: AtomicU32::new(0),
            }),
        );
        let mut e = engine_with(
            payloads,
            EngineConfig {
                seed: 0,
                retry_budget: budget,
            },
        );
        let run = e.submit(parse_workflow(text.as_bytes()).unwrap()).unwrap();
        let report = e.run_to_completion(&run).unwrap();
        assert_eq!(report.state, expect, "budget {budget}");
        assert_eq!(report.tasks[0].attempt, budget);
        let retried = e
            .events()
            .iter()
            .filter(|x| matches!(x.kind, EventKind::TaskRetried { .. }))
            .count();
        assert_eq!(retried as u32, budget);
    }
}

#[test]
fn unknown_images_and_queues() {
    let mut e = sample_engine(EngineConfig::default());
    let text = sleep_workflow("  entrypoint: main\n  templates:\n    - name: main\n      container: {image: nope:1}\n");
    let run = e.submit(parse_workflow(text.as_bytes()).unwrap()).unwrap();
    let report = e.run_to_completion(&run).unwrap();
    assert_eq!(report.state, RunState::Failed);
    assert!(report.tasks[0].error.as_deref().unwrap().contains("not registered"));

    let text = sleep_workflow(
        "  entrypoint: main\n  templates:\n    - name: main\n      metadata:\n        labels: {kueue.x-k8s.io/queue-name: missing}\n      container: {image: hqflow/sleep:latest}\n",
    );
    let err = e.submit(parse_workflow(text.as_bytes()).unwrap()).unwrap_err();
    assert!(matches!(err, EngineError::UnknownQueue { .. }), "{err}");
    assert_eq!(SLEEP_IMAGE, "hqflow/sleep:latest");
}

#[test]
fn replayed_queue_counts_match_the_scheduler_mid_run() {
    let mut e = sample_engine(EngineConfig::default());
    let run = e.submit(sample_workflow()).unwrap();
    let mut replay: Option<Replay> = None;
    let mut checked = 0;
    loop {
        let ev = e.step().unwrap();
        if ev.is_empty() {
            break;
        }
        for x in &ev {
            match &mut replay {
                None => replay = Some(Replay::start(x).unwrap()),
                Some(r) => r.apply(x).unwrap(),
            }
        }
        let r = replay.as_ref().unwrap();
        for s in e.scheduler().status() {
            let c = r.queues.get(&s.queue).copied().unwrap_or_default();
            assert_eq!((c.pending, c.admitted), (s.pending, s.admitted), "queue {}", s.queue);
        }
        let census = e.census(&run).unwrap();
        for st in TaskState::ALL {
            assert_eq!(r.census.get(st), census[&st]);
        }
        checked += 1;
    }
    assert!(checked > 100);
}

#[test]
fn replay_rejects_illegal_logs() {
    let mut e = sample_engine(EngineConfig::default());
    let text = sleep_workflow(
        "  entrypoint: main\n  templates:\n    - name: main\n      container: {image: hqflow/sleep:latest}\n",
    );
    let run = e.submit(parse_workflow(text.as_bytes()).unwrap()).unwrap();
    e.run_to_completion(&run).unwrap();
    let events = e.events().to_vec();
    assert!(Replay::of_run(&run, &events).is_ok());

    // Dropping the start makes the success illegal.
    let no_start: Vec<_> = events
        .iter()
        .filter(|x| !matches!(x.kind, EventKind::TaskStarted { .. }))
        .cloned()
        .collect();
    assert!(Replay::of_run(&run, &no_start).is_err());
    // Duplicating the success is a transition out of a terminal state.
    let mut dup = events.clone();
    let i = dup
        .iter()
        .position(|x| matches!(x.kind, EventKind::TaskSucceeded { .. }))
        .unwrap();
    dup.insert(i + 1, dup[i].clone());
    assert!(Replay::of_run(&run, &dup).is_err());
}
