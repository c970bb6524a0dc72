//! The `hqflow` command line: submit workflows to the simulated cluster,
//! inspect recorded runs and export their metrics.

mod serve;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use hqflow_core::artifacts::SecretStore;
use hqflow_core::assets;
use hqflow_core::cluster::{parse_cluster, Cluster};
use hqflow_core::engine::{
    load_run_dir, write_run_dir, Engine, EngineConfig, EngineError, Replay, RunReport, RunState, TaskState,
};
use hqflow_core::metrics::MetricsRecorder;
use hqflow_core::payload::PayloadRegistry;
use hqflow_core::scheduler::{parse_queues, QueueConfig, Scheduler};
use hqflow_core::workflow::{expand_dag, parse_workflow, WorkflowSpec};

pub const METRICS_FILE: &str = "metrics.prom";
const RUNS_DIR: &str = "runs";

#[derive(Debug, Parser)]
#[command(
    name = "hqflow",
    version,
    about = "Hybrid quantum-classical workflows on a simulated cluster"
)]
struct Cli {
    /// Cluster topology document; the bundled sample cluster when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    cluster: Option<PathBuf>,
    /// Queue configuration document; the bundled sample queues when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    queues: Option<PathBuf>,
    /// Secrets document; the bundled sample secrets when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    secrets: Option<PathBuf>,
    /// Where run records are kept.
    #[arg(long, global = true, env = "HQFLOW_STATE_DIR", default_value = ".hqflow")]
    state_dir: PathBuf,
    /// Global seed for every sampled result.
    #[arg(long, global = true, env = "HQFLOW_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Submit a workflow and run it to completion.
    Apply {
        #[arg(short = 'f', long = "filename", value_name = "FILE")]
        file: PathBuf,
        /// Extra attempts granted to a failing task before the run fails.
        #[arg(long, default_value_t = 0)]
        retries: u32,
    },
    /// Task census and per-template progress of a recorded run.
    Status {
        run_id: String,
        /// Print the full run report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Pending and admitted workloads per local queue.
    Queues {
        /// Run to inspect; the latest run when omitted.
        #[arg(long)]
        run: Option<String>,
        /// Replay only the first N events of the run.
        #[arg(long, value_name = "N")]
        at_event: Option<usize>,
    },
    /// Print a run's metrics in text exposition format, or serve them.
    Metrics {
        /// Run to export; the latest run when omitted.
        #[arg(long)]
        run: Option<String>,
        /// Serve GET /metrics on this address instead of printing.
        #[arg(long, value_name = "ADDR", num_args = 0..=1, default_missing_value = "127.0.0.1:9464")]
        serve: Option<String>,
        /// Stop after answering one request.
        #[arg(long, requires = "serve")]
        once: bool,
    },
    /// Parse and validate a workflow without running it.
    Validate {
        #[arg(short = 'f', long = "filename", value_name = "FILE")]
        file: PathBuf,
    },
}

enum Failure {
    /// Bad invocation, unreadable or invalid input.
    Usage(String),
    /// The run itself failed or could not finish.
    Run(String),
}

type CmdResult = Result<(), Failure>;

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

/// Runs the CLI on `args` (program name first) and returns the exit code:
/// 0 on success, 1 when a run fails, 2 for usage and validation errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    let result = match &cli.command {
        Command::Apply { file, retries } => apply(&cli, file, *retries, out),
        Command::Status { run_id, json } => status(&cli, run_id, *json, out),
        Command::Queues { run, at_event } => queues(&cli, run.as_deref(), *at_event, out),
        Command::Metrics { run, serve, once } => metrics(&cli, run.as_deref(), serve.as_deref(), *once, out, err),
        Command::Validate { file } => validate(file, out),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
        Err(Failure::Run(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_cluster(cli: &Cli) -> Result<Cluster, Failure> {
    match &cli.cluster {
        Some(p) => parse_cluster(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => Ok(assets::sample_cluster()),
    }
}

fn load_queues(cli: &Cli) -> Result<QueueConfig, Failure> {
    match &cli.queues {
        Some(p) => parse_queues(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => Ok(assets::sample_queues()),
    }
}

fn load_secrets(cli: &Cli) -> Result<SecretStore, Failure> {
    match &cli.secrets {
        Some(p) => SecretStore::parse(&read(p)?).map_err(|e| usage(format!("{}:\n{e}", p.display()))),
        None => Ok(assets::sample_secrets()),
    }
}

fn load_workflow(path: &Path) -> Result<WorkflowSpec, Failure> {
    parse_workflow(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn runs_dir(cli: &Cli) -> PathBuf {
    cli.state_dir.join(RUNS_DIR)
}

/// Recorded run ids, oldest first.
fn recorded_runs(cli: &Cli) -> Vec<String> {
    let Ok(entries) = fs::read_dir(runs_dir(cli)) else {
        return Vec::new();
    };
    let mut ids: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| run_number(n).is_some())
        .collect();
    ids.sort_by_key(|n| run_number(n));
    ids
}

fn run_number(id: &str) -> Option<u64> {
    id.strip_prefix("run-")?.parse().ok()
}

fn pick_run(cli: &Cli, run: Option<&str>) -> Result<Option<String>, Failure> {
    match run {
        Some(id) if runs_dir(cli).join(id).is_dir() => Ok(Some(id.to_string())),
        Some(id) => Err(usage(format!("no recorded run {id} in {}", cli.state_dir.display()))),
        None => Ok(recorded_runs(cli).pop()),
    }
}

fn apply(cli: &Cli, file: &Path, retries: u32, out: &mut dyn Write) -> CmdResult {
    let spec = load_workflow(file)?;
    let scheduler = Scheduler::new(load_queues(cli)?).map_err(usage)?;
    let mut engine = Engine::new(
        load_cluster(cli)?,
        scheduler,
        PayloadRegistry::with_defaults(),
        load_secrets(cli)?,
        EngineConfig {
            seed: cli.seed,
            retry_budget: retries,
        },
    );
    let previous = recorded_runs(cli).last().and_then(|id| run_number(id)).unwrap_or(0);
    engine.skip_run_ids(previous);
    let run = engine.submit(spec).map_err(|e| match e {
        EngineError::Invalid(d) => usage(format!("{}: invalid workflow:\n{d}", file.display())),
        other => usage(other),
    })?;

    let mut recorder = MetricsRecorder::new();
    let stuck = loop {
        match engine.step() {
            Ok(events) if events.is_empty() => break None,
            Ok(events) => events.iter().for_each(|e| recorder.record(e)),
            Err(e) => break Some(e),
        }
    };

    let dir = runs_dir(cli).join(&run);
    let record = engine.record(&run).expect("submitted run");
    write_run_dir(&dir, &record).map_err(|e| Failure::Run(format!("{}: {e}", dir.display())))?;
    fs::write(dir.join(METRICS_FILE), recorder.export())
        .map_err(|e| Failure::Run(format!("{}: {e}", dir.display())))?;

    let _ = write!(out, "{}", summary(&run, &record.report));
    let _ = writeln!(out, "record: {}", dir.display());
    if let Some(e) = stuck {
        return Err(Failure::Run(e.to_string()));
    }
    match record.report.state {
        RunState::Succeeded => Ok(()),
        state => Err(Failure::Run(format!("run {run} {}", state.as_str()))),
    }
}

/// Human-readable run summary shared by `apply` and `status`.
pub fn summary(run: &str, report: &RunReport) -> String {
    let mut s = String::new();
    let c = &report.census;
    let _ = writeln!(s, "run {run} ({}) {}", report.workflow, report.state.as_str());
    let _ = writeln!(
        s,
        "tasks: {}  pending={} active={} succeeded={} failed={}",
        report.task_count, c.pending, c.active, c.succeeded, c.failed
    );
    let _ = writeln!(s, "makespan: {:.6} s (virtual)", report.makespan_ns as f64 / 1e9);
    for t in report.tasks.iter().filter(|t| t.state == Some(TaskState::Failed)) {
        let _ = writeln!(s, "failed: {}: {}", t.id, t.error.as_deref().unwrap_or("unknown error"));
    }
    for (task, out) in &report.outputs {
        if let (Some(value), Some(oracle)) = (out.get("value"), out.get("oracle")) {
            let _ = write!(s, "{task}: value={value} oracle={oracle}");
            for key in ["delta", "uncertainty", "mode"] {
                if let Some(v) = out.get(key) {
                    let _ = write!(s, " {key}={v}");
                }
            }
            let _ = writeln!(s);
        }
    }
    s
}

fn load_record(cli: &Cli, id: &str) -> Result<hqflow_core::engine::RunRecord, Failure> {
    let dir = runs_dir(cli).join(id);
    if !dir.is_dir() {
        return Err(usage(format!("no recorded run {id} in {}", cli.state_dir.display())));
    }
    load_run_dir(&dir).map_err(|e| Failure::Run(format!("{}: {e}", dir.display())))
}

fn status(cli: &Cli, id: &str, json: bool, out: &mut dyn Write) -> CmdResult {
    let record = load_record(cli, id)?;
    if json {
        let _ = write!(out, "{}", record.report.to_json());
        return Ok(());
    }
    let replay = Replay::of_run(id, &record.events).map_err(|e| Failure::Run(e.to_string()))?;
    let _ = write!(out, "{}", summary(id, &record.report));
    let _ = writeln!(
        out,
        "{:<32} {:>6} {:>9} {:>6} {:>6} {:>7}",
        "TEMPLATE", "TOTAL", "SUCCEEDED", "ACTIVE", "FAILED", "PENDING"
    );
    for p in replay.progress_by_template() {
        let pending = p.total - p.succeeded - p.active - p.failed;
        let _ = writeln!(
            out,
            "{:<32} {:>6} {:>9} {:>6} {:>6} {:>7}",
            p.template, p.total, p.succeeded, p.active, p.failed, pending
        );
    }
    Ok(())
}

fn queues(cli: &Cli, run: Option<&str>, at_event: Option<usize>, out: &mut dyn Write) -> CmdResult {
    let config = load_queues(cli)?;
    let replay = match pick_run(cli, run)? {
        Some(id) => {
            let record = load_record(cli, &id)?;
            let n = at_event.unwrap_or(record.events.len()).min(record.events.len());
            if n == 0 {
                None
            } else {
                Some(Replay::of_run(&id, &record.events[..n]).map_err(|e| Failure::Run(e.to_string()))?)
            }
        }
        None if at_event.is_some() => return Err(usage("--at-event needs a recorded run")),
        None => None,
    };
    let _ = writeln!(
        out,
        "{:<24} {:<24} {:>8} {:>8}",
        "QUEUE", "CLUSTER-QUEUE", "PENDING", "ADMITTED"
    );
    for q in &config.local_queues {
        let c = replay
            .as_ref()
            .and_then(|r| r.queues.get(&q.name).copied())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{:<24} {:<24} {:>8} {:>8}",
            q.name, q.cluster_queue, c.pending, c.admitted
        );
    }
    Ok(())
}

fn metrics(
    cli: &Cli,
    run: Option<&str>,
    serve: Option<&str>,
    once: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let text = match pick_run(cli, run)? {
        Some(id) => {
            let path = runs_dir(cli).join(&id).join(METRICS_FILE);
            fs::read_to_string(&path).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?
        }
        // Nothing recorded yet: the families of an idle recorder.
        None => MetricsRecorder::new().export(),
    };
    match serve {
        None => {
            let _ = write!(out, "{text}");
            Ok(())
        }
        Some(addr) => serve::serve(addr, &text, once, err).map_err(|e| Failure::Run(format!("{addr}: {e}"))),
    }
}

fn validate(file: &Path, out: &mut dyn Write) -> CmdResult {
    let spec = load_workflow(file)?;
    let graph = expand_dag(&spec).map_err(|e| usage(format!("{}: {e}", file.display())))?;
    let _ = writeln!(
        out,
        "{}: valid workflow {} ({} templates, {} tasks, {} dependencies)",
        file.display(),
        spec.name,
        spec.templates.len(),
        graph.len(),
        graph.edge_count()
    );
    Ok(())
}
