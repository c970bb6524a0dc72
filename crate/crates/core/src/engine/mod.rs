//! Discrete-event execution of workflow runs over the simulated cluster.
//!
//! One `step` processes everything due at the current virtual instant:
//! completions, then dispatch of newly ready tasks, then direct binds and
//! queue admission, then task starts. When nothing happens the clock jumps
//! to the next scheduled completion.

mod events;
mod record;
mod report;

pub use events::{parse_event_log, Event, EventKind, NodeDecl, RunState, TaskDecl, TaskState};
pub use record::{load_run_dir, write_run_dir, RunRecord};
pub use report::{CensusPoint, Replay, ReplayError, RunReport, TaskRecord, TemplateProgress};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::artifacts::{resolve_mounts, sha256_hex, ArtifactStore, SecretStore, TaskFs};
use crate::cluster::{Binding, Cluster, VirtualClock};
use crate::diag::Diagnostics;
use crate::payload::{PayloadError, PayloadOutput, PayloadRegistry, TaskContext};
use crate::scheduler::{Admission, Scheduler, WorkloadRequest};
use crate::workflow::{expand_dag, render_workflow, validate_spec, ExpansionError, TaskGraph, WorkflowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EngineConfig {
    /// Base seed handed to every payload.
    pub seed: u64,
    /// Extra attempts after a payload failure. Retries stay in Active.
    pub retry_budget: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("invalid workflow:\n{0}")]
    Invalid(Diagnostics),
    #[error(transparent)]
    Expansion(#[from] ExpansionError),
    #[error("task {task}: queue {queue} is not defined")]
    UnknownQueue { task: String, queue: String },
    #[error("task {task}: {reason}")]
    InvalidRequest { task: String, reason: String },
    #[error("unknown run {0}")]
    UnknownRun(String),
    #[error("deadlock: no event possible while {} task(s) are not terminal (first: {})", .tasks.len(), .tasks.first().map(String::as_str).unwrap_or("-"))]
    Deadlock { tasks: Vec<String> },
}

/// Live state of one task in a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskInstance {
    pub id: String,
    pub template: String,
    pub state: TaskState,
    pub queue: Option<String>,
    pub flavor: Option<String>,
    pub node: Option<String>,
    pub binding: Option<u64>,
    pub enqueued_ns: Option<u64>,
    pub started_ns: Option<u64>,
    pub finished_ns: Option<u64>,
    pub attempt: u32,
    pub error: Option<String>,
}

struct InFlight {
    outcome: Result<PayloadOutput, String>,
    writes: BTreeMap<(String, String), Vec<u8>>,
    bytes_read: u64,
}

impl InFlight {
    fn failed(error: impl ToString) -> Self {
        InFlight {
            outcome: Err(error.to_string()),
            writes: BTreeMap::new(),
            bytes_read: 0,
        }
    }
}

struct Run {
    spec: WorkflowSpec,
    spec_yaml: String,
    spec_sha256: String,
    graph: TaskGraph,
    succs: Vec<Vec<usize>>,
    tasks: Vec<TaskInstance>,
    waiting: Vec<usize>,
    ready: VecDeque<usize>,
    store: ArtifactStore,
    state: RunState,
    /// Set on the first task failure; nothing new is dispatched after it.
    failing: bool,
    inflight: BTreeMap<usize, InFlight>,
}

impl Run {
    fn active(&self) -> usize {
        self.tasks.iter().filter(|t| t.state == TaskState::Active).count()
    }
}

fn workload_key(run: &str, task: &str) -> String {
    format!("{run}:{task}")
}

pub struct Engine {
    cluster: Cluster,
    scheduler: Scheduler,
    payloads: PayloadRegistry,
    secrets: SecretStore,
    clock: VirtualClock,
    config: EngineConfig,
    runs: BTreeMap<String, Run>,
    log: Vec<Event>,
    delivered: usize,
    /// (finish time, start order, run, task index)
    finishes: BTreeSet<(u64, u64, String, usize)>,
    next_start: u64,
    /// Unlabeled tasks waiting for a node, in dispatch order.
    direct: Vec<(String, usize)>,
    run_counter: u64,
}

impl Engine {
    pub fn new(
        cluster: Cluster,
        scheduler: Scheduler,
        payloads: PayloadRegistry,
        secrets: SecretStore,
        config: EngineConfig,
    ) -> Self {
        Engine {
            cluster,
            scheduler,
            payloads,
            secrets,
            clock: VirtualClock::new(),
            config,
            runs: BTreeMap::new(),
            log: Vec::new(),
            delivered: 0,
            finishes: BTreeSet::new(),
            next_start: 0,
            direct: Vec::new(),
            run_counter: 0,
        }
    }

    /// Continues run numbering after `n` earlier runs, so ids stay unique
    /// across engines that share a state directory.
    pub fn skip_run_ids(&mut self, n: u64) {
        self.run_counter = self.run_counter.max(n);
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn config(&self) -> EngineConfig {
        self.config
    }

    /// Every event emitted so far, in order.
    pub fn events(&self) -> &[Event] {
        &self.log
    }

    pub fn run_ids(&self) -> impl Iterator<Item = &str> {
        self.runs.keys().map(String::as_str)
    }

    pub fn run_state(&self, run: &str) -> Option<RunState> {
        self.runs.get(run).map(|r| r.state)
    }

    pub fn tasks(&self, run: &str) -> Option<&[TaskInstance]> {
        self.runs.get(run).map(|r| r.tasks.as_slice())
    }

    pub fn graph(&self, run: &str) -> Option<&TaskGraph> {
        self.runs.get(run).map(|r| &r.graph)
    }

    pub fn artifacts(&self, run: &str) -> Option<&ArtifactStore> {
        self.runs.get(run).map(|r| &r.store)
    }

    pub fn census(&self, run: &str) -> Option<BTreeMap<TaskState, usize>> {
        let r = self.runs.get(run)?;
        let mut c: BTreeMap<TaskState, usize> = TaskState::ALL.iter().map(|s| (*s, 0)).collect();
        for t in &r.tasks {
            *c.get_mut(&t.state).expect("all states present") += 1;
        }
        Some(c)
    }

    /// Validates, expands and registers a run. Root tasks are dispatched by
    /// the next `step`.
    pub fn submit(&mut self, spec: WorkflowSpec) -> Result<String, EngineError> {
        validate_spec(&spec).map_err(EngineError::Invalid)?;
        let graph = expand_dag(&spec)?;
        for node in &graph.nodes {
            if let Some(queue) = &node.queue_label {
                if self.scheduler.resolve_queue(spec.namespace.as_deref(), queue).is_none() {
                    return Err(EngineError::UnknownQueue {
                        task: node.id.clone(),
                        queue: queue.clone(),
                    });
                }
            }
            self.cluster
                .effective_request(&node.resources)
                .map_err(|e| EngineError::InvalidRequest {
                    task: node.id.clone(),
                    reason: e.to_string(),
                })?;
        }
        self.run_counter += 1;
        let id = format!("run-{:04}", self.run_counter);
        let spec_yaml = render_workflow(&spec);
        let spec_sha256 = sha256_hex(spec_yaml.as_bytes());
        let tasks: Vec<TaskInstance> = graph
            .nodes
            .iter()
            .map(|n| TaskInstance {
                id: n.id.clone(),
                template: n.template.clone(),
                state: TaskState::Pending,
                queue: n.queue_label.clone(),
                flavor: None,
                node: None,
                binding: None,
                enqueued_ns: None,
                started_ns: None,
                finished_ns: None,
                attempt: 0,
                error: None,
            })
            .collect();
        let decls = graph
            .nodes
            .iter()
            .zip(&graph.preds)
            .map(|(n, p)| TaskDecl {
                id: n.id.clone(),
                template: n.template.clone(),
                queue: n.queue_label.clone(),
                preds: p.iter().map(|&i| graph.nodes[i].id.clone()).collect(),
            })
            .collect();
        let nodes = self
            .cluster
            .nodes()
            .iter()
            .map(|n| NodeDecl {
                name: n.name.clone(),
                backend: n.resource_type().map(str::to_string),
                capacity: n.capacity.clone(),
                allocatable: n.allocatable.clone(),
            })
            .collect();
        let queues = self.scheduler.local_queues().iter().map(|q| q.name.clone()).collect();
        self.emit(
            &id,
            EventKind::RunSubmitted {
                workflow: spec.name.clone(),
                namespace: spec.namespace.clone(),
                spec_sha256: spec_sha256.clone(),
                seed: self.config.seed,
                tasks: decls,
                nodes,
                queues,
            },
        );
        let waiting: Vec<usize> = graph.preds.iter().map(Vec::len).collect();
        let ready = (0..graph.len()).filter(|&i| waiting[i] == 0).collect();
        let succs = graph.successors();
        self.runs.insert(
            id.clone(),
            Run {
                spec,
                spec_yaml,
                spec_sha256,
                graph,
                succs,
                tasks,
                waiting,
                ready,
                store: ArtifactStore::new(),
                state: RunState::Running,
                failing: false,
                inflight: BTreeMap::new(),
            },
        );
        Ok(id)
    }

    fn emit(&mut self, run: &str, kind: EventKind) {
        self.log.push(Event {
            seq: self.log.len() as u64,
            t_ns: self.clock.now(),
            run: run.to_string(),
            kind,
        });
    }

    fn any_running(&self) -> bool {
        self.runs.values().any(|r| r.state == RunState::Running)
    }

    /// Advances the simulation by one event cycle and returns the events
    /// emitted since the previous call. Empty once every run is terminal.
    pub fn step(&mut self) -> Result<Vec<Event>, EngineError> {
        loop {
            let before = self.log.len();
            self.cycle();
            if self.log.len() > before || self.delivered < self.log.len() {
                let out = self.log[self.delivered..].to_vec();
                self.delivered = self.log.len();
                return Ok(out);
            }
            if let Some(&(t, ..)) = self.finishes.first() {
                self.clock.advance_to(t);
                continue;
            }
            if self.any_running() {
                let tasks = self
                    .runs
                    .iter()
                    .flat_map(|(id, r)| {
                        r.tasks
                            .iter()
                            .filter(|t| !t.state.is_terminal())
                            .map(move |t| workload_key(id, &t.id))
                    })
                    .collect();
                return Err(EngineError::Deadlock { tasks });
            }
            return Ok(Vec::new());
        }
    }

    /// Steps until `run` is terminal and returns its report.
    pub fn run_to_completion(&mut self, run: &str) -> Result<RunReport, EngineError> {
        if !self.runs.contains_key(run) {
            return Err(EngineError::UnknownRun(run.to_string()));
        }
        while self.runs[run].state == RunState::Running {
            self.step()?;
        }
        Ok(self.report(run).expect("run exists"))
    }

    pub fn report(&self, run: &str) -> Option<RunReport> {
        self.runs.get(run)?;
        Some(RunReport::from_events(run, &self.log).expect("the engine only emits legal transitions"))
    }

    /// Everything needed to persist a run directory.
    pub fn record(&self, run: &str) -> Option<RunRecord> {
        let r = self.runs.get(run)?;
        Some(RunRecord {
            spec_yaml: r.spec_yaml.clone(),
            spec_sha256: r.spec_sha256.clone(),
            events: self.log.iter().filter(|e| e.run == run).cloned().collect(),
            artifacts: r.store.index(),
            report: self.report(run)?,
        })
    }

    /// Cluster conservation, queue quotas, and per-run census.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.cluster.check_conservation()?;
        self.scheduler.check_quota()?;
        for (id, r) in &self.runs {
            let total: usize = self.census(id).expect("present").values().sum();
            if total != r.tasks.len() {
                return Err(format!("{id}: census {total} != {} tasks", r.tasks.len()));
            }
            for (i, t) in r.tasks.iter().enumerate() {
                if t.state != TaskState::Pending
                    && r.graph.preds[i]
                        .iter()
                        .any(|&p| r.tasks[p].state != TaskState::Succeeded)
                {
                    return Err(format!("{id}: {} left Pending before its predecessors", t.id));
                }
            }
        }
        Ok(())
    }

    fn cycle(&mut self) {
        let now = self.clock.now();
        while let Some(first) = self.finishes.first() {
            if first.0 > now {
                break;
            }
            let (_, _, run, idx) = self.finishes.pop_first().expect("checked");
            // Start released admissions at once: a later failure in this
            // cycle must only ever see Pending workloads as cancellable.
            for a in self.complete(&run, idx) {
                self.start_admitted(a);
            }
        }

        let run_ids: Vec<String> = self.runs.keys().cloned().collect();
        for id in &run_ids {
            while let Some(idx) = self.runs.get_mut(id).expect("present").ready.pop_front() {
                self.dispatch(id, idx);
            }
        }

        let mut still_waiting = Vec::new();
        for (run, idx) in std::mem::take(&mut self.direct) {
            let task = &self.runs[&run].graph.nodes[idx];
            let key = workload_key(&run, &task.id);
            let node = self
                .cluster
                .find_node(&task.node_selector, &task.resources)
                .map(|n| n.name.clone());
            match node {
                Some(node) => {
                    let request = task.resources.clone();
                    let binding = self
                        .cluster
                        .bind(&node, &key, &request)
                        .expect("find_node checked the bind");
                    self.start(&run, idx, binding);
                }
                None => still_waiting.push((run, idx)),
            }
        }
        self.direct = still_waiting;

        for a in self.scheduler.admit_cycle(&mut self.cluster) {
            self.start_admitted(a);
        }

        for id in &run_ids {
            let r = &self.runs[id];
            if r.state != RunState::Running {
                continue;
            }
            let next = if r.failing {
                (r.active() == 0).then_some(RunState::Failed)
            } else {
                r.tasks
                    .iter()
                    .all(|t| t.state == TaskState::Succeeded)
                    .then_some(RunState::Succeeded)
            };
            if let Some(state) = next {
                self.runs.get_mut(id).expect("present").state = state;
                self.emit(id, EventKind::RunFinished { state });
            }
        }
    }

    fn dispatch(&mut self, run_id: &str, idx: usize) {
        let now = self.clock.now();
        let r = self.runs.get_mut(run_id).expect("present");
        let task = &r.graph.nodes[idx];
        r.tasks[idx].enqueued_ns = Some(now);
        let queue = task.queue_label.clone();
        let id = task.id.clone();
        match &queue {
            Some(q) => {
                let req = WorkloadRequest {
                    task_id: workload_key(run_id, &task.id),
                    namespace: r.spec.namespace.clone(),
                    queue: q.clone(),
                    request: task.resources.clone(),
                    node_selector: task.node_selector.clone(),
                    priority: task.priority,
                };
                // Queue names and requests were checked at submit.
                self.scheduler
                    .enqueue(req, &self.cluster)
                    .expect("queue and request validated at submit");
            }
            None => self.direct.push((run_id.to_string(), idx)),
        }
        self.emit(run_id, EventKind::TaskEnqueued { task: id, queue });
    }

    fn start_admitted(&mut self, a: Admission) {
        let (run, task) = a.task_id.split_once(':').expect("workload keys are run:task");
        let (run, task) = (run.to_string(), task.to_string());
        let idx = self.runs[&run].graph.index_of(&task).expect("admitted task exists");
        self.runs.get_mut(&run).expect("present").tasks[idx].flavor = Some(a.flavor.clone());
        self.emit(
            &run,
            EventKind::TaskAdmitted {
                task,
                queue: a.local_queue,
                flavor: a.flavor,
            },
        );
        self.start(&run, idx, a.binding);
    }

    fn execute(&self, run_id: &str, idx: usize, node: &str) -> InFlight {
        let r = &self.runs[run_id];
        let task = &r.graph.nodes[idx];
        let Some(payload) = self.payloads.get(&task.image) else {
            return InFlight::failed(PayloadError::ImageNotFound(task.image.clone()));
        };
        let fs =
            match resolve_mounts(&r.spec, &task.volume_mounts).and_then(|m| TaskFs::new(&m, &r.store, &self.secrets)) {
                Ok(fs) => fs,
                Err(e) => return InFlight::failed(e),
            };
        let mut ctx = TaskContext {
            task,
            node,
            seed: self.config.seed,
            fs,
        };
        let outcome = match payload.run(&mut ctx) {
            Ok(out) if !(out.cost_seconds.is_finite() && out.cost_seconds >= 0.0) => {
                Err(format!("payload reported cost {}", out.cost_seconds))
            }
            other => other.map_err(|e| e.to_string()),
        };
        InFlight {
            outcome,
            bytes_read: ctx.fs.bytes_read(),
            writes: ctx.fs.into_writes(),
        }
    }

    /// Runs the payload now and schedules the finish; returns (duration, delay).
    fn launch(&mut self, run_id: &str, idx: usize) -> (u64, u64) {
        let node_name = self.runs[run_id].tasks[idx].node.clone().expect("bound before launch");
        let flight = self.execute(run_id, idx, &node_name);
        let timing = self.cluster.node(&node_name).expect("bound node exists").timing;
        let (duration, delay) = match &flight.outcome {
            Ok(out) if out.cost_seconds > 0.0 => (timing.duration_ns(out.cost_seconds), timing.queue_delay_ns),
            _ => (0, 0),
        };
        let finish = self.clock.now() + duration;
        self.finishes.insert((finish, self.next_start, run_id.to_string(), idx));
        self.next_start += 1;
        self.runs.get_mut(run_id).expect("present").inflight.insert(idx, flight);
        (duration, delay)
    }

    fn start(&mut self, run_id: &str, idx: usize, binding: Binding) {
        let now = self.clock.now();
        let backend = self
            .cluster
            .node(&binding.node)
            .and_then(|n| n.resource_type())
            .map(str::to_string);
        {
            let t = &mut self.runs.get_mut(run_id).expect("present").tasks[idx];
            t.state = TaskState::Active;
            t.started_ns = Some(now);
            t.node = Some(binding.node.clone());
            t.binding = Some(binding.id);
        }
        let (duration_ns, queue_delay_ns) = self.launch(run_id, idx);
        let task = self.runs[run_id].tasks[idx].id.clone();
        self.emit(
            run_id,
            EventKind::TaskStarted {
                task,
                node: binding.node,
                backend,
                resources: binding.resources,
                devices: binding.devices,
                attempt: 0,
                duration_ns,
                queue_delay_ns,
            },
        );
    }

    /// Finishes a task whose duration elapsed. Returns admissions unlocked
    /// by releasing its quota.
    fn complete(&mut self, run_id: &str, idx: usize) -> Vec<Admission> {
        let now = self.clock.now();
        let r = self.runs.get_mut(run_id).expect("present");
        let flight = r.inflight.remove(&idx).expect("active tasks are in flight");
        let task_id = r.tasks[idx].id.clone();

        if let Err(error) = &flight.outcome {
            if r.tasks[idx].attempt < self.config.retry_budget {
                r.tasks[idx].attempt += 1;
                let attempt = r.tasks[idx].attempt;
                let error = error.clone();
                let (duration_ns, _) = self.launch(run_id, idx);
                self.emit(
                    run_id,
                    EventKind::TaskRetried {
                        task: task_id,
                        attempt,
                        error,
                        duration_ns,
                    },
                );
                return Vec::new();
            }
        }

        r.tasks[idx].finished_ns = Some(now);
        let key = workload_key(run_id, &task_id);
        match flight.outcome {
            Ok(out) => {
                r.tasks[idx].state = TaskState::Succeeded;
                let writes = r.store.commit(&task_id, flight.writes);
                if !r.failing {
                    for s in r.succs[idx].clone() {
                        r.waiting[s] -= 1;
                        if r.waiting[s] == 0 {
                            r.ready.push_back(s);
                        }
                    }
                }
                self.emit(
                    run_id,
                    EventKind::TaskSucceeded {
                        task: task_id.clone(),
                        writes,
                        bytes_read: flight.bytes_read,
                        summary: out.summary,
                    },
                );
            }
            Err(error) => {
                r.tasks[idx].state = TaskState::Failed;
                r.tasks[idx].error = Some(error.clone());
                self.emit(
                    run_id,
                    EventKind::TaskFailed {
                        task: task_id.clone(),
                        error,
                    },
                );
                // Evict before releasing so the freed quota cannot admit
                // more of this run.
                self.fail_run(run_id);
            }
        }
        let r = &self.runs[run_id];
        if r.tasks[idx].queue.is_some() {
            self.scheduler
                .complete(&key, &mut self.cluster)
                .expect("active labeled tasks are admitted")
        } else {
            let binding = r.tasks[idx].binding.expect("active tasks are bound");
            self.cluster.release(binding).expect("bindings are released once");
            Vec::new()
        }
    }

    fn fail_run(&mut self, run_id: &str) {
        let r = self.runs.get_mut(run_id).expect("present");
        if r.failing {
            return;
        }
        r.failing = true;
        r.ready.clear();
        let queued: Vec<(String, String)> = r
            .tasks
            .iter()
            .filter(|t| t.state == TaskState::Pending && t.enqueued_ns.is_some())
            .filter_map(|t| t.queue.clone().map(|q| (t.id.clone(), q)))
            .collect();
        self.direct.retain(|(run, _)| run != run_id);
        for (task, queue) in queued {
            self.scheduler
                .cancel(&workload_key(run_id, &task))
                .expect("pending labeled tasks are queued");
            self.emit(run_id, EventKind::WorkloadEvicted { task, queue });
        }
    }
}
