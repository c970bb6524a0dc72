//! Folds the engine's event stream into the metric families.

use std::collections::BTreeMap;

use super::{labels, MetricKind, Registry};
use crate::cluster::NS_PER_SECOND;
use crate::engine::{Event, EventKind, RunState, TaskState};
use crate::quantity::ResourceVector;

pub const TASKS: &str = "hqflow_tasks";
pub const TRANSITIONS: &str = "hqflow_task_transitions_total";
pub const NODE_ALLOCATABLE: &str = "hqflow_node_allocatable";
pub const NODE_UTILIZATION: &str = "hqflow_node_utilization_ratio";
pub const QUEUE_PENDING: &str = "hqflow_queue_pending";
pub const QUEUE_ADMITTED: &str = "hqflow_queue_admitted";
pub const QPU_LATENCY: &str = "hqflow_qpu_latency_seconds";
pub const WORKFLOWS_COMPLETED: &str = "hqflow_workflow_completed_total";
pub const WORKFLOWS_FAILED: &str = "hqflow_workflow_failed_total";
pub const THROUGHPUT: &str = "hqflow_workflow_throughput";
pub const BYTES_WRITTEN: &str = "hqflow_artifact_bytes_written_total";
pub const BYTES_READ: &str = "hqflow_artifact_bytes_read_total";
pub const ARTIFACTS_COMMITTED: &str = "hqflow_artifacts_committed_total";
pub const VIRTUAL_TIME: &str = "hqflow_virtual_time_seconds";
pub const EVENTS: &str = "hqflow_events_total";

pub const QPU_LATENCY_BUCKETS: [f64; 8] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0, 60.0];

struct Running {
    node: String,
    backend: Option<String>,
    resources: ResourceVector,
    queue_delay_ns: u64,
}

pub struct MetricsRecorder {
    registry: Registry,
    states: BTreeMap<(String, String), TaskState>,
    /// Queue of each admitted task still holding quota.
    admitted: BTreeMap<(String, String), String>,
    running: BTreeMap<(String, String), Running>,
    capacity: BTreeMap<String, ResourceVector>,
    allocatable: BTreeMap<String, ResourceVector>,
    completed: u64,
    first_submit_ns: Option<u64>,
    now_ns: u64,
}

impl Default for MetricsRecorder {
    fn default() -> Self {
        Self::new()
    }
}

impl MetricsRecorder {
    pub fn new() -> Self {
        let mut r = Registry::new();
        let gauges = [
            (TASKS, "Tasks by lifecycle state."),
            (
                NODE_ALLOCATABLE,
                "Unallocated amount per node and resource (millicores, bytes or devices).",
            ),
            (NODE_UTILIZATION, "Allocated fraction of node capacity per resource."),
            (QUEUE_PENDING, "Workloads waiting for admission per local queue."),
            (QUEUE_ADMITTED, "Admitted workloads holding quota per local queue."),
            (
                THROUGHPUT,
                "Completed workflows per virtual second since the first submission.",
            ),
            (VIRTUAL_TIME, "Current virtual time."),
        ];
        for (name, help) in gauges {
            r.describe(name, help, MetricKind::Gauge)
                .expect("static names are valid");
        }
        let counters = [
            (TRANSITIONS, "Task state transitions."),
            (WORKFLOWS_COMPLETED, "Workflow runs that finished successfully."),
            (WORKFLOWS_FAILED, "Workflow runs that failed."),
            (BYTES_WRITTEN, "Bytes committed to the artifact store."),
            (BYTES_READ, "Artifact bytes read by tasks."),
            (ARTIFACTS_COMMITTED, "Files committed to the artifact store."),
            (EVENTS, "Engine events recorded, by type."),
        ];
        for (name, help) in counters {
            r.describe(name, help, MetricKind::Counter)
                .expect("static names are valid");
        }
        r.describe_histogram(
            QPU_LATENCY,
            "Queueing delay of tasks on QPU nodes, observed at completion.",
            &QPU_LATENCY_BUCKETS,
        )
        .expect("static names are valid");
        for s in TaskState::ALL {
            r.gauge_set(TASKS, &labels(&[("state", s.as_str())]), 0.0)
                .expect("described");
        }
        for name in [WORKFLOWS_COMPLETED, WORKFLOWS_FAILED] {
            r.counter_add(name, &[], 0.0).expect("described");
        }
        r.gauge_set(THROUGHPUT, &[], 0.0).expect("described");
        r.gauge_set(VIRTUAL_TIME, &[], 0.0).expect("described");
        MetricsRecorder {
            registry: r,
            states: BTreeMap::new(),
            admitted: BTreeMap::new(),
            running: BTreeMap::new(),
            capacity: BTreeMap::new(),
            allocatable: BTreeMap::new(),
            completed: 0,
            first_submit_ns: None,
            now_ns: 0,
        }
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    /// Exposition text stamped with the current virtual time in ms.
    pub fn export(&self) -> String {
        self.registry.export_text(Some((self.now_ns / 1_000_000) as i64))
    }

    fn transition(&mut self, key: &(String, String), to: TaskState) {
        let from = self.states.insert(key.clone(), to).unwrap_or(TaskState::Pending);
        let r = &mut self.registry;
        r.gauge_add(TASKS, &labels(&[("state", from.as_str())]), -1.0)
            .expect("described");
        r.gauge_add(TASKS, &labels(&[("state", to.as_str())]), 1.0)
            .expect("described");
        r.counter_add(
            TRANSITIONS,
            &labels(&[("from", from.as_str()), ("to", to.as_str())]),
            1.0,
        )
        .expect("described");
    }

    fn publish_node(&mut self, node: &str) {
        let (Some(cap), Some(free)) = (self.capacity.get(node), self.allocatable.get(node)) else {
            return;
        };
        for (res, c) in cap.iter() {
            let f = free.get(res);
            let l = labels(&[("node", node), ("resource", res)]);
            self.registry
                .gauge_set(NODE_ALLOCATABLE, &l, f as f64)
                .expect("described");
            let used = if c > 0 { (c - f) as f64 / c as f64 } else { 0.0 };
            self.registry.gauge_set(NODE_UTILIZATION, &l, used).expect("described");
        }
    }

    fn queue_add(&mut self, family: &str, queue: &str, delta: f64) {
        self.registry
            .gauge_add(family, &labels(&[("queue", queue)]), delta)
            .expect("described");
    }

    fn finish(&mut self, key: &(String, String), to: TaskState) {
        self.transition(key, to);
        if let Some(q) = self.admitted.remove(key) {
            self.queue_add(QUEUE_ADMITTED, &q, -1.0);
        }
        if let Some(run) = self.running.remove(key) {
            if let Some(free) = self.allocatable.get_mut(&run.node) {
                free.add(&run.resources);
            }
            self.publish_node(&run.node);
            if to == TaskState::Succeeded && run.backend.as_deref() == Some("qpu") {
                let secs = run.queue_delay_ns as f64 / NS_PER_SECOND as f64;
                self.registry.observe(QPU_LATENCY, &[], secs).expect("described");
            }
        }
    }

    pub fn record(&mut self, e: &Event) {
        self.now_ns = self.now_ns.max(e.t_ns);
        self.registry
            .counter_add(EVENTS, &labels(&[("type", e.kind.type_name())]), 1.0)
            .expect("described");
        let key = |task: &str| (e.run.clone(), task.to_string());
        match &e.kind {
            EventKind::RunSubmitted {
                tasks, nodes, queues, ..
            } => {
                self.first_submit_ns.get_or_insert(e.t_ns);
                for t in tasks {
                    self.states.insert(key(&t.id), TaskState::Pending);
                }
                self.registry
                    .gauge_add(TASKS, &labels(&[("state", "pending")]), tasks.len() as f64)
                    .expect("described");
                for n in nodes {
                    if !self.capacity.contains_key(&n.name) {
                        self.capacity.insert(n.name.clone(), n.capacity.clone());
                        self.allocatable.insert(n.name.clone(), n.allocatable.clone());
                        self.publish_node(&n.name);
                    }
                }
                for q in queues {
                    self.queue_add(QUEUE_PENDING, q, 0.0);
                    self.queue_add(QUEUE_ADMITTED, q, 0.0);
                }
            }
            EventKind::TaskEnqueued { queue: Some(q), .. } => self.queue_add(QUEUE_PENDING, q, 1.0),
            EventKind::TaskEnqueued { queue: None, .. } => {}
            EventKind::TaskAdmitted { task, queue, .. } => {
                self.queue_add(QUEUE_PENDING, queue, -1.0);
                self.queue_add(QUEUE_ADMITTED, queue, 1.0);
                self.admitted.insert(key(task), queue.clone());
            }
            EventKind::TaskStarted {
                task,
                node,
                backend,
                resources,
                queue_delay_ns,
                ..
            } => {
                let k = key(task);
                self.transition(&k, TaskState::Active);
                if let Some(free) = self.allocatable.get_mut(node) {
                    free.sub(resources);
                }
                self.publish_node(node);
                self.running.insert(
                    k,
                    Running {
                        node: node.clone(),
                        backend: backend.clone(),
                        resources: resources.clone(),
                        queue_delay_ns: *queue_delay_ns,
                    },
                );
            }
            // Retries stay Active on the same binding.
            EventKind::TaskRetried { .. } => {}
            EventKind::TaskSucceeded {
                task,
                writes,
                bytes_read,
                ..
            } => {
                self.finish(&key(task), TaskState::Succeeded);
                let written: u64 = writes.iter().map(|w| w.bytes).sum();
                self.registry
                    .counter_add(BYTES_WRITTEN, &[], written as f64)
                    .expect("described");
                self.registry
                    .counter_add(BYTES_READ, &[], *bytes_read as f64)
                    .expect("described");
                self.registry
                    .counter_add(ARTIFACTS_COMMITTED, &[], writes.len() as f64)
                    .expect("described");
            }
            EventKind::TaskFailed { task, .. } => self.finish(&key(task), TaskState::Failed),
            EventKind::WorkloadEvicted { queue, .. } => self.queue_add(QUEUE_PENDING, queue, -1.0),
            EventKind::RunFinished { state } => match state {
                RunState::Succeeded => {
                    self.completed += 1;
                    self.registry
                        .counter_add(WORKFLOWS_COMPLETED, &[], 1.0)
                        .expect("described");
                }
                RunState::Failed => {
                    self.registry
                        .counter_add(WORKFLOWS_FAILED, &[], 1.0)
                        .expect("described");
                }
                RunState::Running => {}
            },
        }
        let elapsed = self.first_submit_ns.map(|t0| self.now_ns - t0).unwrap_or(0);
        let throughput = if elapsed > 0 {
            self.completed as f64 / (elapsed as f64 / NS_PER_SECOND as f64)
        } else {
            0.0
        };
        self.registry.gauge_set(THROUGHPUT, &[], throughput).expect("described");
        self.registry
            .gauge_set(VIRTUAL_TIME, &[], self.now_ns as f64 / NS_PER_SECOND as f64)
            .expect("described");
    }

    /// Sum of the task-state gauges.
    pub fn census_total(&self) -> f64 {
        TaskState::ALL
            .iter()
            .filter_map(|s| self.registry.value(TASKS, &labels(&[("state", s.as_str())])))
            .sum()
    }
}
