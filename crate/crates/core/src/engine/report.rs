//! Rebuilding run state from the event log, and the run report derived
//! from it. The replay checks the lifecycle rules independently of the
//! engine that produced the events.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::events::{Event, EventKind, RunState, TaskState};
use crate::artifacts::ArtifactEntry;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("event {seq}: {reason}")]
    Illegal { seq: u64, reason: String },
    #[error("run {0} has no RunSubmitted event")]
    NotSubmitted(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskRecord {
    pub id: String,
    pub template: String,
    pub state: Option<TaskState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queue: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flavor: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enqueued_ns: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub started_ns: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_ns: Option<u64>,
    pub attempt: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub bytes_read: u64,
    pub bytes_written: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CensusPoint {
    pub t_ns: u64,
    pub pending: usize,
    pub active: usize,
    pub succeeded: usize,
    pub failed: usize,
}

impl CensusPoint {
    pub fn total(&self) -> usize {
        self.pending + self.active + self.succeeded + self.failed
    }

    pub fn get(&self, s: TaskState) -> usize {
        match s {
            TaskState::Pending => self.pending,
            TaskState::Active => self.active,
            TaskState::Succeeded => self.succeeded,
            TaskState::Failed => self.failed,
        }
    }

    fn slot(&mut self, s: TaskState) -> &mut usize {
        match s {
            TaskState::Pending => &mut self.pending,
            TaskState::Active => &mut self.active,
            TaskState::Succeeded => &mut self.succeeded,
            TaskState::Failed => &mut self.failed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QueueCounts {
    pub pending: usize,
    pub admitted: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TemplateProgress {
    pub template: String,
    pub total: usize,
    pub succeeded: usize,
    pub active: usize,
    pub failed: usize,
}

/// State of one run rebuilt event by event.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub run: String,
    pub workflow: String,
    pub namespace: Option<String>,
    pub spec_sha256: String,
    pub seed: u64,
    pub submitted_ns: u64,
    pub finished_ns: Option<u64>,
    pub state: RunState,
    pub tasks: Vec<TaskRecord>,
    index: BTreeMap<String, usize>,
    preds: Vec<Vec<usize>>,
    pub census: CensusPoint,
    pub timeline: Vec<CensusPoint>,
    pub queues: BTreeMap<String, QueueCounts>,
    pub artifacts: BTreeMap<(String, String), ArtifactEntry>,
    pub outputs: BTreeMap<String, BTreeMap<String, String>>,
    /// Number of this run's events applied.
    pub applied: usize,
    last_t: u64,
}

impl Replay {
    /// Starts from the run's `RunSubmitted` event.
    pub fn start(event: &Event) -> Result<Replay, ReplayError> {
        let EventKind::RunSubmitted {
            workflow,
            namespace,
            spec_sha256,
            seed,
            tasks,
            queues,
            ..
        } = &event.kind
        else {
            return Err(ReplayError::NotSubmitted(event.run.clone()));
        };
        let index: BTreeMap<String, usize> = tasks.iter().enumerate().map(|(i, t)| (t.id.clone(), i)).collect();
        let illegal = |reason: String| ReplayError::Illegal { seq: event.seq, reason };
        if index.len() != tasks.len() {
            return Err(illegal("duplicate task ids".into()));
        }
        let mut preds = Vec::new();
        for t in tasks {
            let mut p = Vec::new();
            for id in &t.preds {
                p.push(
                    *index
                        .get(id)
                        .ok_or_else(|| illegal(format!("{}: unknown predecessor {id}", t.id)))?,
                );
            }
            preds.push(p);
        }
        let census = CensusPoint {
            t_ns: event.t_ns,
            pending: tasks.len(),
            ..Default::default()
        };
        Ok(Replay {
            run: event.run.clone(),
            workflow: workflow.clone(),
            namespace: namespace.clone(),
            spec_sha256: spec_sha256.clone(),
            seed: *seed,
            submitted_ns: event.t_ns,
            finished_ns: None,
            state: RunState::Running,
            tasks: tasks
                .iter()
                .map(|t| TaskRecord {
                    id: t.id.clone(),
                    template: t.template.clone(),
                    state: Some(TaskState::Pending),
                    queue: t.queue.clone(),
                    ..Default::default()
                })
                .collect(),
            index,
            preds,
            census,
            timeline: vec![census],
            queues: queues.iter().map(|q| (q.clone(), QueueCounts::default())).collect(),
            artifacts: BTreeMap::new(),
            outputs: BTreeMap::new(),
            applied: 1,
            last_t: event.t_ns,
        })
    }

    /// Replays every event of `run` in `events`.
    pub fn of_run(run: &str, events: &[Event]) -> Result<Replay, ReplayError> {
        let mut mine = events.iter().filter(|e| e.run == run);
        let first = mine.next().ok_or_else(|| ReplayError::NotSubmitted(run.to_string()))?;
        let mut r = Replay::start(first)?;
        for e in mine {
            r.apply(e)?;
        }
        Ok(r)
    }

    fn state_of(&self, i: usize) -> TaskState {
        self.tasks[i].state.expect("always set")
    }

    pub fn apply(&mut self, e: &Event) -> Result<(), ReplayError> {
        let illegal = |reason: String| ReplayError::Illegal { seq: e.seq, reason };
        if e.run != self.run {
            return Err(illegal(format!("event for run {} in replay of {}", e.run, self.run)));
        }
        if e.t_ns < self.last_t {
            return Err(illegal(format!("time went back from {} to {}", self.last_t, e.t_ns)));
        }
        if self.state != RunState::Running {
            return Err(illegal("event after RunFinished".into()));
        }
        self.last_t = e.t_ns;
        let idx = match e.kind.task() {
            Some(id) => Some(
                *self
                    .index
                    .get(id)
                    .ok_or_else(|| illegal(format!("unknown task {id}")))?,
            ),
            None => None,
        };
        if let (Some(i), Some(next)) = (idx, e.kind.transition()) {
            let from = self.state_of(i);
            if !from.can_move_to(next) {
                return Err(illegal(format!("{}: {from} -> {next}", self.tasks[i].id)));
            }
            if next == TaskState::Active {
                if let Some(&p) = self.preds[i]
                    .iter()
                    .find(|&&p| self.state_of(p) != TaskState::Succeeded)
                {
                    return Err(illegal(format!(
                        "{} started before predecessor {} succeeded",
                        self.tasks[i].id, self.tasks[p].id
                    )));
                }
            }
            *self.census.slot(from) -= 1;
            *self.census.slot(next) += 1;
            self.tasks[i].state = Some(next);
        }
        match &e.kind {
            EventKind::RunSubmitted { .. } => return Err(illegal("second RunSubmitted".into())),
            EventKind::TaskEnqueued { queue, .. } => {
                let t = &mut self.tasks[idx.expect("task event")];
                if t.enqueued_ns.is_some() || t.state != Some(TaskState::Pending) {
                    return Err(illegal(format!("{} enqueued twice", t.id)));
                }
                t.enqueued_ns = Some(e.t_ns);
                if let Some(q) = queue {
                    self.queues.entry(q.clone()).or_default().pending += 1;
                }
            }
            EventKind::TaskAdmitted { queue, flavor, .. } => {
                let t = &mut self.tasks[idx.expect("task event")];
                if t.enqueued_ns.is_none() || t.flavor.is_some() {
                    return Err(illegal(format!("{} admitted without being queued", t.id)));
                }
                t.flavor = Some(flavor.clone());
                let c = self.queues.entry(queue.clone()).or_default();
                if c.pending == 0 {
                    return Err(illegal(format!("queue {queue} admitted from empty")));
                }
                c.pending -= 1;
                c.admitted += 1;
            }
            EventKind::TaskStarted { node, .. } => {
                let t = &mut self.tasks[idx.expect("task event")];
                if t.queue.is_some() && t.flavor.is_none() {
                    return Err(illegal(format!("{} started without admission", t.id)));
                }
                t.node = Some(node.clone());
                t.started_ns = Some(e.t_ns);
            }
            EventKind::TaskRetried { attempt, .. } => {
                let t = &mut self.tasks[idx.expect("task event")];
                if t.state != Some(TaskState::Active) || *attempt != t.attempt + 1 {
                    return Err(illegal(format!("{}: unexpected retry", t.id)));
                }
                t.attempt = *attempt;
            }
            EventKind::TaskSucceeded {
                writes,
                bytes_read,
                summary,
                task,
            } => {
                let i = idx.expect("task event");
                self.finish_task(i, e.t_ns);
                let t = &mut self.tasks[i];
                t.bytes_read = *bytes_read;
                t.bytes_written = writes.iter().map(|w| w.bytes).sum();
                for w in writes {
                    self.artifacts.insert((w.volume.clone(), w.path.clone()), w.clone());
                }
                if !summary.is_empty() {
                    self.outputs.insert(task.clone(), summary.clone());
                }
            }
            EventKind::TaskFailed { error, .. } => {
                let i = idx.expect("task event");
                self.finish_task(i, e.t_ns);
                self.tasks[i].error = Some(error.clone());
            }
            EventKind::WorkloadEvicted { queue, .. } => {
                let t = &self.tasks[idx.expect("task event")];
                if t.state != Some(TaskState::Pending) || t.enqueued_ns.is_none() || t.flavor.is_some() {
                    return Err(illegal(format!("{} evicted while not queued", t.id)));
                }
                let c = self.queues.entry(queue.clone()).or_default();
                if c.pending == 0 {
                    return Err(illegal(format!("queue {queue} evicted from empty")));
                }
                c.pending -= 1;
            }
            EventKind::RunFinished { state } => {
                let ok = match state {
                    RunState::Succeeded => self.census.succeeded == self.tasks.len(),
                    RunState::Failed => self.census.failed > 0 && self.census.active == 0,
                    RunState::Running => false,
                };
                if !ok {
                    return Err(illegal(format!(
                        "run finished {} with census {:?}",
                        state.as_str(),
                        self.census
                    )));
                }
                self.state = *state;
                self.finished_ns = Some(e.t_ns);
            }
        }
        self.census.t_ns = e.t_ns;
        if self.census.total() != self.tasks.len() {
            return Err(illegal("census does not sum to the task count".into()));
        }
        match self.timeline.last_mut() {
            Some(last) if last.t_ns == e.t_ns => *last = self.census,
            _ => self.timeline.push(self.census),
        }
        self.applied += 1;
        Ok(())
    }

    fn finish_task(&mut self, i: usize, t_ns: u64) {
        let t = &mut self.tasks[i];
        t.finished_ns = Some(t_ns);
        if t.flavor.is_some() {
            if let Some(q) = &t.queue {
                let c = self.queues.get_mut(q).expect("admitted through this queue");
                c.admitted -= 1;
            }
        }
    }

    pub fn progress_by_template(&self) -> Vec<TemplateProgress> {
        let mut by: BTreeMap<&str, TemplateProgress> = BTreeMap::new();
        for t in &self.tasks {
            let p = by.entry(&t.template).or_insert_with(|| TemplateProgress {
                template: t.template.clone(),
                total: 0,
                succeeded: 0,
                active: 0,
                failed: 0,
            });
            p.total += 1;
            match t.state {
                Some(TaskState::Succeeded) => p.succeeded += 1,
                Some(TaskState::Active) => p.active += 1,
                Some(TaskState::Failed) => p.failed += 1,
                _ => {}
            }
        }
        by.into_values().collect()
    }
}

/// Deterministic summary of a run. The run id is left out so that
/// identical submissions produce identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub workflow: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub namespace: Option<String>,
    pub spec_sha256: String,
    pub seed: u64,
    pub state: RunState,
    pub submitted_ns: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_ns: Option<u64>,
    pub makespan_ns: u64,
    pub task_count: usize,
    pub census: CensusPoint,
    pub timeline: Vec<CensusPoint>,
    pub tasks: Vec<TaskRecord>,
    pub artifacts: Vec<ArtifactEntry>,
    pub outputs: BTreeMap<String, BTreeMap<String, String>>,
}

impl RunReport {
    pub fn from_events(run: &str, events: &[Event]) -> Result<RunReport, ReplayError> {
        Ok(Self::from_replay(&Replay::of_run(run, events)?))
    }

    pub fn from_replay(r: &Replay) -> RunReport {
        let end = r.finished_ns.unwrap_or(r.last_t);
        RunReport {
            workflow: r.workflow.clone(),
            namespace: r.namespace.clone(),
            spec_sha256: r.spec_sha256.clone(),
            seed: r.seed,
            state: r.state,
            submitted_ns: r.submitted_ns,
            finished_ns: r.finished_ns,
            makespan_ns: end - r.submitted_ns,
            task_count: r.tasks.len(),
            census: r.census,
            timeline: r.timeline.clone(),
            tasks: r.tasks.clone(),
            artifacts: r.artifacts.values().cloned().collect(),
            outputs: r.outputs.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize") + "\n"
    }

    pub fn task(&self, id: &str) -> Option<&TaskRecord> {
        self.tasks.iter().find(|t| t.id == id)
    }
}
