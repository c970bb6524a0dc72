//! The ordered event stream. Every task transition is one event; the log is
//! append-only and sufficient to rebuild run state and reports.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::artifacts::ArtifactEntry;
use crate::quantity::ResourceVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskState {
    Pending,
    Active,
    Succeeded,
    Failed,
}

impl TaskState {
    pub const ALL: [TaskState; 4] = [
        TaskState::Pending,
        TaskState::Active,
        TaskState::Succeeded,
        TaskState::Failed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskState::Pending => "pending",
            TaskState::Active => "active",
            TaskState::Succeeded => "succeeded",
            TaskState::Failed => "failed",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Succeeded | TaskState::Failed)
    }

    /// Pending -> Active -> {Succeeded, Failed}.
    pub fn can_move_to(self, next: TaskState) -> bool {
        matches!(
            (self, next),
            (TaskState::Pending, TaskState::Active)
                | (TaskState::Active, TaskState::Succeeded)
                | (TaskState::Active, TaskState::Failed)
        )
    }
}

impl fmt::Display for TaskState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunState {
    Running,
    Succeeded,
    Failed,
}

impl RunState {
    pub fn as_str(self) -> &'static str {
        match self {
            RunState::Running => "running",
            RunState::Succeeded => "succeeded",
            RunState::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskDecl {
    pub id: String,
    pub template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub preds: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeDecl {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    pub capacity: ResourceVector,
    /// Free amounts when the run was submitted.
    pub allocatable: ResourceVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum EventKind {
    #[serde(rename_all = "camelCase")]
    RunSubmitted {
        workflow: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        namespace: Option<String>,
        spec_sha256: String,
        seed: u64,
        tasks: Vec<TaskDecl>,
        nodes: Vec<NodeDecl>,
        queues: Vec<String>,
    },
    #[serde(rename_all = "camelCase")]
    TaskEnqueued {
        task: String,
        /// None for direct-bound tasks without a queue label.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        queue: Option<String>,
    },
    #[serde(rename_all = "camelCase")]
    TaskAdmitted {
        task: String,
        queue: String,
        flavor: String,
    },
    #[serde(rename_all = "camelCase")]
    TaskStarted {
        task: String,
        node: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        backend: Option<String>,
        resources: ResourceVector,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        devices: Vec<String>,
        attempt: u32,
        duration_ns: u64,
        queue_delay_ns: u64,
    },
    #[serde(rename_all = "camelCase")]
    TaskRetried {
        task: String,
        attempt: u32,
        error: String,
        duration_ns: u64,
    },
    #[serde(rename_all = "camelCase")]
    TaskSucceeded {
        task: String,
        writes: Vec<ArtifactEntry>,
        bytes_read: u64,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        summary: BTreeMap<String, String>,
    },
    #[serde(rename_all = "camelCase")]
    TaskFailed { task: String, error: String },
    /// A pending workload dropped from its queue because the run failed.
    #[serde(rename_all = "camelCase")]
    WorkloadEvicted { task: String, queue: String },
    #[serde(rename_all = "camelCase")]
    RunFinished { state: RunState },
}

impl EventKind {
    /// The serialized `type` tag.
    pub fn type_name(&self) -> &'static str {
        match self {
            EventKind::RunSubmitted { .. } => "runSubmitted",
            EventKind::TaskEnqueued { .. } => "taskEnqueued",
            EventKind::TaskAdmitted { .. } => "taskAdmitted",
            EventKind::TaskStarted { .. } => "taskStarted",
            EventKind::TaskRetried { .. } => "taskRetried",
            EventKind::TaskSucceeded { .. } => "taskSucceeded",
            EventKind::TaskFailed { .. } => "taskFailed",
            EventKind::WorkloadEvicted { .. } => "workloadEvicted",
            EventKind::RunFinished { .. } => "runFinished",
        }
    }

    pub fn task(&self) -> Option<&str> {
        match self {
            EventKind::TaskEnqueued { task, .. }
            | EventKind::TaskAdmitted { task, .. }
            | EventKind::TaskStarted { task, .. }
            | EventKind::TaskRetried { task, .. }
            | EventKind::TaskSucceeded { task, .. }
            | EventKind::TaskFailed { task, .. }
            | EventKind::WorkloadEvicted { task, .. } => Some(task),
            EventKind::RunSubmitted { .. } | EventKind::RunFinished { .. } => None,
        }
    }

    /// The task state this event moves its task into, if any.
    pub fn transition(&self) -> Option<TaskState> {
        match self {
            EventKind::TaskStarted { .. } => Some(TaskState::Active),
            EventKind::TaskSucceeded { .. } => Some(TaskState::Succeeded),
            EventKind::TaskFailed { .. } => Some(TaskState::Failed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Event {
    /// Position in the engine's stream, from 0.
    pub seq: u64,
    pub t_ns: u64,
    pub run: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("events always serialize")
    }
}

/// Reads a JSON-lines event log, skipping blank lines.
pub fn parse_event_log(text: &str) -> Result<Vec<Event>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}
