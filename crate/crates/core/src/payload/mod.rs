//! Task executors. A container image in a workflow names a registered
//! payload; the payload sees the task's substituted command line, its
//! environment and a filesystem view of its mounts.

mod quantum;

pub use quantum::{QuantumPayload, QUANTUM_IMAGE};

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::artifacts::{FsError, TaskFs};
use crate::workflow::TaskNode;

/// Image of the built-in payload that only reports a fixed cost.
pub const SLEEP_IMAGE: &str = "hqflow/sleep:latest";

pub struct TaskContext<'a> {
    pub task: &'a TaskNode,
    /// Node the task was bound to.
    pub node: &'a str,
    /// Seed for this run; payloads derive their own streams from it.
    pub seed: u64,
    pub fs: TaskFs<'a>,
}

impl TaskContext<'_> {
    pub fn env(&self, name: &str) -> Option<&str> {
        self.task.env.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    /// Command followed by args, as a container would see them.
    pub fn argv(&self) -> Vec<&str> {
        self.task
            .command
            .iter()
            .chain(&self.task.args)
            .map(String::as_str)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PayloadOutput {
    /// Work done, in seconds on a node with speed factor 1.
    pub cost_seconds: f64,
    /// Small key/value results surfaced in the run report.
    pub summary: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PayloadError {
    #[error("image {0} is not registered")]
    ImageNotFound(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Fs(#[from] FsError),
    #[error("{0}")]
    Failed(String),
}

pub trait Payload: Send + Sync {
    fn run(&self, ctx: &mut TaskContext<'_>) -> Result<PayloadOutput, PayloadError>;
}

/// Reports `COST_SECONDS` (default 1) of work and optionally writes
/// `OUTPUT_FILE` with `OUTPUT_TEXT`.
pub struct SleepPayload;

impl Payload for SleepPayload {
    fn run(&self, ctx: &mut TaskContext<'_>) -> Result<PayloadOutput, PayloadError> {
        let cost = match ctx.env("COST_SECONDS") {
            Some(v) => v
                .parse::<f64>()
                .ok()
                .filter(|c| c.is_finite() && *c >= 0.0)
                .ok_or_else(|| PayloadError::Usage(format!("COST_SECONDS={v:?}")))?,
            None => 1.0,
        };
        if let Some(path) = ctx.env("OUTPUT_FILE").map(str::to_string) {
            let text = ctx.env("OUTPUT_TEXT").unwrap_or_default().to_string();
            ctx.fs.write(&path, text)?;
        }
        Ok(PayloadOutput {
            cost_seconds: cost,
            summary: BTreeMap::new(),
        })
    }
}

/// Payloads by image name.
#[derive(Clone, Default)]
pub struct PayloadRegistry {
    by_image: BTreeMap<String, Arc<dyn Payload>>,
}

impl PayloadRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The quantum workload and the sleep payload.
    pub fn with_defaults() -> Self {
        let mut r = Self::new();
        r.register(QUANTUM_IMAGE, Arc::new(QuantumPayload::default()));
        r.register(SLEEP_IMAGE, Arc::new(SleepPayload));
        r
    }

    pub fn register(&mut self, image: &str, payload: Arc<dyn Payload>) {
        self.by_image.insert(image.to_string(), payload);
    }

    pub fn get(&self, image: &str) -> Option<Arc<dyn Payload>> {
        self.by_image.get(image).cloned()
    }

    pub fn images(&self) -> impl Iterator<Item = &str> {
        self.by_image.keys().map(String::as_str)
    }
}
