//! Shipped reference workflow and sample configuration.

pub const WORKFLOW_YAML: &str = include_str!("../assets/circuit_cutting_workflow.yaml");
pub const CLUSTER_YAML: &str = include_str!("../assets/cluster.yaml");
pub const QUEUES_YAML: &str = include_str!("../assets/queues.yaml");
pub const SECRETS_YAML: &str = include_str!("../assets/secrets.yaml");

use crate::artifacts::SecretStore;
use crate::cluster::{parse_cluster, Cluster};
use crate::engine::{Engine, EngineConfig};
use crate::payload::PayloadRegistry;
use crate::scheduler::{parse_queues, QueueConfig, Scheduler};
use crate::workflow::{parse_workflow, WorkflowSpec};

pub fn sample_workflow() -> WorkflowSpec {
    parse_workflow(WORKFLOW_YAML.as_bytes()).expect("shipped workflow is valid")
}

pub fn sample_cluster() -> Cluster {
    parse_cluster(CLUSTER_YAML.as_bytes()).expect("shipped cluster is valid")
}

pub fn sample_queues() -> QueueConfig {
    parse_queues(QUEUES_YAML.as_bytes()).expect("shipped queues are valid")
}

pub fn sample_secrets() -> SecretStore {
    SecretStore::parse(SECRETS_YAML.as_bytes()).expect("shipped secrets are valid")
}

/// Engine over the sample cluster, queues and secrets with the default
/// payloads.
pub fn sample_engine(config: EngineConfig) -> Engine {
    Engine::new(
        sample_cluster(),
        Scheduler::new(sample_queues()).expect("shipped queues are consistent"),
        PayloadRegistry::with_defaults(),
        sample_secrets(),
        config,
    )
}
