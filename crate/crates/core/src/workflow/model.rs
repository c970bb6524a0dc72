use std::collections::BTreeMap;

use crate::quantity::ResourceVector;

/// Label that routes a task to a local queue.
pub const QUEUE_LABEL: &str = "kueue.x-k8s.io/queue-name";

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowSpec {
    pub api_version: String,
    pub name: String,
    pub namespace: Option<String>,
    pub entrypoint: String,
    pub volumes: Vec<VolumeDecl>,
    pub templates: Vec<Template>,
}

impl WorkflowSpec {
    pub fn template(&self, name: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.name() == name)
    }

    pub fn volume(&self, name: &str) -> Option<&VolumeDecl> {
        self.volumes.iter().find(|v| v.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeDecl {
    pub name: String,
    pub source: VolumeSource,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VolumeSource {
    PersistentVolumeClaim {
        claim_name: String,
    },
    /// Reference only; the material lives in the engine's secret store.
    Secret(SecretRef),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretRef {
    pub secret_name: String,
}

// A spec holds a handful of templates; boxing buys nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum Template {
    Steps(StepsTemplate),
    Container(ContainerTemplate),
}

impl Template {
    pub fn name(&self) -> &str {
        match self {
            Template::Steps(t) => &t.name,
            Template::Container(t) => &t.name,
        }
    }

    pub fn input_params(&self) -> &[String] {
        match self {
            Template::Steps(t) => &t.input_params,
            Template::Container(t) => &t.input_params,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepsTemplate {
    pub name: String,
    pub input_params: Vec<String>,
    /// Groups run one after another; steps inside a group run in parallel.
    pub groups: Vec<StepGroup>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepGroup {
    pub steps: Vec<StepRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRef {
    pub name: String,
    pub template: String,
    /// Parameter bindings in document order; values may use `{{item}}`.
    pub arguments: Vec<(String, String)>,
    pub with_sequence: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainerTemplate {
    pub name: String,
    pub labels: BTreeMap<String, String>,
    pub input_params: Vec<String>,
    pub node_selector: BTreeMap<String, String>,
    pub priority: i32,
    pub image: String,
    pub command: Vec<String>,
    pub args: Vec<String>,
    pub env: Vec<(String, String)>,
    pub volume_mounts: Vec<VolumeMount>,
    pub resources: ResourceRequest,
}

impl ContainerTemplate {
    pub fn queue_label(&self) -> Option<&str> {
        self.labels.get(QUEUE_LABEL).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolumeMount {
    pub name: String,
    pub mount_path: String,
    pub read_only: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResourceRequest {
    pub requests: ResourceVector,
    pub limits: ResourceVector,
    pub device_claims: Vec<DeviceClaimRequest>,
}

/// Request for `count` devices of a class, optionally narrowed by
/// attribute predicates such as `shot_budget >= 4096`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceClaimRequest {
    pub class_name: String,
    pub count: u32,
    pub constraints: Vec<String>,
}
