//! Simulated node pool with exclusive devices and capacity accounting.

mod clock;
mod config;

pub use clock::VirtualClock;
pub use config::{parse_cluster, CLUSTER_API_VERSION};

use std::collections::{BTreeMap, BTreeSet};

use crate::predicate::{Attributes, Predicate};
use crate::quantity::ResourceVector;
use crate::workflow::ResourceRequest;

pub const RESOURCE_TYPE_LABEL: &str = "resource_type";

pub const NS_PER_SECOND: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceClass {
    pub name: String,
    /// Capacity key the devices of this class are counted under.
    pub resource: String,
    pub selector: Vec<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeviceState {
    Free,
    Allocated(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub id: String,
    pub class_name: String,
    pub attributes: Attributes,
    pub state: DeviceState,
}

/// Per-node timing knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    /// Multiplies the payload-reported compute cost.
    pub speed_factor: f64,
    /// Added to tasks that do work on this node.
    pub queue_delay_ns: u64,
}

impl Timing {
    /// Defaults by `resource_type`: cpu 1.0, gpu 0.1, qpu 1.0 plus 2 s.
    pub fn default_for(resource_type: Option<&str>) -> Timing {
        match resource_type {
            Some("gpu") => Timing {
                speed_factor: 0.1,
                queue_delay_ns: 0,
            },
            Some("qpu") => Timing {
                speed_factor: 1.0,
                queue_delay_ns: 2 * NS_PER_SECOND,
            },
            _ => Timing {
                speed_factor: 1.0,
                queue_delay_ns: 0,
            },
        }
    }

    /// Virtual duration of a task reporting `cost_seconds` of work. Tasks
    /// that report no work skip the queueing delay.
    pub fn duration_ns(&self, cost_seconds: f64) -> u64 {
        if cost_seconds <= 0.0 {
            return 0;
        }
        let compute = (cost_seconds * self.speed_factor * NS_PER_SECOND as f64).round() as u64;
        compute + self.queue_delay_ns
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub labels: BTreeMap<String, String>,
    pub schedulable: bool,
    pub capacity: ResourceVector,
    /// Currently free amounts.
    pub allocatable: ResourceVector,
    /// Sorted by id.
    pub devices: Vec<Device>,
    pub timing: Timing,
}

impl Node {
    pub fn resource_type(&self) -> Option<&str> {
        self.labels.get(RESOURCE_TYPE_LABEL).map(String::as_str)
    }

    pub fn matches(&self, selector: &BTreeMap<String, String>) -> bool {
        selector.iter().all(|(k, v)| self.labels.get(k) == Some(v))
    }
}

/// Nodes whose labels are a superset of `selector`, in pool order.
pub fn match_nodes<'a>(selector: &BTreeMap<String, String>, pool: &'a [Node]) -> Vec<&'a Node> {
    pool.iter().filter(|n| n.matches(selector)).collect()
}

/// What a bind took, so release can return exactly that.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub id: u64,
    pub task: String,
    pub node: String,
    pub resources: ResourceVector,
    pub devices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BindError {
    #[error("node {node}: insufficient {resource} (requested {requested}, free {available})")]
    InsufficientCapacity {
        node: String,
        resource: String,
        requested: i64,
        available: i64,
    },
    #[error("node {node}: no free device satisfies the claim for class {class}")]
    NoMatchingDevice { node: String, class: String },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("unknown device class {0}")]
    UnknownClass(String),
    #[error("node {0} is not schedulable")]
    Unschedulable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReleaseError {
    #[error("binding {0} was already released")]
    DoubleRelease(u64),
    #[error("binding {0} does not exist")]
    UnknownBinding(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cluster configuration: {0}")]
pub struct ClusterError(pub String);

/// The node pool. All mutation goes through `bind` and `release`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    nodes: Vec<Node>,
    classes: BTreeMap<String, DeviceClass>,
    active: BTreeMap<u64, Binding>,
    released: BTreeSet<u64>,
    next_binding: u64,
}

impl Cluster {
    /// Sorts nodes and devices and derives device counts into capacity.
    pub fn new(classes: Vec<DeviceClass>, mut nodes: Vec<Node>) -> Result<Cluster, ClusterError> {
        let mut by_name = BTreeMap::new();
        for c in classes {
            if by_name.contains_key(&c.name) {
                return Err(ClusterError(format!("duplicate device class {}", c.name)));
            }
            by_name.insert(c.name.clone(), c);
        }
        let device_resources: BTreeSet<&str> = by_name.values().map(|c| c.resource.as_str()).collect();
        nodes.sort_by(|a, b| a.name.cmp(&b.name));
        for w in nodes.windows(2) {
            if w[0].name == w[1].name {
                return Err(ClusterError(format!("duplicate node {}", w[0].name)));
            }
        }
        let mut ids = BTreeSet::new();
        for node in &mut nodes {
            node.devices.sort_by(|a, b| a.id.cmp(&b.id));
            let mut counts = ResourceVector::new();
            for d in &node.devices {
                let class = by_name
                    .get(&d.class_name)
                    .ok_or_else(|| ClusterError(format!("device {} uses unknown class {}", d.id, d.class_name)))?;
                if !ids.insert(d.id.clone()) {
                    return Err(ClusterError(format!("duplicate device id {}", d.id)));
                }
                if d.state != DeviceState::Free {
                    return Err(ClusterError(format!("device {} starts allocated", d.id)));
                }
                counts.add_one(&class.resource, 1);
            }
            for res in &device_resources {
                let declared = node.capacity.get(res);
                let derived = counts.get(res);
                if declared != 0 && declared != derived {
                    return Err(ClusterError(format!(
                        "node {}: capacity {res}={declared} but {derived} devices are listed",
                        node.name
                    )));
                }
                node.capacity.set(res, derived);
            }
            if node.capacity.iter().any(|(_, v)| v < 0) {
                return Err(ClusterError(format!("node {}: negative capacity", node.name)));
            }
            node.allocatable = node.capacity.clone();
        }
        Ok(Cluster {
            nodes,
            classes: by_name,
            active: BTreeMap::new(),
            released: BTreeSet::new(),
            next_binding: 1,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn classes(&self) -> impl Iterator<Item = &DeviceClass> {
        self.classes.values()
    }

    pub fn active_bindings(&self) -> impl Iterator<Item = &Binding> {
        self.active.values()
    }

    pub fn binding(&self, id: u64) -> Option<&Binding> {
        self.active.get(&id)
    }

    fn device_class_for_resource(&self, resource: &str) -> Option<&DeviceClass> {
        self.classes.values().find(|c| c.resource == resource)
    }

    /// Requests with device claims folded into their class resources.
    pub fn effective_request(&self, request: &ResourceRequest) -> Result<ResourceVector, BindError> {
        let mut v = request.requests.clone();
        for claim in &request.device_claims {
            let class = self
                .classes
                .get(&claim.class_name)
                .ok_or_else(|| BindError::UnknownClass(claim.class_name.clone()))?;
            v.add_one(&class.resource, i64::from(claim.count));
        }
        Ok(v)
    }

    /// Chooses devices for `request` on `node` without mutating anything.
    fn pick_devices(&self, node: &Node, request: &ResourceRequest) -> Result<Vec<usize>, BindError> {
        let mut taken: BTreeSet<usize> = BTreeSet::new();
        let free =
            |i: usize, taken: &BTreeSet<usize>| node.devices[i].state == DeviceState::Free && !taken.contains(&i);
        // Claims first: they are the constrained ones.
        for claim in &request.device_claims {
            let class = &self.classes[&claim.class_name];
            let constraints: Vec<Predicate> = claim
                .constraints
                .iter()
                .map(|c| Predicate::parse(c))
                .collect::<Result<_, _>>()
                .map_err(|_| BindError::NoMatchingDevice {
                    node: node.name.clone(),
                    class: claim.class_name.clone(),
                })?;
            for _ in 0..claim.count {
                let pick = (0..node.devices.len()).find(|&i| {
                    let d = &node.devices[i];
                    free(i, &taken)
                        && d.class_name == class.name
                        && class.selector.iter().all(|p| p.eval(&d.attributes))
                        && constraints.iter().all(|p| p.eval(&d.attributes))
                });
                match pick {
                    Some(i) => {
                        taken.insert(i);
                    }
                    None => {
                        return Err(BindError::NoMatchingDevice {
                            node: node.name.clone(),
                            class: claim.class_name.clone(),
                        })
                    }
                }
            }
        }
        // Plain device-count requests such as `nvidia.com/gpu: 1`.
        for (resource, amount) in request.requests.iter() {
            let Some(class) = self.device_class_for_resource(resource) else {
                continue;
            };
            for _ in 0..amount {
                let pick = (0..node.devices.len()).find(|&i| {
                    let d = &node.devices[i];
                    free(i, &taken)
                        && self.classes[&d.class_name].resource == class.resource
                        && self.classes[&d.class_name]
                            .selector
                            .iter()
                            .all(|p| p.eval(&d.attributes))
                });
                match pick {
                    Some(i) => {
                        taken.insert(i);
                    }
                    None => {
                        return Err(BindError::NoMatchingDevice {
                            node: node.name.clone(),
                            class: class.name.clone(),
                        })
                    }
                }
            }
        }
        Ok(taken.into_iter().collect())
    }

    /// Checks whether `request` would bind on `node`.
    pub fn can_bind(&self, node_name: &str, request: &ResourceRequest) -> Result<(), BindError> {
        let node = self
            .node(node_name)
            .ok_or_else(|| BindError::UnknownNode(node_name.to_string()))?;
        if !node.schedulable {
            return Err(BindError::Unschedulable(node.name.clone()));
        }
        let need = self.effective_request(request)?;
        if let Some((resource, requested, available)) = node.allocatable.shortfall(&need) {
            return Err(BindError::InsufficientCapacity {
                node: node.name.clone(),
                resource: resource.to_string(),
                requested,
                available,
            });
        }
        self.pick_devices(node, request).map(|_| ())
    }

    /// Charges `request` to `node` and allocates devices to `task`.
    pub fn bind(&mut self, node_name: &str, task: &str, request: &ResourceRequest) -> Result<Binding, BindError> {
        self.can_bind(node_name, request)?;
        let need = self.effective_request(request)?;
        let idx = self
            .nodes
            .iter()
            .position(|n| n.name == node_name)
            .expect("checked above");
        let picks = self.pick_devices(&self.nodes[idx], request)?;
        let node = &mut self.nodes[idx];
        node.allocatable.sub(&need);
        let mut devices = Vec::new();
        for i in picks {
            node.devices[i].state = DeviceState::Allocated(task.to_string());
            devices.push(node.devices[i].id.clone());
        }
        let binding = Binding {
            id: self.next_binding,
            task: task.to_string(),
            node: node.name.clone(),
            resources: need,
            devices,
        };
        self.next_binding += 1;
        self.active.insert(binding.id, binding.clone());
        Ok(binding)
    }

    /// First node, by name, that matches `selector` and accepts the request.
    pub fn find_node(&self, selector: &BTreeMap<String, String>, request: &ResourceRequest) -> Option<&Node> {
        self.nodes
            .iter()
            .filter(|n| n.schedulable && n.matches(selector))
            .find(|n| self.can_bind(&n.name, request).is_ok())
    }

    pub fn release(&mut self, binding_id: u64) -> Result<Binding, ReleaseError> {
        let Some(b) = self.active.remove(&binding_id) else {
            return Err(if self.released.contains(&binding_id) {
                ReleaseError::DoubleRelease(binding_id)
            } else {
                ReleaseError::UnknownBinding(binding_id)
            });
        };
        self.released.insert(binding_id);
        let node = self
            .nodes
            .iter_mut()
            .find(|n| n.name == b.node)
            .expect("bindings reference existing nodes");
        node.allocatable.add(&b.resources);
        for d in &mut node.devices {
            if b.devices.contains(&d.id) {
                d.state = DeviceState::Free;
            }
        }
        Ok(b)
    }

    /// Verifies allocatable + active bindings = capacity on every node and
    /// that device states agree with the bindings.
    pub fn check_conservation(&self) -> Result<(), String> {
        for node in &self.nodes {
            let mut total = node.allocatable.clone();
            let mut owned = BTreeSet::new();
            for b in self.active.values().filter(|b| b.node == node.name) {
                total.add(&b.resources);
                for d in &b.devices {
                    if !owned.insert(d.clone()) {
                        return Err(format!("device {d} is in two bindings"));
                    }
                }
            }
            if total != node.capacity {
                return Err(format!(
                    "node {}: allocatable + bound = {total}, capacity = {}",
                    node.name, node.capacity
                ));
            }
            for d in &node.devices {
                let allocated = matches!(d.state, DeviceState::Allocated(_));
                if allocated != owned.contains(&d.id) {
                    return Err(format!("device {} state disagrees with bindings", d.id));
                }
            }
        }
        Ok(())
    }
}
