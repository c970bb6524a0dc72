//! Queue-based admission: workloads wait in local queues and are admitted
//! against cluster-queue quotas per resource flavor, then bound to a node.

mod config;

pub use config::{parse_queues, QUEUE_API_VERSION};

use std::collections::BTreeMap;

use crate::cluster::{Binding, Cluster};
use crate::quantity::ResourceVector;
use crate::workflow::ResourceRequest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceFlavor {
    pub name: String,
    pub node_selector: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlavorQuota {
    pub flavor: String,
    pub nominal: ResourceVector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceGroup {
    pub covered: Vec<String>,
    /// Tried in this order.
    pub flavors: Vec<FlavorQuota>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterQueue {
    pub name: String,
    pub resource_groups: Vec<ResourceGroup>,
    /// Admitted amounts per flavor.
    pub usage: BTreeMap<String, ResourceVector>,
}

impl ClusterQueue {
    /// Flavors with the resources their group covers, in declaration order.
    fn flavor_slots(&self) -> impl Iterator<Item = (&FlavorQuota, &[String])> {
        self.resource_groups
            .iter()
            .flat_map(|g| g.flavors.iter().map(move |f| (f, g.covered.as_slice())))
    }

    pub fn quota(&self, flavor: &str) -> Option<&ResourceVector> {
        self.flavor_slots()
            .find(|(f, _)| f.flavor == flavor)
            .map(|(f, _)| &f.nominal)
    }

    fn fits(&self, flavor: &FlavorQuota, covered: &[String], need: &ResourceVector) -> bool {
        let used = self.usage.get(&flavor.flavor);
        need.iter().all(|(res, amount)| {
            !covered.iter().any(|c| c == res) || used.map_or(0, |u| u.get(res)) + amount <= flavor.nominal.get(res)
        })
    }

    /// Usage restricted to covered resources must stay within quota.
    pub fn within_quota(&self) -> bool {
        self.flavor_slots().all(|(f, covered)| {
            let used = self.usage.get(&f.flavor).cloned().unwrap_or_default();
            covered
                .iter()
                .all(|r| used.get(r) >= 0 && used.get(r) <= f.nominal.get(r))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalQueue {
    pub namespace: String,
    pub name: String,
    pub cluster_queue: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QueueConfig {
    pub flavors: Vec<ResourceFlavor>,
    pub cluster_queues: Vec<ClusterQueue>,
    pub local_queues: Vec<LocalQueue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadState {
    Pending,
    Admitted,
}

/// A task submitted for admission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadRequest {
    pub task_id: String,
    pub namespace: Option<String>,
    pub queue: String,
    pub request: ResourceRequest,
    pub node_selector: BTreeMap<String, String>,
    pub priority: i32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueuedWorkload {
    pub task_id: String,
    pub local_queue: String,
    pub cluster_queue: String,
    pub request: ResourceRequest,
    pub effective: ResourceVector,
    pub node_selector: BTreeMap<String, String>,
    pub priority: i32,
    pub seq: u64,
    pub state: WorkloadState,
    pub flavor: Option<String>,
    pub binding: Option<Binding>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Admission {
    pub task_id: String,
    pub local_queue: String,
    pub flavor: String,
    pub binding: Binding,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchedulerError {
    #[error("unknown local queue {0}")]
    UnknownQueue(String),
    #[error("unknown workload {0}")]
    UnknownWorkload(String),
    #[error("workload {0} is already queued")]
    DuplicateWorkload(String),
    #[error("workload {task}: {reason}")]
    InvalidRequest { task: String, reason: String },
    #[error("queue configuration: {0}")]
    Config(String),
}

/// Pending and admitted counts for one local queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueStatus {
    pub queue: String,
    pub cluster_queue: String,
    pub pending: usize,
    pub admitted: usize,
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    flavors: BTreeMap<String, ResourceFlavor>,
    cluster_queues: Vec<ClusterQueue>,
    local_queues: Vec<LocalQueue>,
    workloads: BTreeMap<String, QueuedWorkload>,
    next_seq: u64,
}

impl Scheduler {
    pub fn new(config: QueueConfig) -> Result<Scheduler, SchedulerError> {
        let mut flavors = BTreeMap::new();
        for f in config.flavors {
            if flavors.insert(f.name.clone(), f.clone()).is_some() {
                return Err(SchedulerError::Config(format!("duplicate flavor {}", f.name)));
            }
        }
        for cq in &config.cluster_queues {
            for (f, _) in cq.flavor_slots() {
                if !flavors.contains_key(&f.flavor) {
                    return Err(SchedulerError::Config(format!(
                        "cluster queue {} references unknown flavor {}",
                        cq.name, f.flavor
                    )));
                }
            }
        }
        for lq in &config.local_queues {
            if !config.cluster_queues.iter().any(|c| c.name == lq.cluster_queue) {
                return Err(SchedulerError::Config(format!(
                    "local queue {} references unknown cluster queue {}",
                    lq.name, lq.cluster_queue
                )));
            }
            let same = config
                .local_queues
                .iter()
                .filter(|o| o.name == lq.name && o.namespace == lq.namespace)
                .count();
            if same > 1 {
                return Err(SchedulerError::Config(format!("duplicate local queue {}", lq.name)));
            }
        }
        Ok(Scheduler {
            flavors,
            cluster_queues: config.cluster_queues,
            local_queues: config.local_queues,
            workloads: BTreeMap::new(),
            next_seq: 0,
        })
    }

    pub fn flavors(&self) -> impl Iterator<Item = &ResourceFlavor> {
        self.flavors.values()
    }

    pub fn cluster_queues(&self) -> &[ClusterQueue] {
        &self.cluster_queues
    }

    pub fn local_queues(&self) -> &[LocalQueue] {
        &self.local_queues
    }

    pub fn workload(&self, task_id: &str) -> Option<&QueuedWorkload> {
        self.workloads.get(task_id)
    }

    pub fn workloads(&self) -> impl Iterator<Item = &QueuedWorkload> {
        self.workloads.values()
    }

    /// Resolves a queue label; with no namespace the name must be unique.
    pub fn resolve_queue(&self, namespace: Option<&str>, name: &str) -> Option<&LocalQueue> {
        let mut hits = self
            .local_queues
            .iter()
            .filter(|q| q.name == name && namespace.is_none_or(|ns| q.namespace == ns));
        let first = hits.next()?;
        hits.next().is_none().then_some(first)
    }

    pub fn enqueue(&mut self, w: WorkloadRequest, cluster: &Cluster) -> Result<&QueuedWorkload, SchedulerError> {
        let lq = self
            .resolve_queue(w.namespace.as_deref(), &w.queue)
            .ok_or_else(|| SchedulerError::UnknownQueue(w.queue.clone()))?
            .clone();
        if self.workloads.contains_key(&w.task_id) {
            return Err(SchedulerError::DuplicateWorkload(w.task_id));
        }
        let effective = cluster
            .effective_request(&w.request)
            .map_err(|e| SchedulerError::InvalidRequest {
                task: w.task_id.clone(),
                reason: e.to_string(),
            })?;
        let seq = self.next_seq;
        self.next_seq += 1;
        let id = w.task_id.clone();
        self.workloads.insert(
            id.clone(),
            QueuedWorkload {
                task_id: w.task_id,
                local_queue: lq.name,
                cluster_queue: lq.cluster_queue,
                request: w.request,
                effective,
                node_selector: w.node_selector,
                priority: w.priority,
                seq,
                state: WorkloadState::Pending,
                flavor: None,
                binding: None,
            },
        );
        Ok(&self.workloads[&id])
    }

    /// One BestEffortFIFO pass: pending workloads in (priority desc, seq
    /// asc) order, each trying flavors in declaration order. Quotas and free
    /// capacity only shrink during a pass, so one pass reaches a fixpoint.
    pub fn admit_cycle(&mut self, cluster: &mut Cluster) -> Vec<Admission> {
        let mut order: Vec<(i32, u64, String)> = self
            .workloads
            .values()
            .filter(|w| w.state == WorkloadState::Pending)
            .map(|w| (-w.priority, w.seq, w.task_id.clone()))
            .collect();
        order.sort();
        let mut out = Vec::new();
        for (_, _, id) in order {
            let w = &self.workloads[&id];
            let cq_idx = self
                .cluster_queues
                .iter()
                .position(|c| c.name == w.cluster_queue)
                .expect("validated at enqueue");
            let cq = &self.cluster_queues[cq_idx];
            let mut choice = None;
            for (fq, covered) in cq.flavor_slots() {
                if !cq.fits(fq, covered, &w.effective) {
                    continue;
                }
                let flavor = &self.flavors[&fq.flavor];
                let mut selector = flavor.node_selector.clone();
                // Conflicting selectors simply match no node.
                let conflict = w
                    .node_selector
                    .iter()
                    .any(|(k, v)| selector.get(k).is_some_and(|fv| fv != v));
                if conflict {
                    continue;
                }
                selector.extend(w.node_selector.clone());
                if let Some(node) = cluster.find_node(&selector, &w.request) {
                    choice = Some((fq.flavor.clone(), node.name.clone()));
                    break;
                }
            }
            let Some((flavor, node)) = choice else {
                continue;
            };
            let binding = cluster
                .bind(&node, &id, &w.request)
                .expect("find_node checked the bind");
            let effective = w.effective.clone();
            self.cluster_queues[cq_idx]
                .usage
                .entry(flavor.clone())
                .or_default()
                .add(&effective);
            let w = self.workloads.get_mut(&id).expect("present");
            w.state = WorkloadState::Admitted;
            w.flavor = Some(flavor.clone());
            w.binding = Some(binding.clone());
            out.push(Admission {
                task_id: id,
                local_queue: w.local_queue.clone(),
                flavor,
                binding,
            });
        }
        out
    }

    /// Refunds an admitted workload's quota, releases its node binding and
    /// runs the next admission cycle.
    pub fn complete(&mut self, task_id: &str, cluster: &mut Cluster) -> Result<Vec<Admission>, SchedulerError> {
        match self.workloads.get(task_id) {
            Some(w) if w.state == WorkloadState::Admitted => {}
            _ => return Err(SchedulerError::UnknownWorkload(task_id.to_string())),
        }
        let w = self.workloads.remove(task_id).expect("checked");
        let flavor = w.flavor.expect("admitted workloads have a flavor");
        let cq = self
            .cluster_queues
            .iter_mut()
            .find(|c| c.name == w.cluster_queue)
            .expect("validated");
        cq.usage
            .get_mut(&flavor)
            .expect("charged at admission")
            .sub(&w.effective);
        let binding = w.binding.expect("admitted workloads are bound");
        cluster
            .release(binding.id)
            .expect("scheduler bindings are released once");
        Ok(self.admit_cycle(cluster))
    }

    /// Drops a pending workload without admitting it.
    pub fn cancel(&mut self, task_id: &str) -> Result<QueuedWorkload, SchedulerError> {
        match self.workloads.get(task_id) {
            Some(w) if w.state == WorkloadState::Pending => Ok(self.workloads.remove(task_id).expect("checked")),
            _ => Err(SchedulerError::UnknownWorkload(task_id.to_string())),
        }
    }

    pub fn status(&self) -> Vec<QueueStatus> {
        self.local_queues
            .iter()
            .map(|q| {
                let mine = self.workloads.values().filter(|w| w.local_queue == q.name);
                let (mut pending, mut admitted) = (0, 0);
                for w in mine {
                    match w.state {
                        WorkloadState::Pending => pending += 1,
                        WorkloadState::Admitted => admitted += 1,
                    }
                }
                QueueStatus {
                    queue: q.name.clone(),
                    cluster_queue: q.cluster_queue.clone(),
                    pending,
                    admitted,
                }
            })
            .collect()
    }

    /// Usage within quota everywhere, and usage equal to the admitted sum.
    pub fn check_quota(&self) -> Result<(), String> {
        for cq in &self.cluster_queues {
            if !cq.within_quota() {
                return Err(format!("cluster queue {} exceeds its quota", cq.name));
            }
            let mut expected: BTreeMap<String, ResourceVector> = BTreeMap::new();
            for w in self.workloads.values() {
                if w.state == WorkloadState::Admitted && w.cluster_queue == cq.name {
                    expected
                        .entry(w.flavor.clone().expect("admitted"))
                        .or_default()
                        .add(&w.effective);
                }
            }
            let actual: BTreeMap<String, ResourceVector> = cq
                .usage
                .iter()
                .filter(|(_, v)| !v.is_empty())
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            if actual != expected {
                return Err(format!("cluster queue {} usage drifted from admissions", cq.name));
            }
        }
        Ok(())
    }
}
