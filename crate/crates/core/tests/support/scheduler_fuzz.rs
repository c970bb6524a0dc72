//! Randomised enqueue/complete traffic against the sample cluster and
//! queues, checked after every event by a bookkeeping model that does not
//! consult the scheduler's own accounting.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use hqflow_core::assets::{sample_cluster, sample_queues};
use hqflow_core::cluster::Cluster;
use hqflow_core::quantity::ResourceVector;
use hqflow_core::scheduler::{Admission, QueueConfig, Scheduler, WorkloadRequest};
use hqflow_core::workflow::{DeviceClaimRequest, ResourceRequest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GIB: i64 = 1 << 30;
const MIB: i64 = 1 << 20;

#[derive(Debug, Clone, Copy, Default)]
pub struct FuzzStats {
    pub events: usize,
    pub enqueued: usize,
    pub admitted: usize,
    pub completed: usize,
    pub max_concurrent: usize,
}

struct Held {
    cluster_queue: String,
    flavor: String,
    node: String,
    need: ResourceVector,
    devices: Vec<String>,
}

fn class_resource(class: &str) -> &'static str {
    match class {
        "gpu" => "nvidia.com/gpu",
        "qpu" => "hqflow.io/qpu",
        other => panic!("unexpected class {other}"),
    }
}

/// What a request should cost, computed from its fields directly.
fn expected_need(r: &ResourceRequest) -> ResourceVector {
    let mut v = ResourceVector::new();
    for (k, a) in r.requests.iter() {
        v.add_one(k, a);
    }
    for c in &r.device_claims {
        v.add_one(class_resource(&c.class_name), i64::from(c.count));
    }
    v
}

fn random_request(rng: &mut ChaCha8Rng) -> (String, ResourceRequest) {
    let mut req = ResourceRequest::default();
    let queue = match rng.random_range(0..3) {
        0 => {
            req.requests.set("cpu", rng.random_range(1..=40) * 100);
            req.requests.set("memory", rng.random_range(1..=32) * 128 * MIB);
            "queue-cpu"
        }
        1 => {
            req.requests.set("cpu", rng.random_range(1..=16) * 1000);
            req.requests.set("memory", rng.random_range(1..=32) * GIB);
            req.requests.set("nvidia.com/gpu", rng.random_range(1..=2));
            "queue-gpu"
        }
        _ => {
            req.requests.set("cpu", 250);
            req.requests.set("memory", 256 * MIB);
            req.device_claims.push(DeviceClaimRequest {
                class_name: "qpu".into(),
                count: 1,
                constraints: vec!["shot_budget >= 4096".into()],
            });
            "queue-qpu"
        }
    };
    (queue.to_string(), req)
}

fn nominal(cfg: &QueueConfig, cq: &str, flavor: &str) -> (Vec<String>, ResourceVector) {
    for q in cfg.cluster_queues.iter().filter(|q| q.name == cq) {
        for g in &q.resource_groups {
            for f in &g.flavors {
                if f.flavor == flavor {
                    return (g.covered.clone(), f.nominal.clone());
                }
            }
        }
    }
    panic!("no quota for {cq}/{flavor}")
}

fn check(
    cluster: &Cluster,
    scheduler: &Scheduler,
    cfg: &QueueConfig,
    capacity: &BTreeMap<String, ResourceVector>,
    held: &BTreeMap<String, Held>,
) -> Result<(), String> {
    // Quota: admitted demand per (cluster queue, flavor) within nominal.
    let mut usage: BTreeMap<(String, String), ResourceVector> = BTreeMap::new();
    for h in held.values() {
        usage
            .entry((h.cluster_queue.clone(), h.flavor.clone()))
            .or_default()
            .add(&h.need);
    }
    for ((cq, flavor), used) in &usage {
        let (covered, quota) = nominal(cfg, cq, flavor);
        for res in covered {
            if used.get(&res) > quota.get(&res) {
                return Err(format!(
                    "{cq}/{flavor}: {res} used {} > quota {}",
                    used.get(&res),
                    quota.get(&res)
                ));
            }
        }
    }
    // Devices: never two holders.
    let mut owners = BTreeSet::new();
    for h in held.values() {
        for d in &h.devices {
            if !owners.insert((h.node.clone(), d.clone())) {
                return Err(format!("device {d} on {} allocated twice", h.node));
            }
        }
    }
    // Capacity: allocatable + held = capacity on every node.
    for node in cluster.nodes() {
        let mut total = node.allocatable.clone();
        for h in held.values().filter(|h| h.node == node.name) {
            total.add(&h.need);
        }
        if &total != capacity.get(&node.name).expect("known node") {
            return Err(format!("{}: allocatable + held = {total}, capacity differs", node.name));
        }
        if node.allocatable.iter().any(|(_, a)| a < 0) {
            return Err(format!("{}: negative allocatable {}", node.name, node.allocatable));
        }
    }
    // Scheduler-reported counts agree with the model.
    let admitted: usize = scheduler.status().iter().map(|s| s.admitted).sum();
    if admitted != held.len() {
        return Err(format!(
            "scheduler reports {admitted} admitted, model holds {}",
            held.len()
        ));
    }
    Ok(())
}

fn take(
    admissions: Vec<Admission>,
    scheduler: &Scheduler,
    requests: &BTreeMap<String, ResourceRequest>,
    held: &mut BTreeMap<String, Held>,
    stats: &mut FuzzStats,
) -> Result<(), String> {
    for a in admissions {
        let req = &requests[&a.task_id];
        let need = expected_need(req);
        if a.binding.resources != need {
            return Err(format!(
                "{}: bound {} but requested {need}",
                a.task_id, a.binding.resources
            ));
        }
        let w = scheduler.workload(&a.task_id).ok_or("admitted workload vanished")?;
        let h = Held {
            cluster_queue: w.cluster_queue.clone(),
            flavor: a.flavor.clone(),
            node: a.binding.node.clone(),
            need,
            devices: a.binding.devices.clone(),
        };
        if held.insert(a.task_id.clone(), h).is_some() {
            return Err(format!("{} admitted twice", a.task_id));
        }
        stats.admitted += 1;
    }
    stats.max_concurrent = stats.max_concurrent.max(held.len());
    Ok(())
}

/// Runs `events` random enqueue/complete events, then drains. Returns an
/// error describing the first violated property.
pub fn run(seed: u64, events: usize) -> Result<FuzzStats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cluster = sample_cluster();
    let cfg = sample_queues();
    let mut scheduler = Scheduler::new(cfg.clone()).map_err(|e| e.to_string())?;
    let capacity: BTreeMap<String, ResourceVector> = cluster
        .nodes()
        .iter()
        .map(|n| (n.name.clone(), n.capacity.clone()))
        .collect();
    let mut requests = BTreeMap::new();
    let mut held: BTreeMap<String, Held> = BTreeMap::new();
    let mut stats = FuzzStats::default();

    for i in 0..events {
        let complete = !held.is_empty() && rng.random_bool(0.45);
        if complete {
            let k = rng.random_range(0..held.len());
            let id = held.keys().nth(k).expect("in range").clone();
            held.remove(&id);
            let adm = scheduler.complete(&id, &mut cluster).map_err(|e| e.to_string())?;
            stats.completed += 1;
            take(adm, &scheduler, &requests, &mut held, &mut stats)?;
        } else {
            let (queue, request) = random_request(&mut rng);
            let id = format!("w{i}");
            requests.insert(id.clone(), request.clone());
            scheduler
                .enqueue(
                    WorkloadRequest {
                        task_id: id,
                        namespace: Some("quantum-workflows".into()),
                        queue,
                        request,
                        node_selector: BTreeMap::new(),
                        priority: rng.random_range(-1..=2),
                    },
                    &cluster,
                )
                .map_err(|e| e.to_string())?;
            stats.enqueued += 1;
            let adm = scheduler.admit_cycle(&mut cluster);
            take(adm, &scheduler, &requests, &mut held, &mut stats)?;
        }
        stats.events += 1;
        check(&cluster, &scheduler, &cfg, &capacity, &held).map_err(|e| format!("after event {i}: {e}"))?;
    }

    // Drain: complete everything, admitting what the freed quota allows,
    // then cancel whatever can never be admitted.
    while let Some(id) = held.keys().next().cloned() {
        held.remove(&id);
        let adm = scheduler.complete(&id, &mut cluster).map_err(|e| e.to_string())?;
        stats.completed += 1;
        take(adm, &scheduler, &requests, &mut held, &mut stats)?;
        check(&cluster, &scheduler, &cfg, &capacity, &held).map_err(|e| format!("during drain: {e}"))?;
    }
    let leftovers: Vec<String> = scheduler.workloads().map(|w| w.task_id.clone()).collect();
    for id in leftovers {
        scheduler.cancel(&id).map_err(|e| e.to_string())?;
    }
    for node in cluster.nodes() {
        if node.allocatable != capacity[&node.name] {
            return Err(format!("{} not restored after drain: {}", node.name, node.allocatable));
        }
        if node
            .devices
            .iter()
            .any(|d| d.state != hqflow_core::cluster::DeviceState::Free)
        {
            return Err(format!("{} has devices still allocated after drain", node.name));
        }
    }
    if cluster.active_bindings().next().is_some() {
        return Err("bindings remain after drain".into());
    }
    Ok(stats)
}
