//! Multi-document queue configuration: ResourceFlavor, ClusterQueue and
//! LocalQueue objects.

use std::collections::BTreeMap;

use super::{ClusterQueue, FlavorQuota, LocalQueue, QueueConfig, ResourceFlavor, ResourceGroup, SchedulerError};
use crate::diag::{code, Diagnostics};
use crate::quantity::{parse_quantity, ResourceVector};
use crate::yaml::{parse_documents, Fields, Node};

pub const QUEUE_API_VERSION: &str = "kueue.x-k8s.io/v1beta1";

pub fn parse_queues(bytes: &[u8]) -> Result<QueueConfig, SchedulerError> {
    let text = std::str::from_utf8(bytes).map_err(|e| SchedulerError::Config(format!("not UTF-8: {e}")))?;
    let docs = parse_documents(text).map_err(|d| SchedulerError::Config(d.to_string()))?;
    let mut d = Diagnostics::default();
    let mut cfg = QueueConfig::default();
    for doc in &docs {
        if doc.is_null() {
            continue;
        }
        decode_object(doc, &mut d, &mut cfg);
    }
    d.into_result(cfg).map_err(|d| SchedulerError::Config(d.to_string()))
}

fn decode_object(doc: &Node, d: &mut Diagnostics, cfg: &mut QueueConfig) {
    let Some(f) = doc.fields(d, "object", &["apiVersion", "kind", "metadata", "spec"]) else {
        return;
    };
    f.expect_str("apiVersion", &[QUEUE_API_VERSION], d);
    let Some(kind) = f.expect_str("kind", &["ResourceFlavor", "ClusterQueue", "LocalQueue"], d) else {
        return;
    };
    let meta = f
        .require("metadata", d)
        .and_then(|m| m.fields(d, "metadata", &["name", "namespace"]));
    let Some(meta) = meta else { return };
    let Some(name) = meta.req_str("name", d) else { return };
    let spec = f.get("spec");
    match kind.as_str() {
        "ResourceFlavor" => {
            let mut node_selector = BTreeMap::new();
            if let Some(sf) = spec.and_then(|s| s.fields(d, "ResourceFlavor spec", &["nodeSelector"])) {
                if let Some(sel) = sf.get("nodeSelector").and_then(|n| n.string_map(d, "nodeSelector")) {
                    node_selector = sel;
                }
            }
            cfg.flavors.push(ResourceFlavor { name, node_selector });
        }
        "ClusterQueue" => {
            let Some(sf) = spec.and_then(|s| s.fields(d, "ClusterQueue spec", &["queueingStrategy", "resourceGroups"]))
            else {
                d.push(f.pos, code::MISSING_FIELD, "ClusterQueue needs a spec");
                return;
            };
            if sf.get("queueingStrategy").is_some() {
                sf.expect_str("queueingStrategy", &["BestEffortFIFO"], d);
            }
            let groups = sf
                .get("resourceGroups")
                .and_then(|g| g.as_seq(d, "resourceGroups"))
                .unwrap_or(&[])
                .iter()
                .filter_map(|g| decode_group(g, d))
                .collect();
            cfg.cluster_queues.push(ClusterQueue {
                name,
                resource_groups: groups,
                usage: BTreeMap::new(),
            });
        }
        _ => {
            let namespace = meta.opt_str("namespace", d).unwrap_or_else(|| "default".into());
            let cq = spec
                .and_then(|s| s.fields(d, "LocalQueue spec", &["clusterQueue"]))
                .and_then(|sf: Fields| sf.req_str("clusterQueue", d));
            if let Some(cluster_queue) = cq {
                cfg.local_queues.push(LocalQueue {
                    namespace,
                    name,
                    cluster_queue,
                });
            } else if spec.is_none() {
                d.push(f.pos, code::MISSING_FIELD, "LocalQueue needs spec.clusterQueue");
            }
        }
    }
}

fn decode_group(g: &Node, d: &mut Diagnostics) -> Option<ResourceGroup> {
    let gf = g.fields(d, "resource group", &["coveredResources", "flavors"])?;
    let mut covered = Vec::new();
    for c in gf.require("coveredResources", d)?.as_seq(d, "coveredResources")? {
        covered.push(c.as_str(d, "coveredResources")?.to_string());
    }
    let mut flavors = Vec::new();
    for fl in gf.require("flavors", d)?.as_seq(d, "flavors")? {
        let ff = fl.fields(d, "flavor quota", &["name", "resources"])?;
        let flavor = ff.req_str("name", d)?;
        let mut nominal = ResourceVector::new();
        for r in ff
            .get("resources")
            .and_then(|r| r.as_seq(d, "resources"))
            .unwrap_or(&[])
        {
            let rf = r.fields(d, "resource quota", &["name", "nominalQuota"])?;
            let (Some(res), Some(q)) = (rf.req_str("name", d), rf.req_str("nominalQuota", d)) else {
                continue;
            };
            if !covered.contains(&res) {
                d.push(
                    r.pos,
                    code::INVALID_VALUE,
                    format!("quota for uncovered resource `{res}`"),
                );
            }
            match parse_quantity(&res, &q) {
                Ok(v) => nominal.set(&res, v),
                Err(e) => d.push(r.pos, code::INVALID_VALUE, e.to_string()),
            }
        }
        flavors.push(FlavorQuota { flavor, nominal });
    }
    Some(ResourceGroup { covered, flavors })
}
