//! Cluster definition files.

use std::collections::BTreeMap;

use super::{Cluster, ClusterError, Device, DeviceClass, DeviceState, Node, Timing, NS_PER_SECOND};
use crate::diag::{code, Diagnostics};
use crate::predicate::{Predicate, Scalar};
use crate::quantity::{parse_quantity, ResourceVector};
use crate::yaml::{parse_document, Node as Yaml};

pub const CLUSTER_API_VERSION: &str = "hqflow.io/v1";

/// Parses a `kind: Cluster` document.
pub fn parse_cluster(bytes: &[u8]) -> Result<Cluster, ClusterError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ClusterError(format!("not UTF-8: {e}")))?;
    let root = parse_document(text).map_err(|d| ClusterError(d.to_string()))?;
    let mut d = Diagnostics::default();
    let decoded = decode(&root, &mut d);
    match decoded {
        Some((classes, nodes)) if d.is_empty() => Cluster::new(classes, nodes),
        _ => Err(ClusterError(
            d.into_result(())
                .map_or_else(|d| d.to_string(), |_| "invalid cluster".into()),
        )),
    }
}

fn decode(root: &Yaml, d: &mut Diagnostics) -> Option<(Vec<DeviceClass>, Vec<Node>)> {
    let f = root.fields(d, "cluster", &["apiVersion", "kind", "deviceClasses", "nodes"])?;
    f.expect_str("apiVersion", &[CLUSTER_API_VERSION], d);
    f.expect_str("kind", &["Cluster"], d);
    let mut classes = Vec::new();
    for c in f
        .get("deviceClasses")
        .and_then(|c| c.as_seq(d, "deviceClasses"))
        .unwrap_or(&[])
    {
        let Some(cf) = c.fields(d, "device class", &["name", "resource", "selector"]) else {
            continue;
        };
        let mut selector = Vec::new();
        for s in cf.get("selector").and_then(|s| s.as_seq(d, "selector")).unwrap_or(&[]) {
            if let Some(text) = s.as_str(d, "selector") {
                match Predicate::parse(text) {
                    Ok(p) => selector.push(p),
                    Err(e) => d.push(s.pos, code::INVALID_VALUE, e.to_string()),
                }
            }
        }
        if let (Some(name), Some(resource)) = (cf.req_str("name", d), cf.req_str("resource", d)) {
            classes.push(DeviceClass {
                name,
                resource,
                selector,
            });
        }
    }

    let mut nodes = Vec::new();
    for n in f.require("nodes", d)?.as_seq(d, "nodes")? {
        if let Some(node) = decode_node(n, d) {
            nodes.push(node);
        }
    }
    Some((classes, nodes))
}

fn decode_node(n: &Yaml, d: &mut Diagnostics) -> Option<Node> {
    let nf = n.fields(
        d,
        "node",
        &["name", "labels", "schedulable", "capacity", "timing", "devices"],
    )?;
    let name = nf.req_str("name", d);
    let labels = match nf.get("labels") {
        Some(l) => l.string_map(d, "labels")?,
        None => BTreeMap::new(),
    };
    let schedulable = match nf.get("schedulable") {
        Some(s) => s.as_bool(d, "schedulable")?,
        None => true,
    };
    let mut capacity = ResourceVector::new();
    if let Some(cap) = nf.get("capacity").and_then(|c| c.fields(d, "capacity", &[])) {
        for (key, (_, v)) in &cap.entries {
            if let Some(text) = v.as_str(d, "capacity") {
                match parse_quantity(key, text) {
                    Ok(q) => capacity.set(key, q),
                    Err(e) => d.push(v.pos, code::INVALID_VALUE, e.to_string()),
                }
            }
        }
    }
    let mut timing = Timing::default_for(labels.get(super::RESOURCE_TYPE_LABEL).map(String::as_str));
    if let Some(t) = nf.get("timing") {
        let tf = t.fields(d, "timing", &["speedFactor", "queueDelaySeconds"])?;
        if let Some(s) = tf.get("speedFactor").and_then(|s| s.as_f64(d, "speedFactor")) {
            if s < 0.0 {
                d.push(
                    tf.key_pos("speedFactor"),
                    code::INVALID_VALUE,
                    "speedFactor must not be negative",
                );
            }
            timing.speed_factor = s;
        }
        if let Some(q) = tf
            .get("queueDelaySeconds")
            .and_then(|q| q.as_f64(d, "queueDelaySeconds"))
        {
            if q < 0.0 {
                d.push(
                    tf.key_pos("queueDelaySeconds"),
                    code::INVALID_VALUE,
                    "queueDelaySeconds must not be negative",
                );
            }
            timing.queue_delay_ns = (q * NS_PER_SECOND as f64).round() as u64;
        }
    }
    let mut devices = Vec::new();
    for dev in nf.get("devices").and_then(|x| x.as_seq(d, "devices")).unwrap_or(&[]) {
        let Some(df) = dev.fields(d, "device", &["id", "class", "attributes"]) else {
            continue;
        };
        let attributes = match df.get("attributes") {
            Some(a) => a
                .string_map(d, "attributes")?
                .into_iter()
                .map(|(k, v)| (k, Scalar::infer(&v)))
                .collect(),
            None => BTreeMap::new(),
        };
        if let (Some(id), Some(class_name)) = (df.req_str("id", d), df.req_str("class", d)) {
            devices.push(Device {
                id,
                class_name,
                attributes,
                state: DeviceState::Free,
            });
        }
    }
    Some(Node {
        name: name?,
        labels,
        schedulable,
        allocatable: capacity.clone(),
        capacity,
        devices,
        timing,
    })
}
