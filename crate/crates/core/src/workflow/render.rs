use crate::quantity::{format_quantity, ResourceVector};
use crate::yaml::Emit;

use super::model::*;
use super::parse::API_VERSION;

fn strs(items: &[String]) -> Emit {
    Emit::Seq(items.iter().map(Emit::str).collect())
}

fn string_map<'a>(m: impl IntoIterator<Item = (&'a String, &'a String)>) -> Emit {
    Emit::map(m.into_iter().map(|(k, v)| (k.clone(), Emit::str(v))))
}

fn vector(v: &ResourceVector) -> Emit {
    Emit::map(v.iter().map(|(k, q)| (k, Emit::str(format_quantity(k, q)))))
}

fn inputs(params: &[String]) -> Option<(&'static str, Emit)> {
    (!params.is_empty()).then(|| {
        (
            "inputs",
            Emit::map([(
                "parameters",
                Emit::Seq(params.iter().map(|p| Emit::map([("name", Emit::str(p))])).collect()),
            )]),
        )
    })
}

fn render_step(s: &StepRef) -> Emit {
    let mut e = vec![("name", Emit::str(&s.name)), ("template", Emit::str(&s.template))];
    if !s.arguments.is_empty() {
        let params = s
            .arguments
            .iter()
            .map(|(n, v)| Emit::map([("name", Emit::str(n)), ("value", Emit::str(v))]))
            .collect();
        e.push(("arguments", Emit::map([("parameters", Emit::Seq(params))])));
    }
    if let Some(n) = s.with_sequence {
        e.push(("withSequence", Emit::map([("count", Emit::Raw(n.to_string()))])));
    }
    Emit::map(e)
}

fn render_container(c: &ContainerTemplate) -> Emit {
    let mut t = vec![("name", Emit::str(&c.name))];
    if !c.labels.is_empty() {
        t.push(("metadata", Emit::map([("labels", string_map(&c.labels))])));
    }
    t.extend(inputs(&c.input_params));
    if !c.node_selector.is_empty() {
        t.push(("nodeSelector", string_map(&c.node_selector)));
    }
    if c.priority != 0 {
        t.push(("priority", Emit::Raw(c.priority.to_string())));
    }
    let mut body = vec![("image", Emit::str(&c.image))];
    if !c.command.is_empty() {
        body.push(("command", strs(&c.command)));
    }
    if !c.args.is_empty() {
        body.push(("args", strs(&c.args)));
    }
    if !c.env.is_empty() {
        let env = c
            .env
            .iter()
            .map(|(n, v)| Emit::map([("name", Emit::str(n)), ("value", Emit::str(v))]))
            .collect();
        body.push(("env", Emit::Seq(env)));
    }
    if !c.volume_mounts.is_empty() {
        let mounts = c
            .volume_mounts
            .iter()
            .map(|m| {
                let mut e = vec![("name", Emit::str(&m.name)), ("mountPath", Emit::str(&m.mount_path))];
                if m.read_only {
                    e.push(("readOnly", Emit::Raw("true".into())));
                }
                Emit::map(e)
            })
            .collect();
        body.push(("volumeMounts", Emit::Seq(mounts)));
    }
    let r = &c.resources;
    if *r != ResourceRequest::default() {
        let mut res = Vec::new();
        if !r.requests.is_empty() {
            res.push(("requests", vector(&r.requests)));
        }
        if !r.limits.is_empty() {
            res.push(("limits", vector(&r.limits)));
        }
        if !r.device_claims.is_empty() {
            let claims = r
                .device_claims
                .iter()
                .map(|dc| {
                    let mut e = vec![
                        ("className", Emit::str(&dc.class_name)),
                        ("count", Emit::Raw(dc.count.to_string())),
                    ];
                    if !dc.constraints.is_empty() {
                        e.push(("constraints", strs(&dc.constraints)));
                    }
                    Emit::map(e)
                })
                .collect();
            res.push(("deviceClaims", Emit::Seq(claims)));
        }
        body.push(("resources", Emit::map(res)));
    }
    t.push(("container", Emit::map(body)));
    Emit::map(t)
}

fn render_template(t: &Template) -> Emit {
    match t {
        Template::Container(c) => render_container(c),
        Template::Steps(s) => {
            let mut e = vec![("name", Emit::str(&s.name))];
            e.extend(inputs(&s.input_params));
            let groups = s
                .groups
                .iter()
                .map(|g| Emit::Seq(g.steps.iter().map(render_step).collect()))
                .collect();
            e.push(("steps", Emit::Seq(groups)));
            Emit::map(e)
        }
    }
}

/// Canonical YAML for `spec`; parsing the output yields an equal spec.
pub fn render_workflow(spec: &WorkflowSpec) -> String {
    let mut meta = vec![("name", Emit::str(&spec.name))];
    if let Some(ns) = &spec.namespace {
        meta.push(("namespace", Emit::str(ns)));
    }
    let mut body = vec![("entrypoint", Emit::str(&spec.entrypoint))];
    if !spec.volumes.is_empty() {
        let vols = spec
            .volumes
            .iter()
            .map(|v| {
                let source = match &v.source {
                    VolumeSource::PersistentVolumeClaim { claim_name } => (
                        "persistentVolumeClaim",
                        Emit::map([("claimName", Emit::str(claim_name))]),
                    ),
                    VolumeSource::Secret(s) => ("secret", Emit::map([("secretName", Emit::str(&s.secret_name))])),
                };
                Emit::map([("name", Emit::str(&v.name)), source])
            })
            .collect();
        body.push(("volumes", Emit::Seq(vols)));
    }
    body.push((
        "templates",
        Emit::Seq(spec.templates.iter().map(render_template).collect()),
    ));
    Emit::map([
        (
            "apiVersion",
            Emit::str(if spec.api_version.is_empty() {
                API_VERSION
            } else {
                &spec.api_version
            }),
        ),
        ("kind", Emit::str("Workflow")),
        ("metadata", Emit::map(meta)),
        ("spec", Emit::map(body)),
    ])
    .render()
}
