//! Strict decoding of workflow documents.
//!
//! Decoding and validation share one diagnostics list so a document with
//! several problems reports all of them at once.

use std::collections::{BTreeMap, BTreeSet};

use crate::diag::{code, Diagnostics, Pos};
use crate::predicate::Predicate;
use crate::quantity::{parse_quantity, ResourceVector};
use crate::yaml::{parse_document, Fields, Node};

use super::model::*;
use super::params::{placeholders, Placeholder};
use super::WorkflowError;

pub const API_VERSION: &str = "argoproj.io/v1alpha1";

/// Positions kept aside for checks that need the whole document.
#[derive(Default)]
struct Spans {
    entrypoint: Pos,
    templates: Vec<TemplateSpans>,
}

#[derive(Default)]
struct TemplateSpans {
    name: Pos,
    /// Per group, per step.
    steps: Vec<Vec<StepSpans>>,
}

#[derive(Default, Clone, Copy)]
struct StepSpans {
    name: Pos,
    template: Pos,
    arguments: Pos,
}

/// Parses and validates a workflow document.
pub fn parse_workflow(bytes: &[u8]) -> Result<WorkflowSpec, WorkflowError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let mut d = Diagnostics::default();
        d.push(
            Pos { line: 1, col: 1 },
            code::SYNTAX,
            format!("document is not UTF-8: {e}"),
        );
        WorkflowError::Syntax(d)
    })?;
    let root = parse_document(text).map_err(WorkflowError::Syntax)?;
    let mut d = Diagnostics::default();
    let mut spans = Spans::default();
    let spec = decode_root(&root, &mut d, &mut spans);
    if let Some(spec) = &spec {
        check_references(spec, &spans, &mut d);
    }
    match (spec, d.is_empty()) {
        (Some(spec), true) => Ok(spec),
        (_, _) => {
            if d.is_empty() {
                d.push(root.pos, code::INVALID_VALUE, "document could not be decoded");
            }
            Err(WorkflowError::Validation(d.into_result(()).unwrap_err()))
        }
    }
}

/// Re-validates an already built spec, e.g. one constructed in code.
pub fn validate_spec(spec: &WorkflowSpec) -> Result<(), Diagnostics> {
    let rendered = super::render::render_workflow(spec);
    match parse_workflow(rendered.as_bytes()) {
        Ok(_) => Ok(()),
        Err(WorkflowError::Syntax(d)) | Err(WorkflowError::Validation(d)) => Err(d),
    }
}

fn is_dns_name(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 253
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '.')
        && s.starts_with(|c: char| c.is_ascii_alphanumeric())
        && s.ends_with(|c: char| c.is_ascii_alphanumeric())
}

fn is_param_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn name_field(f: &Fields, d: &mut Diagnostics, what: &str) -> Option<String> {
    let name = f.req_str("name", d)?;
    if !is_dns_name(&name) {
        d.push(
            f.get("name").map(|n| n.pos).unwrap_or(f.pos),
            code::INVALID_VALUE,
            format!("{what} name {name:?} must be lowercase alphanumerics, '-' or '.'"),
        );
    }
    Some(name)
}

fn decode_root(root: &Node, d: &mut Diagnostics, spans: &mut Spans) -> Option<WorkflowSpec> {
    let f = root.fields(d, "document", &["apiVersion", "kind", "metadata", "spec"])?;
    let api_version = f.expect_str("apiVersion", &[API_VERSION], d);
    f.expect_str("kind", &["Workflow"], d);
    let meta = f
        .require("metadata", d)
        .and_then(|m| m.fields(d, "metadata", &["name", "namespace"]));
    let name = meta.as_ref().and_then(|m| name_field(m, d, "workflow"));
    let namespace = meta.as_ref().and_then(|m| m.opt_str("namespace", d));
    let body = f
        .require("spec", d)
        .and_then(|s| s.fields(d, "spec", &["entrypoint", "volumes", "templates"]))?;
    spans.entrypoint = body.get("entrypoint").map(|n| n.pos).unwrap_or(body.pos);
    let entrypoint = body.req_str("entrypoint", d);

    let mut volumes = Vec::new();
    if let Some(items) = body.get("volumes").and_then(|v| v.as_seq(d, "spec.volumes")) {
        let mut seen = BTreeSet::new();
        for item in items {
            if let Some(v) = decode_volume(item, d) {
                if !seen.insert(v.name.clone()) {
                    d.push(item.pos, code::DUPLICATE_NAME, format!("duplicate volume `{}`", v.name));
                }
                volumes.push(v);
            }
        }
    }

    let mut templates = Vec::new();
    let mut all_ok = true;
    if let Some(items) = body.require("templates", d).and_then(|t| t.as_seq(d, "spec.templates")) {
        for item in items {
            let mut ts = TemplateSpans {
                name: item.pos,
                ..Default::default()
            };
            match decode_template(item, &volumes, d, &mut ts) {
                Some(t) => {
                    templates.push(t);
                    spans.templates.push(ts);
                }
                None => all_ok = false,
            }
        }
    } else {
        all_ok = false;
    }

    if !all_ok {
        return None;
    }
    Some(WorkflowSpec {
        api_version: api_version?,
        name: name?,
        namespace,
        entrypoint: entrypoint?,
        volumes,
        templates,
    })
}

fn decode_volume(node: &Node, d: &mut Diagnostics) -> Option<VolumeDecl> {
    let f = node.fields(d, "volume", &["name", "persistentVolumeClaim", "secret"])?;
    let name = name_field(&f, d, "volume");
    let pvc = f.get("persistentVolumeClaim");
    let secret = f.get("secret");
    let source = match (pvc, secret) {
        (Some(p), None) => {
            let pf = p.fields(d, "persistentVolumeClaim", &["claimName"])?;
            VolumeSource::PersistentVolumeClaim {
                claim_name: pf.req_str("claimName", d)?,
            }
        }
        (None, Some(s)) => {
            let sf = s.fields(d, "secret", &["secretName"])?;
            VolumeSource::Secret(SecretRef {
                secret_name: sf.req_str("secretName", d)?,
            })
        }
        (Some(_), Some(_)) => {
            d.push(
                f.pos,
                code::INVALID_VALUE,
                "volume must have exactly one source, found two",
            );
            return None;
        }
        (None, None) => {
            d.push(
                f.pos,
                code::MISSING_FIELD,
                "volume needs `persistentVolumeClaim` or `secret`",
            );
            return None;
        }
    };
    Some(VolumeDecl { name: name?, source })
}

fn decode_inputs(f: &Fields, d: &mut Diagnostics) -> Option<Vec<String>> {
    let Some(inputs) = f.get("inputs") else {
        return Some(Vec::new());
    };
    let inf = inputs.fields(d, "inputs", &["parameters"])?;
    let mut out = Vec::new();
    let mut ok = true;
    for p in inf
        .get("parameters")
        .and_then(|p| p.as_seq(d, "inputs.parameters"))
        .unwrap_or(&[])
    {
        let Some(pf) = p.fields(d, "input parameter", &["name"]) else {
            ok = false;
            continue;
        };
        let Some(name) = pf.req_str("name", d) else {
            ok = false;
            continue;
        };
        if !is_param_name(&name) {
            d.push(p.pos, code::INVALID_VALUE, format!("invalid parameter name {name:?}"));
        }
        if out.contains(&name) {
            d.push(
                p.pos,
                code::DUPLICATE_NAME,
                format!("duplicate input parameter `{name}`"),
            );
        }
        out.push(name);
    }
    ok.then_some(out)
}

fn decode_template(
    node: &Node,
    volumes: &[VolumeDecl],
    d: &mut Diagnostics,
    ts: &mut TemplateSpans,
) -> Option<Template> {
    // Decide the variant first so the allowed key set is precise.
    let keys: BTreeSet<&str> = match &node.value {
        crate::yaml::Value::Map(pairs) => pairs
            .iter()
            .filter_map(|(k, _)| match &k.value {
                crate::yaml::Value::Scalar { text, .. } => Some(text.as_str()),
                _ => None,
            })
            .collect(),
        _ => BTreeSet::new(),
    };
    let is_steps = keys.contains("steps");
    let is_container = keys.contains("container");
    if is_steps && is_container {
        d.push(
            node.pos,
            code::INVALID_VALUE,
            "template has both `steps` and `container`",
        );
        return None;
    }
    if is_steps {
        let f = node.fields(d, "steps template", &["name", "inputs", "steps"])?;
        ts.name = f.get("name").map(|n| n.pos).unwrap_or(f.pos);
        let name = name_field(&f, d, "template");
        let inputs = decode_inputs(&f, d);
        let groups = decode_groups(f.entries["steps"].1, inputs.as_deref().unwrap_or(&[]), d, ts);
        Some(Template::Steps(StepsTemplate {
            name: name?,
            input_params: inputs?,
            groups: groups?,
        }))
    } else {
        let f = node.fields(
            d,
            "template",
            &["name", "metadata", "inputs", "nodeSelector", "priority", "container"],
        )?;
        ts.name = f.get("name").map(|n| n.pos).unwrap_or(f.pos);
        let name = name_field(&f, d, "template");
        if !is_container {
            d.push(
                f.pos,
                code::MISSING_FIELD,
                format!(
                    "template `{}` needs `steps` or `container`",
                    name.as_deref().unwrap_or("?")
                ),
            );
            return None;
        }
        decode_container_template(&f, name, volumes, d).map(Template::Container)
    }
}

fn decode_groups(
    node: &Node,
    inputs: &[String],
    d: &mut Diagnostics,
    ts: &mut TemplateSpans,
) -> Option<Vec<StepGroup>> {
    let groups = node.as_seq(d, "steps")?;
    let mut out = Vec::new();
    let mut ok = true;
    let mut seen = BTreeSet::new();
    for g in groups {
        let Some(items) = g.as_seq(d, "step group") else {
            ok = false;
            continue;
        };
        let mut group = StepGroup::default();
        let mut gspans = Vec::new();
        for item in items {
            let mut sp = StepSpans::default();
            match decode_step(item, inputs, d, &mut sp) {
                Some(step) => {
                    if !seen.insert(step.name.clone()) {
                        d.push(
                            sp.name,
                            code::DUPLICATE_NAME,
                            format!("duplicate step name `{}`", step.name),
                        );
                    }
                    group.steps.push(step);
                    gspans.push(sp);
                }
                None => ok = false,
            }
        }
        out.push(group);
        ts.steps.push(gspans);
    }
    ok.then_some(out)
}

fn decode_step(node: &Node, inputs: &[String], d: &mut Diagnostics, sp: &mut StepSpans) -> Option<StepRef> {
    let f = node.fields(d, "step", &["name", "template", "arguments", "withSequence"])?;
    sp.name = f.get("name").map(|n| n.pos).unwrap_or(f.pos);
    sp.template = f.get("template").map(|n| n.pos).unwrap_or(f.pos);
    sp.arguments = f.get("arguments").map(|n| n.pos).unwrap_or(f.pos);
    let name = name_field(&f, d, "step");
    let template = f.req_str("template", d);

    let with_sequence = match f.get("withSequence") {
        None => None,
        Some(ws) => {
            let wf = ws.fields(d, "withSequence", &["count"])?;
            Some(wf.require("count", d)?.as_u64(d, "withSequence.count")?)
        }
    };

    let mut arguments = Vec::new();
    let mut ok = true;
    if let Some(args) = f.get("arguments") {
        let af = args.fields(d, "arguments", &["parameters"])?;
        for p in af
            .get("parameters")
            .and_then(|p| p.as_seq(d, "arguments.parameters"))
            .unwrap_or(&[])
        {
            let Some(pf) = p.fields(d, "argument", &["name", "value"]) else {
                ok = false;
                continue;
            };
            let (Some(pname), Some(value)) = (pf.req_str("name", d), pf.req_str("value", d)) else {
                ok = false;
                continue;
            };
            if arguments.iter().any(|(n, _)| *n == pname) {
                d.push(p.pos, code::DUPLICATE_NAME, format!("duplicate argument `{pname}`"));
            }
            let vpos = pf.get("value").map(|n| n.pos).unwrap_or(p.pos);
            for ph in placeholders(&value) {
                match ph {
                    Placeholder::Item if with_sequence.is_none() => {
                        d.push(vpos, code::UNDECLARED_PARAMETER, "`{{item}}` used outside withSequence")
                    }
                    Placeholder::Item => {}
                    Placeholder::Input(x) if !inputs.contains(&x) => d.push(
                        vpos,
                        code::UNDECLARED_PARAMETER,
                        format!("placeholder references undeclared input parameter `{x}`"),
                    ),
                    Placeholder::Input(_) => {}
                    Placeholder::Unknown(x) => d.push(
                        vpos,
                        code::UNDECLARED_PARAMETER,
                        format!("unsupported placeholder `{x}`"),
                    ),
                }
            }
            arguments.push((pname, value));
        }
    }
    if !ok {
        return None;
    }
    Some(StepRef {
        name: name?,
        template: template?,
        arguments,
        with_sequence,
    })
}

fn check_tokens(tokens: &[(String, Pos)], inputs: &[String], d: &mut Diagnostics) {
    for (tok, pos) in tokens {
        for ph in placeholders(tok) {
            let msg = match ph {
                Placeholder::Input(x) if inputs.contains(&x) => continue,
                Placeholder::Input(x) => {
                    format!("placeholder references undeclared input parameter `{x}`")
                }
                Placeholder::Item => "`{{item}}` is only valid in step arguments".to_string(),
                Placeholder::Unknown(x) => format!("unsupported placeholder `{x}`"),
            };
            d.push(*pos, code::UNDECLARED_PARAMETER, msg);
        }
    }
}

fn string_list(node: Option<&Node>, d: &mut Diagnostics, what: &str) -> Option<Vec<(String, Pos)>> {
    let Some(node) = node else {
        return Some(Vec::new());
    };
    let items = node.as_seq(d, what)?;
    let mut out = Vec::new();
    for item in items {
        out.push((item.as_str(d, what)?.to_string(), item.pos));
    }
    Some(out)
}

fn decode_container_template(
    f: &Fields,
    name: Option<String>,
    volumes: &[VolumeDecl],
    d: &mut Diagnostics,
) -> Option<ContainerTemplate> {
    let inputs = decode_inputs(f, d);
    let labels = match f.get("metadata") {
        None => Some(BTreeMap::new()),
        Some(m) => m
            .fields(d, "template metadata", &["labels"])
            .and_then(|mf| match mf.get("labels") {
                None => Some(BTreeMap::new()),
                Some(l) => l.string_map(d, "labels"),
            }),
    };
    let node_selector = match f.get("nodeSelector") {
        None => Some(BTreeMap::new()),
        Some(n) => n.string_map(d, "nodeSelector"),
    };
    let priority = match f.get("priority") {
        None => Some(0),
        Some(p) => p.as_str(d, "priority").and_then(|s| match s.trim().parse::<i32>() {
            Ok(v) => Some(v),
            Err(_) => {
                d.push(
                    p.pos,
                    code::INVALID_VALUE,
                    format!("priority must be an integer, found {s:?}"),
                );
                None
            }
        }),
    };

    let c = f.entries["container"].1.fields(
        d,
        "container",
        &["image", "command", "args", "env", "volumeMounts", "resources"],
    )?;
    let image = c.req_str("image", d);
    let command = string_list(c.get("command"), d, "container.command");
    let args = string_list(c.get("args"), d, "container.args");

    let mut env = Vec::new();
    let mut env_tokens = Vec::new();
    let mut ok = true;
    for e in c.get("env").and_then(|e| e.as_seq(d, "container.env")).unwrap_or(&[]) {
        let Some(ef) = e.fields(d, "env entry", &["name", "value"]) else {
            ok = false;
            continue;
        };
        let (Some(n), Some(v)) = (ef.req_str("name", d), ef.req_str("value", d)) else {
            ok = false;
            continue;
        };
        if env.iter().any(|(k, _): &(String, String)| *k == n) {
            d.push(e.pos, code::DUPLICATE_NAME, format!("duplicate env variable `{n}`"));
        }
        env_tokens.push((v.clone(), ef.get("value").map(|n| n.pos).unwrap_or(e.pos)));
        env.push((n, v));
    }

    let mut volume_mounts = Vec::new();
    for m in c
        .get("volumeMounts")
        .and_then(|m| m.as_seq(d, "container.volumeMounts"))
        .unwrap_or(&[])
    {
        let Some(mf) = m.fields(d, "volume mount", &["name", "mountPath", "readOnly"]) else {
            ok = false;
            continue;
        };
        let vname = mf.req_str("name", d);
        let path = mf.req_str("mountPath", d);
        let read_only = match mf.get("readOnly") {
            None => Some(false),
            Some(r) => r.as_bool(d, "readOnly"),
        };
        let (Some(vname), Some(path), Some(read_only)) = (vname, path, read_only) else {
            ok = false;
            continue;
        };
        if !volumes.iter().any(|v| v.name == vname) {
            d.push(
                mf.get("name").map(|n| n.pos).unwrap_or(m.pos),
                code::UNKNOWN_VOLUME,
                format!("volume mount references undeclared volume `{vname}`"),
            );
        }
        if !path.starts_with('/') {
            d.push(
                m.pos,
                code::INVALID_VALUE,
                format!("mountPath {path:?} must be absolute"),
            );
        }
        volume_mounts.push(VolumeMount {
            name: vname,
            mount_path: path,
            read_only,
        });
    }

    let resources = match c.get("resources") {
        None => Some(ResourceRequest::default()),
        Some(r) => decode_resources(r, d),
    };

    if let (Some(inputs), Some(command), Some(args)) = (&inputs, &command, &args) {
        check_tokens(command, inputs, d);
        check_tokens(args, inputs, d);
        check_tokens(&env_tokens, inputs, d);
    }

    if !ok {
        return None;
    }
    let strip = |v: Vec<(String, Pos)>| v.into_iter().map(|(s, _)| s).collect();
    Some(ContainerTemplate {
        name: name?,
        labels: labels?,
        input_params: inputs?,
        node_selector: node_selector?,
        priority: priority?,
        image: image?,
        command: strip(command?),
        args: strip(args?),
        env,
        volume_mounts,
        resources: resources?,
    })
}

fn decode_vector(node: Option<&Node>, d: &mut Diagnostics, what: &str) -> Option<ResourceVector> {
    let mut out = ResourceVector::new();
    let Some(node) = node else {
        return Some(out);
    };
    let f = node.fields(d, what, &[])?;
    let mut ok = true;
    for (key, (_, v)) in &f.entries {
        let Some(text) = v.as_str(d, &format!("{what}.{key}")) else {
            ok = false;
            continue;
        };
        match parse_quantity(key, text) {
            Ok(q) if q >= 0 => out.set(key, q),
            Ok(_) => {
                d.push(v.pos, code::INVALID_VALUE, format!("{what}.{key} must not be negative"));
                ok = false;
            }
            Err(e) => {
                d.push(v.pos, code::INVALID_VALUE, format!("{what}.{key}: {e}"));
                ok = false;
            }
        }
    }
    ok.then_some(out)
}

fn decode_resources(node: &Node, d: &mut Diagnostics) -> Option<ResourceRequest> {
    let f = node.fields(d, "resources", &["requests", "limits", "deviceClaims"])?;
    let requests = decode_vector(f.get("requests"), d, "requests");
    let limits = decode_vector(f.get("limits"), d, "limits");
    if let (Some(req), Some(lim)) = (&requests, &limits) {
        for (res, l) in lim.iter() {
            let r = req.get(res);
            if req.0.contains_key(res) && l < r {
                d.push(
                    f.key_pos("limits"),
                    code::LIMIT_BELOW_REQUEST,
                    format!("limit for `{res}` is below its request"),
                );
            }
        }
    }
    let mut claims = Vec::new();
    let mut ok = true;
    for c in f
        .get("deviceClaims")
        .and_then(|c| c.as_seq(d, "deviceClaims"))
        .unwrap_or(&[])
    {
        let Some(cf) = c.fields(d, "device claim", &["className", "count", "constraints"]) else {
            ok = false;
            continue;
        };
        let class = cf.req_str("className", d);
        let count = match cf.get("count") {
            None => Some(1),
            Some(n) => n.as_u64(d, "count").and_then(|v| match u32::try_from(v) {
                Ok(v) => Some(v),
                Err(_) => {
                    d.push(n.pos, code::INVALID_VALUE, "device claim count is too large");
                    None
                }
            }),
        };
        let mut constraints = Vec::new();
        for item in cf
            .get("constraints")
            .and_then(|x| x.as_seq(d, "constraints"))
            .unwrap_or(&[])
        {
            if let Some(text) = item.as_str(d, "constraint") {
                if let Err(e) = Predicate::parse(text) {
                    d.push(item.pos, code::INVALID_VALUE, e.to_string());
                }
                constraints.push(text.to_string());
            }
        }
        match (class, count) {
            (Some(class_name), Some(count)) => claims.push(DeviceClaimRequest {
                class_name,
                count,
                constraints,
            }),
            _ => ok = false,
        }
    }
    if !ok {
        return None;
    }
    Some(ResourceRequest {
        requests: requests?,
        limits: limits?,
        device_claims: claims,
    })
}

/// Checks that need every template: names, references, arguments, cycles.
fn check_references(spec: &WorkflowSpec, spans: &Spans, d: &mut Diagnostics) {
    let mut by_name: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, t) in spec.templates.iter().enumerate() {
        // The first definition wins so later duplicates cannot mask a cycle.
        if by_name.contains_key(t.name()) {
            d.push(
                spans.templates[i].name,
                code::DUPLICATE_NAME,
                format!("duplicate template name `{}`", t.name()),
            );
        } else {
            by_name.insert(t.name(), i);
        }
    }
    match by_name.get(spec.entrypoint.as_str()) {
        None => d.push(
            spans.entrypoint,
            code::UNKNOWN_ENTRYPOINT,
            format!("entrypoint `{}` names no template", spec.entrypoint),
        ),
        Some(&i) if !spec.templates[i].input_params().is_empty() => d.push(
            spans.entrypoint,
            code::UNDECLARED_PARAMETER,
            format!("entrypoint `{}` declares inputs that nothing can bind", spec.entrypoint),
        ),
        Some(_) => {}
    }

    for (ti, t) in spec.templates.iter().enumerate() {
        let Template::Steps(st) = t else { continue };
        for (gi, g) in st.groups.iter().enumerate() {
            for (si, step) in g.steps.iter().enumerate() {
                let sp = spans.templates[ti].steps[gi][si];
                let Some(&target) = by_name.get(step.template.as_str()) else {
                    d.push(
                        sp.template,
                        code::UNKNOWN_TEMPLATE,
                        format!("step `{}` references unknown template `{}`", step.name, step.template),
                    );
                    continue;
                };
                let declared = spec.templates[target].input_params();
                for (arg, _) in &step.arguments {
                    if !declared.contains(arg) {
                        d.push(
                            sp.arguments,
                            code::UNKNOWN_REFERENCE,
                            format!("template `{}` has no input parameter `{arg}`", step.template),
                        );
                    }
                }
                for p in declared {
                    if !step.arguments.iter().any(|(a, _)| a == p) {
                        d.push(
                            sp.name,
                            code::MISSING_FIELD,
                            format!("step `{}` does not bind input parameter `{p}`", step.name),
                        );
                    }
                }
            }
        }
    }

    check_cycles(spec, &by_name, spans, d);
}

fn check_cycles(spec: &WorkflowSpec, by_name: &BTreeMap<&str, usize>, spans: &Spans, d: &mut Diagnostics) {
    // 0 = unvisited, 1 = on the stack, 2 = done.
    let mut color = vec![0u8; spec.templates.len()];
    for start in 0..spec.templates.len() {
        if color[start] != 0 {
            continue;
        }
        // Iterative DFS; each frame is (template, flat step cursor).
        let mut stack = vec![(start, 0usize)];
        color[start] = 1;
        while let Some(&mut (t, ref mut cursor)) = stack.last_mut() {
            let steps: Vec<(&StepRef, StepSpans)> = match &spec.templates[t] {
                Template::Steps(st) => st
                    .groups
                    .iter()
                    .enumerate()
                    .flat_map(|(gi, g)| g.steps.iter().enumerate().map(move |(si, s)| (s, (gi, si))))
                    .map(|(s, (gi, si))| (s, spans.templates[t].steps[gi][si]))
                    .collect(),
                Template::Container(_) => Vec::new(),
            };
            if *cursor >= steps.len() {
                color[t] = 2;
                stack.pop();
                continue;
            }
            let (step, sp) = steps[*cursor];
            *cursor += 1;
            let Some(&next) = by_name.get(step.template.as_str()) else {
                continue;
            };
            match color[next] {
                0 => {
                    color[next] = 1;
                    stack.push((next, 0));
                }
                1 => d.push(
                    sp.template,
                    code::CYCLE,
                    format!(
                        "step `{}` in template `{}` closes a cycle through `{}`",
                        step.name,
                        spec.templates[t].name(),
                        step.template
                    ),
                ),
                _ => {}
            }
        }
    }
}
