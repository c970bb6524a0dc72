use std::collections::BTreeMap;

use super::model::*;
use super::params::{substitute_argument, substitute_params};
use super::ExpansionError;

/// One fully substituted, schedulable task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskNode {
    /// Step path, e.g. `execute-subcircuits-cpu(17)` or `outer/inner(2)`.
    pub id: String,
    pub template: String,
    pub params: BTreeMap<String, String>,
    pub image: String,
    pub command: Vec<String>,
    pub args: Vec<String>,
    pub env: Vec<(String, String)>,
    pub volume_mounts: Vec<VolumeMount>,
    pub resources: ResourceRequest,
    pub node_selector: BTreeMap<String, String>,
    pub queue_label: Option<String>,
    pub priority: i32,
}

/// Nodes in creation order, which is also a topological order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskGraph {
    pub nodes: Vec<TaskNode>,
    /// Sorted predecessor indices per node.
    pub preds: Vec<Vec<usize>>,
}

impl TaskGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn edge_count(&self) -> usize {
        self.preds.iter().map(Vec::len).sum()
    }

    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for (i, ps) in self.preds.iter().enumerate() {
            for &p in ps {
                out[p].push(i);
            }
        }
        out
    }

    /// Kahn's algorithm; `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let succ = self.successors();
        let mut indegree: Vec<usize> = self.preds.iter().map(Vec::len).collect();
        let mut ready: std::collections::VecDeque<usize> = (0..self.len()).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(i) = ready.pop_front() {
            order.push(i);
            for &s in &succ[i] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.push_back(s);
                }
            }
        }
        (order.len() == self.len()).then_some(order)
    }
}

/// Expands the entrypoint into a task graph. Step groups are full
/// barriers; a group that yields no tasks is transparent.
pub fn expand_dag(spec: &WorkflowSpec) -> Result<TaskGraph, ExpansionError> {
    let mut graph = TaskGraph::default();
    let entry = spec
        .template(&spec.entrypoint)
        .ok_or_else(|| ExpansionError::UnknownTemplate(spec.entrypoint.clone()))?;
    let mut active = Vec::new();
    expand(
        spec,
        entry,
        &BTreeMap::new(),
        &spec.entrypoint,
        &[],
        &mut graph,
        &mut active,
    )?;
    Ok(graph)
}

/// Returns the exit nodes created by this call, never the incoming ones.
fn expand(
    spec: &WorkflowSpec,
    template: &Template,
    bindings: &BTreeMap<String, String>,
    id: &str,
    preds: &[usize],
    graph: &mut TaskGraph,
    active: &mut Vec<String>,
) -> Result<Vec<usize>, ExpansionError> {
    for p in template.input_params() {
        if !bindings.contains_key(p) {
            return Err(ExpansionError::Unbound {
                placeholder: format!("{{{{inputs.parameters.{p}}}}}"),
            });
        }
    }
    match template {
        Template::Container(c) => {
            let env_values: Vec<String> = c.env.iter().map(|(_, v)| v.clone()).collect();
            let env = c
                .env
                .iter()
                .map(|(n, _)| n.clone())
                .zip(substitute_params(&env_values, bindings)?)
                .collect();
            graph.nodes.push(TaskNode {
                id: id.to_string(),
                template: c.name.clone(),
                params: bindings.clone(),
                image: c.image.clone(),
                command: substitute_params(&c.command, bindings)?,
                args: substitute_params(&c.args, bindings)?,
                env,
                volume_mounts: c.volume_mounts.clone(),
                resources: c.resources.clone(),
                node_selector: c.node_selector.clone(),
                queue_label: c.queue_label().map(str::to_string),
                priority: c.priority,
            });
            graph.preds.push(preds.to_vec());
            Ok(vec![graph.nodes.len() - 1])
        }
        Template::Steps(st) => {
            if active.contains(&st.name) {
                return Err(ExpansionError::Cycle(st.name.clone()));
            }
            active.push(st.name.clone());
            let mut frontier = preds.to_vec();
            let mut created = Vec::new();
            for group in &st.groups {
                let mut exits = Vec::new();
                for step in &group.steps {
                    let target = spec
                        .template(&step.template)
                        .ok_or_else(|| ExpansionError::UnknownTemplate(step.template.clone()))?;
                    let items: Vec<Option<u64>> = match step.with_sequence {
                        Some(n) => (0..n).map(Some).collect(),
                        None => vec![None],
                    };
                    for item in items {
                        let mut child = BTreeMap::new();
                        for (name, value) in &step.arguments {
                            child.insert(name.clone(), substitute_argument(value, bindings, item)?);
                        }
                        let local = match item {
                            Some(i) => format!("{}({i})", step.name),
                            None => step.name.clone(),
                        };
                        let child_id = if active.len() == 1 {
                            local
                        } else {
                            format!("{id}/{local}")
                        };
                        exits.extend(expand(spec, target, &child, &child_id, &frontier, graph, active)?);
                    }
                }
                if !exits.is_empty() {
                    frontier = exits.clone();
                    created = exits;
                }
            }
            active.pop();
            Ok(created)
        }
    }
}
