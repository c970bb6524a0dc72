//! Workflow documents: model, strict parser, renderer and DAG expansion.

mod expand;
mod model;
mod params;
mod parse;
mod render;

pub use expand::{expand_dag, TaskGraph, TaskNode};
pub use model::*;
pub use params::{placeholders, substitute_params, Placeholder};
pub use parse::{parse_workflow, validate_spec, API_VERSION};
pub use render::render_workflow;

use crate::diag::Diagnostics;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkflowError {
    #[error("malformed workflow document:\n{0}")]
    Syntax(Diagnostics),
    #[error("invalid workflow:\n{0}")]
    Validation(Diagnostics),
}

impl WorkflowError {
    pub fn diagnostics(&self) -> &Diagnostics {
        match self {
            WorkflowError::Syntax(d) | WorkflowError::Validation(d) => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExpansionError {
    #[error("placeholder {placeholder} has no binding")]
    Unbound { placeholder: String },
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{0}` expands into itself")]
    Cycle(String),
}
