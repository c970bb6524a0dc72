//! Plan manifest shared between the create, execute and reconstruct stages.

use serde::{Deserialize, Serialize};

use super::plan::CutPlan;
use super::policy::BackendRole;
use super::variant::variant_count;
use crate::circuit::{check_header, Circuit};
use crate::error::{CutError, QuantumError};
use crate::observable::{Observable, PauliString};

pub const PLAN_FORMAT: &str = "hqflow.plan";
pub const MANIFEST_PATH: &str = "plan.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermRecord {
    coeff: f64,
    paulis: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    format: String,
    version: u32,
    plan: String,
    circuit: serde_json::Value,
    cuts: Vec<usize>,
    fragments: Vec<Vec<usize>>,
    backends: Vec<BackendRole>,
    observable: Vec<TermRecord>,
    variants: usize,
}

/// Everything a downstream stage needs to rebuild the plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanManifest {
    pub plan: CutPlan,
    pub observable: Observable,
    /// Backend of each fragment.
    pub backends: Vec<BackendRole>,
}

impl PlanManifest {
    pub fn to_json(&self) -> String {
        let doc = ManifestDoc {
            format: PLAN_FORMAT.into(),
            version: crate::circuit::CIRCUIT_FORMAT_VERSION,
            plan: self.plan.id(),
            circuit: serde_json::from_str(&self.plan.circuit().to_json()).expect("circuit json is valid"),
            cuts: self.plan.cuts().to_vec(),
            fragments: self.plan.fragments().to_vec(),
            backends: self.backends.clone(),
            observable: self
                .observable
                .terms()
                .iter()
                .map(|t| TermRecord {
                    coeff: t.coeff,
                    paulis: t.label(),
                })
                .collect(),
            variants: variant_count(&self.plan),
        };
        serde_json::to_string_pretty(&doc).expect("manifests always serialize")
    }

    /// Parses and cross-checks a manifest; the stored fragments, id and
    /// variant count must agree with what the cuts imply.
    pub fn from_json(text: &str) -> Result<Self, CutError> {
        let fmt = |m: String| CutError::Quantum(QuantumError::Format(m));
        let doc: ManifestDoc = serde_json::from_str(text).map_err(|e| fmt(e.to_string()))?;
        check_header(&doc.format, doc.version, PLAN_FORMAT)?;
        let circuit = Circuit::from_json(&doc.circuit.to_string())?;
        let plan = CutPlan::new(circuit, doc.cuts)?;
        if plan.fragments() != doc.fragments.as_slice() {
            return Err(fmt("fragments do not match the cut set".into()));
        }
        if plan.id() != doc.plan {
            return Err(fmt(format!("plan id {} does not match contents", doc.plan)));
        }
        if variant_count(&plan) != doc.variants {
            return Err(fmt(format!("variant count {} is inconsistent", doc.variants)));
        }
        if doc.backends.len() != doc.fragments.len() {
            return Err(fmt("one backend per fragment is required".into()));
        }
        let terms = doc
            .observable
            .iter()
            .map(|t| PauliString::from_label(t.coeff, &t.paulis))
            .collect::<Result<Vec<_>, _>>()?;
        let observable = Observable::new(terms)?;
        if observable.num_qubits() != plan.circuit().num_qubits() {
            return Err(CutError::Quantum(QuantumError::DimensionMismatch {
                observable: observable.num_qubits(),
                state: plan.circuit().num_qubits(),
            }));
        }
        Ok(Self {
            plan,
            observable,
            backends: doc.backends,
        })
    }
}
