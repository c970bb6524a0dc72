//! Expansion of a cut plan into per-term subcircuit variants.

use serde::{Deserialize, Serialize};

use super::plan::CutPlan;
use super::policy::{BackendPolicy, BackendRole};
use super::qpd::{decompose_gate, LocalOp, LocalStep, QpdTerm, TERMS_PER_CUT};
use crate::circuit::{check_header, OpRecord};
use crate::error::{CutError, QuantumError};
use crate::gate::Gate;

pub const FRAGMENT_FORMAT: &str = "hqflow.fragment";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FragmentOp {
    Gate(Gate),
    /// Z measurement whose outcome sign multiplies the result.
    MeasureSign(usize),
}

/// Fragment-local circuit; qubit `i` is the fragment's `i`-th global qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentCircuit {
    pub num_qubits: usize,
    pub ops: Vec<FragmentOp>,
}

impl FragmentCircuit {
    pub fn measurement_count(&self) -> usize {
        self.ops
            .iter()
            .filter(|op| matches!(op, FragmentOp::MeasureSign(_)))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub id: usize,
    /// Global qubit indices, ascending.
    pub qubits: Vec<usize>,
    pub circuit: FragmentCircuit,
    pub backend: BackendRole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubcircuitVariant {
    pub plan_id: String,
    pub index: usize,
    /// Chosen term per cut, in cut order.
    pub terms: Vec<usize>,
    pub coefficient: f64,
    pub fragments: Vec<Fragment>,
}

/// `TERMS_PER_CUT ^ cuts`.
pub fn variant_count(plan: &CutPlan) -> usize {
    TERMS_PER_CUT.pow(plan.cuts().len() as u32)
}

/// Per-cut term choices of a variant; the first cut is the most significant
/// base-6 digit of the index.
pub fn term_digits(plan: &CutPlan, index: usize) -> Vec<usize> {
    let c = plan.cuts().len();
    (0..c)
        .map(|j| (index / TERMS_PER_CUT.pow((c - 1 - j) as u32)) % TERMS_PER_CUT)
        .collect()
}

fn plan_terms(plan: &CutPlan) -> Result<Vec<Vec<QpdTerm>>, CutError> {
    plan.cuts()
        .iter()
        .map(|&c| decompose_gate(plan.circuit().gates()[c].name()))
        .collect()
}

/// Product of the per-cut coefficients of a variant.
pub fn variant_coefficient(plan: &CutPlan, index: usize) -> Result<f64, CutError> {
    let terms = plan_terms(plan)?;
    Ok(coefficient_of(&terms, &term_digits(plan, index)))
}

fn coefficient_of(terms: &[Vec<QpdTerm>], digits: &[usize]) -> f64 {
    digits
        .iter()
        .zip(terms)
        .fold(1.0, |acc, (&d, t)| acc * t[d].coefficient)
}

/// All variants of a plan, in index order.
pub fn generate_variants(plan: &CutPlan, policy: &dyn BackendPolicy) -> Result<Vec<SubcircuitVariant>, CutError> {
    let terms = plan_terms(plan)?;
    let id = plan.id();
    Ok((0..variant_count(plan))
        .map(|v| build_variant(plan, &terms, &id, v, policy))
        .collect())
}

/// A single variant, without materialising the rest.
pub fn variant(plan: &CutPlan, index: usize, policy: &dyn BackendPolicy) -> Result<SubcircuitVariant, CutError> {
    let terms = plan_terms(plan)?;
    Ok(build_variant(plan, &terms, &plan.id(), index, policy))
}

fn build_variant(
    plan: &CutPlan,
    terms: &[Vec<QpdTerm>],
    plan_id: &str,
    index: usize,
    policy: &dyn BackendPolicy,
) -> SubcircuitVariant {
    let digits = term_digits(plan, index);
    let mut local = vec![0usize; plan.circuit().num_qubits()];
    let mut fragments: Vec<Fragment> = plan
        .fragments()
        .iter()
        .enumerate()
        .map(|(id, qubits)| {
            for (i, &q) in qubits.iter().enumerate() {
                local[q] = i;
            }
            Fragment {
                id,
                qubits: qubits.clone(),
                circuit: FragmentCircuit {
                    num_qubits: qubits.len(),
                    ops: Vec::new(),
                },
                backend: policy.select(qubits.len()),
            }
        })
        .collect();

    let place = |global: usize, op: &LocalOp, fragments: &mut Vec<Fragment>| {
        let ops = &mut fragments[plan.fragment_of(global)].circuit.ops;
        for step in &op.0 {
            ops.push(match step {
                LocalStep::Apply(g) => FragmentOp::Gate(g.remap(|_| local[global])),
                LocalStep::MeasureSign => FragmentOp::MeasureSign(local[global]),
            });
        }
    };

    let mut cut_slot = 0;
    for (i, gate) in plan.circuit().gates().iter().enumerate() {
        if plan.cuts().get(cut_slot) == Some(&i) {
            let term = &terms[cut_slot][digits[cut_slot]];
            let q = gate.qubits();
            place(q[0], &term.op_a, &mut fragments);
            place(q[1], &term.op_b, &mut fragments);
            cut_slot += 1;
        } else {
            let f = plan.fragment_of(gate.qubits()[0]);
            fragments[f]
                .circuit
                .ops
                .push(FragmentOp::Gate(gate.remap(|q| local[q])));
        }
    }

    SubcircuitVariant {
        plan_id: plan_id.to_string(),
        index,
        coefficient: coefficient_of(terms, &digits),
        terms: digits,
        fragments,
    }
}

/// Artifact path (relative to the shared volume) of a serialized fragment.
pub fn fragment_path(plan_id: &str, variant: usize, fragment: usize) -> String {
    format!("variants/{plan_id}/{variant}/{fragment}.frag")
}

/// Wire form of a fragment plus the variant context needed to execute it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FragmentDoc {
    format: String,
    version: u32,
    plan: String,
    variant: usize,
    fragment: usize,
    coefficient: f64,
    qubits: Vec<usize>,
    backend: BackendRole,
    num_qubits: usize,
    ops: Vec<OpRecord>,
}

impl SubcircuitVariant {
    pub fn fragment_json(&self, fragment: usize) -> String {
        let f = &self.fragments[fragment];
        let ops = f
            .circuit
            .ops
            .iter()
            .map(|op| match op {
                FragmentOp::Gate(g) => OpRecord::from_gate(g),
                FragmentOp::MeasureSign(q) => OpRecord {
                    kind: "MEASURE_SIGN".into(),
                    qubits: vec![*q],
                    params: Vec::new(),
                    matrix: None,
                },
            })
            .collect();
        let doc = FragmentDoc {
            format: FRAGMENT_FORMAT.into(),
            version: crate::circuit::CIRCUIT_FORMAT_VERSION,
            plan: self.plan_id.clone(),
            variant: self.index,
            fragment: f.id,
            coefficient: self.coefficient,
            qubits: f.qubits.clone(),
            backend: f.backend,
            num_qubits: f.circuit.num_qubits,
            ops,
        };
        serde_json::to_string(&doc).expect("fragment documents always serialize")
    }
}

/// A fragment read back from its artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredFragment {
    pub plan_id: String,
    pub variant: usize,
    pub coefficient: f64,
    pub fragment: Fragment,
}

impl StoredFragment {
    pub fn from_json(text: &str) -> Result<Self, QuantumError> {
        let doc: FragmentDoc = serde_json::from_str(text).map_err(|e| QuantumError::Format(e.to_string()))?;
        check_header(&doc.format, doc.version, FRAGMENT_FORMAT)?;
        if doc.qubits.len() != doc.num_qubits {
            return Err(QuantumError::Format(format!(
                "fragment lists {} qubits but declares {}",
                doc.qubits.len(),
                doc.num_qubits
            )));
        }
        let mut ops = Vec::with_capacity(doc.ops.len());
        for (i, rec) in doc.ops.iter().enumerate() {
            let op = if rec.kind == "MEASURE_SIGN" {
                match (rec.qubits.as_slice(), rec.params.is_empty(), &rec.matrix) {
                    ([q], true, None) if *q < doc.num_qubits => FragmentOp::MeasureSign(*q),
                    _ => return Err(QuantumError::Format(format!("op {i}: malformed MEASURE_SIGN"))),
                }
            } else {
                let gate = rec.to_gate()?;
                gate.validate(doc.num_qubits, i)?;
                FragmentOp::Gate(gate)
            };
            ops.push(op);
        }
        Ok(StoredFragment {
            plan_id: doc.plan,
            variant: doc.variant,
            coefficient: doc.coefficient,
            fragment: Fragment {
                id: doc.fragment,
                qubits: doc.qubits,
                circuit: FragmentCircuit {
                    num_qubits: doc.num_qubits,
                    ops,
                },
                backend: doc.backend,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{hea_circuit, Circuit};
    use crate::cutting::plan::plan_cuts;
    use crate::cutting::policy::ThresholdPolicy;

    #[test]
    fn zero_cuts_reproduce_the_circuit() {
        let c = hea_circuit(3, 2, 4).unwrap();
        let plan = CutPlan::new(c.clone(), vec![]).unwrap();
        let vs = generate_variants(&plan, &ThresholdPolicy::default()).unwrap();
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].coefficient, 1.0);
        let ops: Vec<FragmentOp> = c.gates().iter().copied().map(FragmentOp::Gate).collect();
        assert_eq!(vs[0].fragments[0].circuit.ops, ops);
    }

    #[test]
    fn one_cut_gives_six_bipartite_variants() {
        let c = Circuit::from_gates(4, vec![Gate::Cz(0, 1), Gate::Cz(1, 2), Gate::Cz(2, 3)]).unwrap();
        let plan = plan_cuts(&c, 2).unwrap();
        let vs = generate_variants(&plan, &ThresholdPolicy::default()).unwrap();
        assert_eq!(vs.len(), 6);
        for v in &vs {
            assert_eq!(v.fragments.len(), plan.fragments().len());
            assert_eq!(v.fragments.len(), 2);
            for f in &v.fragments {
                assert_eq!(f.backend, BackendRole::Qpu);
                for op in &f.circuit.ops {
                    if let FragmentOp::Gate(g) = op {
                        assert!(g.qubits().iter().all(|&q| q < f.circuit.num_qubits));
                    }
                }
            }
        }
        let coeffs: Vec<f64> = vs.iter().map(|v| v.coefficient).collect();
        assert_eq!(coeffs, vec![0.5, 0.5, 0.5, -0.5, 0.5, -0.5]);
    }

    #[test]
    fn digits_are_most_significant_first() {
        let c = hea_circuit(10, 3, 2024).unwrap();
        let plan = plan_cuts(&c, 6).unwrap();
        assert_eq!(variant_count(&plan), 216);
        assert_eq!(term_digits(&plan, 0), vec![0, 0, 0]);
        assert_eq!(term_digits(&plan, 1), vec![0, 0, 1]);
        assert_eq!(term_digits(&plan, 6), vec![0, 1, 0]);
        assert_eq!(term_digits(&plan, 215), vec![5, 5, 5]);
        let v = variant(&plan, 215, &ThresholdPolicy::default()).unwrap();
        assert_eq!(v.coefficient, -0.125);
        assert_eq!(variant_coefficient(&plan, 215).unwrap(), -0.125);
    }

    #[test]
    fn fragment_json_round_trip() {
        let c = hea_circuit(6, 2, 1).unwrap();
        let plan = plan_cuts(&c, 3).unwrap();
        let v = variant(&plan, 9, &ThresholdPolicy::default()).unwrap();
        for f in &v.fragments {
            let text = v.fragment_json(f.id);
            let back = StoredFragment::from_json(&text).unwrap();
            assert_eq!(back.fragment, *f);
            assert_eq!(back.coefficient, v.coefficient);
            assert_eq!(back.variant, 9);
            assert_eq!(back.plan_id, plan.id());
        }
        assert_eq!(fragment_path("p", 3, 1), "variants/p/3/1.frag");
    }
}
