//! Running fragments with signed mid-circuit measurements.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::BackendRole;
use super::variant::{Fragment, FragmentOp, SubcircuitVariant};
use crate::circuit::check_header;
use crate::error::QuantumError;
use crate::observable::{pauli_expectation_raw, Observable};
use crate::sampling::{derive_seed, parity_sign, rotate_to_z_basis, sample_mean, support_mask, Estimate};
use crate::state::StateVector;

pub const RESULT_FORMAT: &str = "hqflow.result";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum ExecutionMode {
    Exact,
    Sampled { shots: u64 },
}

/// Per-term estimates of one fragment, in observable term order. Each value
/// is the fragment's factor `<P_t restricted to the fragment>` including the
/// measurement signs, without the term coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FragmentResult {
    pub format: String,
    pub version: u32,
    pub plan: String,
    pub variant: usize,
    pub fragment: usize,
    pub backend: BackendRole,
    pub mode: ExecutionMode,
    pub terms: Vec<Estimate>,
}

impl FragmentResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("results always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, QuantumError> {
        let r: FragmentResult = serde_json::from_str(text).map_err(|e| QuantumError::Format(e.to_string()))?;
        check_header(&r.format, r.version, RESULT_FORMAT)?;
        Ok(r)
    }
}

/// Artifact path (relative to the shared volume) of a fragment result.
pub fn result_path(plan_id: &str, variant: usize, fragment: usize) -> String {
    format!("results/{plan_id}/{variant}/{fragment}.json")
}

/// Evolves `|0...0>` through the fragment, splitting into unnormalised
/// branches at each signed measurement. The branch norms sum to one.
fn branches(fragment: &Fragment) -> Result<Vec<(f64, StateVector)>, QuantumError> {
    let mut out = vec![(1.0, StateVector::zero(fragment.circuit.num_qubits)?)];
    for op in &fragment.circuit.ops {
        match op {
            FragmentOp::Gate(g) => out.iter_mut().for_each(|(_, s)| s.apply(g)),
            FragmentOp::MeasureSign(q) => {
                let mut next = Vec::with_capacity(out.len() * 2);
                for (sign, mut s) in out {
                    let one = s.split_on(*q);
                    next.push((sign, s));
                    next.push((-sign, one));
                }
                out = next;
            }
        }
    }
    Ok(out)
}

/// Runs one fragment against the global `observable`.
pub fn execute_fragment(
    fragment: &Fragment,
    observable: &Observable,
    mode: ExecutionMode,
    seed: u64,
) -> Result<Vec<Estimate>, QuantumError> {
    let width = observable.num_qubits();
    if let Some(&q) = fragment.qubits.iter().find(|&&q| q >= width) {
        return Err(QuantumError::DimensionMismatch {
            observable: width,
            state: q + 1,
        });
    }
    let branches = branches(fragment)?;
    let estimates = observable
        .terms()
        .iter()
        .enumerate()
        .map(|(t, term)| {
            let local = term.restrict(&fragment.qubits);
            match mode {
                ExecutionMode::Exact => {
                    let value = branches.iter().fold(0.0, |acc, (sign, s)| {
                        acc + sign * pauli_expectation_raw(s.amplitudes(), &local).re
                    });
                    Estimate::exact(value)
                }
                ExecutionMode::Sampled { shots } => {
                    assert!(shots >= 1, "at least one shot is required");
                    let dim = 1usize << fragment.circuit.num_qubits;
                    let probs: Vec<f64> = branches
                        .iter()
                        .flat_map(|(_, s)| {
                            rotate_to_z_basis(s.amplitudes(), &local)
                                .into_iter()
                                .map(|a| a.norm_sqr())
                        })
                        .collect();
                    let support = support_mask(&local);
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[t as u64]));
                    sample_mean(
                        &probs,
                        |i| branches[i / dim].0 * parity_sign(i % dim, support),
                        shots,
                        &mut rng,
                    )
                }
            }
        })
        .collect();
    Ok(estimates)
}

/// Runs every fragment of `variant` routed to `role`. Fragment `f` uses the
/// stream `derive_seed(seed, [variant, f])`.
pub fn execute_variant(
    variant: &SubcircuitVariant,
    role: BackendRole,
    observable: &Observable,
    mode: ExecutionMode,
    seed: u64,
) -> Result<Vec<FragmentResult>, QuantumError> {
    variant
        .fragments
        .iter()
        .filter(|f| f.backend == role)
        .map(|f| {
            let stream = derive_seed(seed, &[variant.index as u64, f.id as u64]);
            Ok(FragmentResult {
                format: RESULT_FORMAT.into(),
                version: crate::circuit::CIRCUIT_FORMAT_VERSION,
                plan: variant.plan_id.clone(),
                variant: variant.index,
                fragment: f.id,
                backend: f.backend,
                mode,
                terms: execute_fragment(f, observable, mode, stream)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Circuit;
    use crate::cutting::plan::CutPlan;
    use crate::cutting::policy::FixedPolicy;
    use crate::cutting::variant::generate_variants;
    use crate::gate::Gate;

    fn bell_plan() -> CutPlan {
        let c = Circuit::from_gates(2, vec![Gate::H(0), Gate::Cnot(0, 1)]).unwrap();
        CutPlan::new(c, vec![1]).unwrap()
    }

    #[test]
    fn measure_term_branches_carry_signs() {
        // op_a of term 2 measures the control of |+>: branches +|0>/sqrt2, -|1>/sqrt2
        let plan = bell_plan();
        let vs = generate_variants(&plan, &FixedPolicy(BackendRole::Cpu)).unwrap();
        let zz: Observable = "ZI".parse().unwrap();
        let r = execute_fragment(&vs[2].fragments[0], &zz, ExecutionMode::Exact, 0).unwrap();
        // sum of sign * <Z> over branches = 0.5*1 + (-1)*0.5*(-1)
        assert!((r[0].value - 1.0).abs() < 1e-12);
        let ii: Observable = "II".parse().unwrap();
        let r = execute_fragment(&vs[2].fragments[0], &ii, ExecutionMode::Exact, 0).unwrap();
        assert!(r[0].value.abs() < 1e-12);
    }

    #[test]
    fn sampled_matches_exact_within_error() {
        let plan = bell_plan();
        let vs = generate_variants(&plan, &FixedPolicy(BackendRole::Qpu)).unwrap();
        let obs: Observable = "0.5*XX + ZZ".parse().unwrap();
        for v in &vs {
            for f in &v.fragments {
                let exact = execute_fragment(f, &obs, ExecutionMode::Exact, 0).unwrap();
                let shots = ExecutionMode::Sampled { shots: 20_000 };
                let est = execute_fragment(f, &obs, shots, 7).unwrap();
                for (e, s) in exact.iter().zip(&est) {
                    assert!((e.value - s.value).abs() <= 5.0 * s.stderr + 1e-9);
                }
            }
        }
    }

    #[test]
    fn execute_variant_filters_by_role() {
        let c = Circuit::from_gates(3, vec![Gate::Cz(0, 1), Gate::Cz(1, 2)]).unwrap();
        let plan = CutPlan::new(c, vec![1]).unwrap();
        let policy = |n: usize| if n == 1 { BackendRole::Qpu } else { BackendRole::Cpu };
        struct P<F>(F);
        impl<F: Fn(usize) -> BackendRole + Send + Sync> crate::cutting::policy::BackendPolicy for P<F> {
            fn select(&self, n: usize) -> BackendRole {
                (self.0)(n)
            }
        }
        let vs = generate_variants(&plan, &P(policy)).unwrap();
        let obs = Observable::all_z(3);
        let cpu = execute_variant(&vs[0], BackendRole::Cpu, &obs, ExecutionMode::Exact, 1).unwrap();
        let qpu = execute_variant(&vs[0], BackendRole::Qpu, &obs, ExecutionMode::Exact, 1).unwrap();
        let gpu = execute_variant(&vs[0], BackendRole::Gpu, &obs, ExecutionMode::Exact, 1).unwrap();
        assert_eq!((cpu.len(), qpu.len(), gpu.len()), (1, 1, 0));
        let back = FragmentResult::from_json(&cpu[0].to_json()).unwrap();
        assert_eq!(back, cpu[0]);
        assert_eq!(result_path("p", 2, 0), "results/p/2/0.json");
    }

    #[test]
    fn observable_too_narrow() {
        let plan = bell_plan();
        let vs = generate_variants(&plan, &FixedPolicy(BackendRole::Cpu)).unwrap();
        let z: Observable = "Z".parse().unwrap();
        assert!(execute_fragment(&vs[0].fragments[1], &z, ExecutionMode::Exact, 0).is_err());
    }
}
