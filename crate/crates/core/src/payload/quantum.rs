//! The circuit-cutting workload: `create-subcircuits`, `execute-subcircuits`
//! and `reconstruct`, exchanging files over the shared volume.

use std::collections::BTreeMap;
use std::sync::Arc;

use hqflow_quantum::cutting::{
    execute_fragment, fragment_path, generate_variants, plan_cuts, reconstruct, result_path, variant_count,
    BackendPolicy, BackendRole, ExecutionMode, FragmentResult, PlanManifest, StoredFragment, ThresholdPolicy,
    MANIFEST_PATH,
};
use hqflow_quantum::{derive_seed, expectation, hea_circuit, simulate, Observable};
use serde::Serialize;

use super::{Payload, PayloadError, PayloadOutput, TaskContext};

pub const QUANTUM_IMAGE: &str = "hqflow/quantum-workflow:latest";
pub const RECONSTRUCTION_PATH: &str = "reconstruction.json";
const DEFAULT_SHOTS: u64 = 4096;

// Cost model, in seconds of work at speed factor 1.
const EXACT_COST_PER_AMPLITUDE_OP: f64 = 1e-7;
const SHOT_COST: f64 = 1e-4;
const BOOKKEEPING_COST: f64 = 1e-6;

pub struct QuantumPayload {
    pub policy: Arc<dyn BackendPolicy>,
}

impl Default for QuantumPayload {
    fn default() -> Self {
        Self {
            policy: Arc::new(ThresholdPolicy::default()),
        }
    }
}

fn failed(e: impl std::fmt::Display) -> PayloadError {
    PayloadError::Failed(e.to_string())
}

fn join(root: &str, rel: &str) -> String {
    format!("{}/{rel}", root.trim_end_matches('/'))
}

fn env_parse<T: std::str::FromStr>(ctx: &TaskContext<'_>, name: &str, default: Option<T>) -> Result<T, PayloadError> {
    match ctx.env(name) {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| PayloadError::Usage(format!("{name}={v:?} is not valid"))),
        None => default.ok_or_else(|| PayloadError::Usage(format!("{name} is not set"))),
    }
}

fn load_manifest(ctx: &TaskContext<'_>, root: &str) -> Result<PlanManifest, PayloadError> {
    let text = ctx.fs.read_string(&join(root, MANIFEST_PATH))?;
    PlanManifest::from_json(&text).map_err(failed)
}

impl Payload for QuantumPayload {
    fn run(&self, ctx: &mut TaskContext<'_>) -> Result<PayloadOutput, PayloadError> {
        let argv: Vec<String> = ctx.argv().iter().map(|s| s.to_string()).collect();
        // argv[0] is the entry binary; the subcommand follows.
        let rest: Vec<&str> = argv.iter().skip(1).map(String::as_str).collect();
        match rest.as_slice() {
            ["create-subcircuits", root] => self.create(ctx, root),
            ["execute-subcircuits", "--backend", backend, index, root] => {
                let role: BackendRole = backend.parse().map_err(PayloadError::Usage)?;
                let index: usize = index
                    .parse()
                    .map_err(|_| PayloadError::Usage(format!("variant index {index:?}")))?;
                execute(ctx, role, index, root)
            }
            ["reconstruct", root] => reconstruct_stage(ctx, root),
            _ => Err(PayloadError::Usage(format!(
                "expected create-subcircuits|execute-subcircuits|reconstruct, got {rest:?}"
            ))),
        }
    }
}

impl QuantumPayload {
    fn create(&self, ctx: &mut TaskContext<'_>, root: &str) -> Result<PayloadOutput, PayloadError> {
        let n: usize = env_parse(ctx, "CIRCUIT_QUBITS", None)?;
        let layers: usize = env_parse(ctx, "CIRCUIT_LAYERS", None)?;
        let seed: u64 = env_parse(ctx, "CIRCUIT_SEED", None)?;
        let max_fragment: usize = env_parse(ctx, "MAX_FRAGMENT_QUBITS", None)?;
        let observable: Observable = match ctx.env("OBSERVABLE") {
            Some(text) => text.parse().map_err(failed)?,
            None => Observable::all_z(n),
        };
        let circuit = hea_circuit(n, layers, seed).map_err(failed)?;
        let plan = plan_cuts(&circuit, max_fragment).map_err(failed)?;
        let variants = generate_variants(&plan, self.policy.as_ref()).map_err(failed)?;
        let backends = plan
            .fragment_sizes()
            .into_iter()
            .map(|s| self.policy.select(s))
            .collect::<Vec<_>>();
        let manifest = PlanManifest {
            plan,
            observable,
            backends: backends.clone(),
        };
        let plan_id = manifest.plan.id();
        ctx.fs.write(&join(root, MANIFEST_PATH), manifest.to_json())?;
        for v in &variants {
            for f in 0..v.fragments.len() {
                ctx.fs
                    .write(&join(root, &fragment_path(&plan_id, v.index, f)), v.fragment_json(f))?;
            }
        }
        let gates = manifest.plan.circuit().gates().len() as f64;
        let mut summary = BTreeMap::new();
        summary.insert("plan".into(), plan_id);
        summary.insert("cuts".into(), manifest.plan.cuts().len().to_string());
        summary.insert("variants".into(), variants.len().to_string());
        summary.insert(
            "fragmentBackends".into(),
            backends.iter().map(|b| b.as_str()).collect::<Vec<_>>().join(","),
        );
        Ok(PayloadOutput {
            cost_seconds: BOOKKEEPING_COST * variants.len() as f64 * gates,
            summary,
        })
    }
}

/// QPU access goes through a token file; the stub client only checks that
/// a non-empty access token is present.
fn check_qpu_token(ctx: &TaskContext<'_>) -> Result<(), PayloadError> {
    let path = ctx
        .env("IQM_TOKENS_FILE")
        .ok_or_else(|| PayloadError::Usage("IQM_TOKENS_FILE is not set".into()))?;
    let text = ctx.fs.read_string(path)?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|_| failed("token file is not valid JSON"))?;
    match doc.get("access_token").and_then(|t| t.as_str()) {
        Some(t) if !t.is_empty() => Ok(()),
        _ => Err(failed("token file has no access_token")),
    }
}

fn execute(
    ctx: &mut TaskContext<'_>,
    role: BackendRole,
    index: usize,
    root: &str,
) -> Result<PayloadOutput, PayloadError> {
    let manifest = load_manifest(ctx, root)?;
    let plan_id = manifest.plan.id();
    let count = variant_count(&manifest.plan);
    if index >= count {
        return Err(PayloadError::Usage(format!("variant {index} out of range 0..{count}")));
    }
    let mine: Vec<usize> = (0..manifest.backends.len())
        .filter(|&f| manifest.backends[f] == role)
        .collect();
    let mut summary = BTreeMap::new();
    summary.insert("variant".into(), index.to_string());
    if mine.is_empty() {
        summary.insert("fragments".into(), "0".into());
        return Ok(PayloadOutput {
            cost_seconds: 0.0,
            summary,
        });
    }
    let mode = if role == BackendRole::Qpu {
        check_qpu_token(ctx)?;
        ExecutionMode::Sampled {
            shots: env_parse(ctx, "QPU_SHOTS", Some(DEFAULT_SHOTS))?,
        }
    } else {
        ExecutionMode::Exact
    };
    let n_terms = manifest.observable.terms().len() as f64;
    let mut cost = 0.0;
    for &f in &mine {
        let stored = StoredFragment::from_json(&ctx.fs.read_string(&join(root, &fragment_path(&plan_id, index, f)))?)
            .map_err(failed)?;
        if stored.plan_id != plan_id || stored.variant != index || stored.fragment.id != f {
            return Err(failed(format!("fragment file {index}/{f} does not match the plan")));
        }
        let stream = derive_seed(ctx.seed, &[index as u64, f as u64]);
        let terms = execute_fragment(&stored.fragment, &manifest.observable, mode, stream).map_err(failed)?;
        let result = FragmentResult {
            format: hqflow_quantum::cutting::execute::RESULT_FORMAT.into(),
            version: hqflow_quantum::circuit::CIRCUIT_FORMAT_VERSION,
            plan: plan_id.clone(),
            variant: index,
            fragment: f,
            backend: role,
            mode,
            terms,
        };
        ctx.fs
            .write(&join(root, &result_path(&plan_id, index, f)), result.to_json())?;
        cost += match mode {
            ExecutionMode::Exact => {
                let ops = stored.fragment.circuit.ops.len().max(1) as f64;
                EXACT_COST_PER_AMPLITUDE_OP * ops * (1u64 << stored.fragment.qubits.len()) as f64 * n_terms
            }
            ExecutionMode::Sampled { shots } => SHOT_COST * shots as f64 * n_terms,
        };
    }
    summary.insert("fragments".into(), mine.len().to_string());
    Ok(PayloadOutput {
        cost_seconds: cost,
        summary,
    })
}

#[derive(Serialize)]
struct ReconstructionDoc<'a> {
    format: &'a str,
    plan: &'a str,
    value: f64,
    oracle: f64,
    delta: f64,
    mode: hqflow_quantum::cutting::ResultMode,
    uncertainty: f64,
    variants: usize,
    contributions: &'a [f64],
}

fn reconstruct_stage(ctx: &mut TaskContext<'_>, root: &str) -> Result<PayloadOutput, PayloadError> {
    let manifest = load_manifest(ctx, root)?;
    let plan_id = manifest.plan.id();
    let fs = &ctx.fs;
    let result = reconstruct(&manifest.plan, &manifest.observable, |v, f| {
        let text = fs.read_string(&join(root, &result_path(&plan_id, v, f))).ok()?;
        FragmentResult::from_json(&text).ok()
    })
    .map_err(failed)?;
    let state = simulate(manifest.plan.circuit()).map_err(failed)?;
    let oracle = expectation(&state, &manifest.observable).map_err(failed)?;
    let delta = result.value - oracle;
    let doc = ReconstructionDoc {
        format: "hqflow.reconstruction",
        plan: &plan_id,
        value: result.value,
        oracle,
        delta,
        mode: result.mode,
        uncertainty: result.uncertainty,
        variants: result.contributions.len(),
        contributions: &result.contributions,
    };
    let json = serde_json::to_string_pretty(&doc).expect("reconstruction serializes");
    ctx.fs.write(&join(root, RECONSTRUCTION_PATH), json)?;

    let n = manifest.plan.circuit().num_qubits();
    let gates = manifest.plan.circuit().gates().len() as f64;
    let cost = BOOKKEEPING_COST * (result.contributions.len() * manifest.plan.fragments().len()) as f64
        + EXACT_COST_PER_AMPLITUDE_OP * gates * (1u64 << n) as f64;
    let mut summary = BTreeMap::new();
    summary.insert("plan".into(), plan_id.clone());
    summary.insert("value".into(), format!("{}", result.value));
    summary.insert("oracle".into(), format!("{oracle}"));
    summary.insert("delta".into(), format!("{delta}"));
    summary.insert("uncertainty".into(), format!("{}", result.uncertainty));
    summary.insert(
        "mode".into(),
        match result.mode {
            hqflow_quantum::cutting::ResultMode::Exact => "exact".into(),
            hqflow_quantum::cutting::ResultMode::Sampled => "sampled".into(),
        },
    );
    Ok(PayloadOutput {
        cost_seconds: cost,
        summary,
    })
}
