//! Recombining fragment results into the uncut expectation value.

use serde::{Deserialize, Serialize};

use super::execute::{result_path, FragmentResult};
use super::plan::CutPlan;
use super::variant::{variant_coefficient, variant_count};
use crate::error::CutError;
use crate::observable::Observable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResultMode {
    /// Every fragment was evaluated exactly.
    Exact,
    /// At least one fragment was sampled.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub value: f64,
    /// `c_v * sum_t coeff_t * prod_f r[v][f][t]` per variant, in index order.
    pub contributions: Vec<f64>,
    pub mode: ResultMode,
    /// Standard error propagated from the sampled fragments; zero when exact.
    pub uncertainty: f64,
}

/// Combines per-fragment results. `lookup(variant, fragment)` supplies the
/// result for each pair; every missing one is reported together.
pub fn reconstruct(
    plan: &CutPlan,
    observable: &Observable,
    lookup: impl Fn(usize, usize) -> Option<FragmentResult>,
) -> Result<ReconstructionResult, CutError> {
    let plan_id = plan.id();
    let n_frag = plan.fragments().len();
    let n_terms = observable.terms().len();
    let mut missing = Vec::new();
    let mut contributions = Vec::with_capacity(variant_count(plan));
    let mut value = 0.0;
    let mut variance = 0.0;
    let mut sampled = false;

    for v in 0..variant_count(plan) {
        let results: Vec<Option<FragmentResult>> = (0..n_frag)
            .map(|f| lookup(v, f).filter(|r| r.terms.len() == n_terms))
            .collect();
        if results.iter().any(Option::is_none) {
            for (f, r) in results.iter().enumerate() {
                if r.is_none() {
                    missing.push(result_path(&plan_id, v, f));
                }
            }
            continue;
        }
        let results: Vec<FragmentResult> = results.into_iter().flatten().collect();
        let c = variant_coefficient(plan, v)?;
        let mut inner = 0.0;
        let mut inner_var = 0.0;
        for (t, term) in observable.terms().iter().enumerate() {
            let mut product = 1.0;
            let mut second_moment = 1.0;
            let mut noisy = false;
            for r in &results {
                let e = r.terms[t];
                sampled |= e.shots > 0;
                noisy |= e.stderr > 0.0;
                product *= e.value;
                second_moment *= e.value * e.value + e.stderr * e.stderr;
            }
            inner += term.coeff * product;
            // Var(prod X_f) for independent factors
            if noisy {
                inner_var += term.coeff * term.coeff * (second_moment - product * product).max(0.0);
            }
        }
        let contribution = c * inner;
        contributions.push(contribution);
        value += contribution;
        variance += c * c * inner_var;
    }

    if !missing.is_empty() {
        return Err(CutError::MissingArtifact(missing));
    }
    Ok(ReconstructionResult {
        value,
        contributions,
        mode: if sampled {
            ResultMode::Sampled
        } else {
            ResultMode::Exact
        },
        uncertainty: variance.sqrt(),
    })
}
