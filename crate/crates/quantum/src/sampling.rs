//! Finite-shot estimation of Pauli expectation values.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gate::Gate;
use crate::observable::{Observable, Pauli, PauliString};
use crate::state::StateVector;

/// Mean of `shots` single-shot outcomes and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub shots: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            stderr: 0.0,
            shots: 0,
        }
    }
}

/// Mixes `parts` into `base` (splitmix64 finaliser), giving independent
/// streams for e.g. `(run seed, variant, fragment, term)`.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut x = base;
    for &p in parts {
        x = splitmix(x ^ splitmix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    x
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Estimates `<psi|O|psi>` by measuring each term in its eigenbasis.
///
/// Every term gets its own `shots` draws from an independent stream; the
/// reported standard error combines the per-term errors in quadrature.
/// Panics if `shots == 0` or the observable width differs from the state.
pub fn sample_shots(state: &StateVector, observable: &Observable, shots: u64, seed: u64) -> Estimate {
    assert!(shots >= 1, "at least one shot is required");
    assert_eq!(observable.num_qubits(), state.num_qubits());
    let mut value = 0.0;
    let mut variance = 0.0;
    for (t, term) in observable.terms().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[t as u64]));
        let rotated = rotate_to_z_basis(state.amplitudes(), term);
        let probs: Vec<f64> = rotated.iter().map(|a| a.norm_sqr()).collect();
        let support = support_mask(term);
        let est = sample_mean(&probs, |b| parity_sign(b, support), shots, &mut rng);
        value += term.coeff * est.value;
        variance += (term.coeff * est.stderr).powi(2);
    }
    Estimate {
        value,
        stderr: variance.sqrt(),
        shots,
    }
}

pub(crate) fn support_mask(term: &PauliString) -> usize {
    term.ops
        .iter()
        .enumerate()
        .filter(|(_, p)| **p != Pauli::I)
        .fold(0, |m, (q, _)| m | (1 << q))
}

pub(crate) fn parity_sign(bits: usize, mask: usize) -> f64 {
    if (bits & mask).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Applies the single-qubit rotations that map each X/Y factor onto Z.
pub(crate) fn rotate_to_z_basis(amps: &[Complex64], term: &PauliString) -> Vec<Complex64> {
    let mut state = StateVector::from_amplitudes(amps.to_vec()).expect("valid register");
    let h = Gate::H(0).matrix().expect("H is single-qubit");
    let s_dag = [
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::new(0.0, -1.0)],
    ];
    for (q, p) in term.ops.iter().enumerate() {
        match p {
            Pauli::X => state.apply_single(q, &h),
            Pauli::Y => {
                state.apply_single(q, &s_dag);
                state.apply_single(q, &h);
            }
            Pauli::I | Pauli::Z => {}
        }
    }
    state.amplitudes().to_vec()
}

/// Draws `shots` outcomes `i ~ probs` and averages `value(i)`.
///
/// `probs` need not be normalised exactly; draws are scaled by their sum.
pub(crate) fn sample_mean(probs: &[f64], value: impl Fn(usize) -> f64, shots: u64, rng: &mut ChaCha8Rng) -> Estimate {
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p;
        cumulative.push(acc);
    }
    let total = acc;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..shots {
        let u = rng.random::<f64>() * total;
        // first index whose cumulative mass exceeds u; skips zero-probability outcomes
        let i = cumulative.partition_point(|&c| c <= u).min(probs.len() - 1);
        let v = value(i);
        sum += v;
        sum_sq += v * v;
    }
    let n = shots as f64;
    let mean = sum / n;
    let stderr = if shots > 1 {
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Estimate {
        value: mean,
        stderr,
        shots,
    }
}
