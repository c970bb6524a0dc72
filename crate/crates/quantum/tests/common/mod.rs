//! Test-side oracles built from dense matrices, independent of the library
//! kernels.
#![allow(dead_code)]

use std::collections::HashMap;

use hqflow_quantum::cutting::{
    decompose_gate, execute_variant, generate_variants, reconstruct, BackendPolicy, BackendRole, CutPlan,
    ExecutionMode, FixedPolicy, LocalStep, ReconstructionResult,
};
use hqflow_quantum::{expectation, simulate, Circuit, Gate, Observable, Pauli, PauliString};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<Vec<Complex64>>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(dim: usize) -> Dense {
    (0..dim)
        .map(|r| {
            (0..dim)
                .map(|k| if r == k { c(1.0, 0.0) } else { c(0.0, 0.0) })
                .collect()
        })
        .collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let mut out = vec![vec![c(0.0, 0.0); n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == c(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// Kronecker product with `hi` on the more significant index bits.
pub fn kron(hi: &Dense, lo: &Dense) -> Dense {
    let (h, l) = (hi.len(), lo.len());
    let mut out = vec![vec![c(0.0, 0.0); h * l]; h * l];
    for r in 0..h * l {
        for k in 0..h * l {
            out[r][k] = hi[r / l][k / l] * lo[r % l][k % l];
        }
    }
    out
}

/// Textbook single-qubit matrices, written out independently.
pub fn one_qubit(gate: &Gate) -> Dense {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match *gate {
        Gate::H(_) => vec![vec![c(s, 0.0), c(s, 0.0)], vec![c(s, 0.0), c(-s, 0.0)]],
        Gate::X(_) => vec![vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]],
        Gate::Z(_) => vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(-1.0, 0.0)]],
        Gate::Rx(_, t) => {
            let (co, si) = ((t / 2.0).cos(), (t / 2.0).sin());
            vec![vec![c(co, 0.0), c(0.0, -si)], vec![c(0.0, -si), c(co, 0.0)]]
        }
        Gate::Ry(_, t) => {
            let (co, si) = ((t / 2.0).cos(), (t / 2.0).sin());
            vec![vec![c(co, 0.0), c(-si, 0.0)], vec![c(si, 0.0), c(co, 0.0)]]
        }
        Gate::Rz(_, t) => vec![
            vec![Complex64::from_polar(1.0, -t / 2.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), Complex64::from_polar(1.0, t / 2.0)],
        ],
        Gate::U1q(_, m) => m.iter().map(|row| row.to_vec()).collect(),
        _ => panic!("not a single-qubit gate"),
    }
}

/// Full `2^n x 2^n` unitary of one gate, built as a Kronecker product or a
/// basis permutation.
pub fn dense_gate(gate: &Gate, n: usize) -> Dense {
    let dim = 1 << n;
    match *gate {
        Gate::Cz(a, b) => {
            let mut m = identity(dim);
            for (i, row) in m.iter_mut().enumerate() {
                if (i >> a) & 1 == 1 && (i >> b) & 1 == 1 {
                    row[i] = c(-1.0, 0.0);
                }
            }
            m
        }
        Gate::Cnot(ctl, tgt) => {
            // Row j has its 1 in the column that maps onto it.
            (0..dim)
                .map(|j| {
                    let i = if (j >> ctl) & 1 == 1 { j ^ (1 << tgt) } else { j };
                    (0..dim).map(|k| c(if k == i { 1.0 } else { 0.0 }, 0.0)).collect()
                })
                .collect()
        }
        _ => {
            let q = gate.qubits()[0];
            let mut m = vec![vec![c(1.0, 0.0)]];
            for k in (0..n).rev() {
                let f = if k == q { one_qubit(gate) } else { identity(2) };
                m = kron(&m, &f);
            }
            m
        }
    }
}

pub fn dense_unitary(circuit: &Circuit) -> Dense {
    let n = circuit.num_qubits();
    circuit
        .gates()
        .iter()
        .fold(identity(1 << n), |acc, g| matmul(&dense_gate(g, n), &acc))
}

pub fn dense_state(circuit: &Circuit) -> Vec<Complex64> {
    dense_unitary(circuit).iter().map(|row| row[0]).collect()
}

pub fn pauli_matrix(p: Pauli) -> Dense {
    match p {
        Pauli::I => identity(2),
        Pauli::X => vec![vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]],
        Pauli::Y => vec![vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]],
        Pauli::Z => vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(-1.0, 0.0)]],
    }
}

/// Dense `P_{n-1} (x) ... (x) P_0`.
pub fn dense_pauli(term: &PauliString) -> Dense {
    term.ops
        .iter()
        .rev()
        .fold(vec![vec![c(1.0, 0.0)]], |acc, &p| kron(&acc, &pauli_matrix(p)))
}

/// `<psi|O|psi>` by explicit matrix-vector products.
pub fn dense_expectation(state: &[Complex64], terms: &[PauliString]) -> Complex64 {
    let mut total = c(0.0, 0.0);
    for t in terms {
        let m = dense_pauli(t);
        for (i, row) in m.iter().enumerate() {
            let mut acc = c(0.0, 0.0);
            for (j, v) in row.iter().enumerate() {
                acc += v * state[j];
            }
            total += state[i].conj() * acc * t.coeff;
        }
    }
    total
}

/// Random circuit over the full gate set.
pub fn random_circuit(n: usize, depth: usize, rng: &mut ChaCha8Rng) -> Circuit {
    let mut gates = Vec::with_capacity(depth);
    for _ in 0..depth {
        let q = rng.random_range(0..n);
        let t = rng.random_range(0.0..std::f64::consts::TAU);
        let kind = if n == 1 {
            rng.random_range(0..6)
        } else {
            rng.random_range(0..9)
        };
        let other = if n > 1 {
            let p = rng.random_range(0..n - 1);
            if p >= q {
                p + 1
            } else {
                p
            }
        } else {
            q
        };
        gates.push(match kind {
            0 => Gate::H(q),
            1 => Gate::X(q),
            2 => Gate::Z(q),
            3 => Gate::Rx(q, t),
            4 => Gate::Ry(q, t),
            5 => Gate::Rz(q, t),
            6 => Gate::Cz(q, other),
            7 => Gate::Cnot(q, other),
            _ => Gate::U1q(q, random_unitary(rng)),
        });
    }
    Circuit::from_gates(n, gates).expect("generated gates are valid")
}

/// `e^{i a} Rz(b) Ry(c) Rz(d)` with random angles.
pub fn random_unitary(rng: &mut ChaCha8Rng) -> [[Complex64; 2]; 2] {
    let mut angle = || rng.random_range(0.0..std::f64::consts::TAU);
    let (a, b, cc, d) = (angle(), angle(), angle(), angle());
    let m = matmul(
        &one_qubit(&Gate::Rz(0, b)),
        &matmul(&one_qubit(&Gate::Ry(0, cc)), &one_qubit(&Gate::Rz(0, d))),
    );
    let ph = Complex64::from_polar(1.0, a);
    [[ph * m[0][0], ph * m[0][1]], [ph * m[1][0], ph * m[1][1]]]
}

pub fn random_pauli_string(n: usize, rng: &mut ChaCha8Rng) -> PauliString {
    let ops = (0..n)
        .map(|_| [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][rng.random_range(0..4)])
        .collect();
    PauliString::new(rng.random_range(-2.0..2.0), ops).unwrap()
}

/// Signed Kraus operators of a local op, from the textbook matrices.
pub fn kraus(steps: &[LocalStep]) -> Vec<(f64, Dense)> {
    let mut out = vec![(1.0, identity(2))];
    let p0 = vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 0.0)]];
    let p1 = vec![vec![c(0.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]];
    for step in steps {
        out = match step {
            LocalStep::Apply(g) => out.into_iter().map(|(s, k)| (s, matmul(&one_qubit(g), &k))).collect(),
            LocalStep::MeasureSign => out
                .into_iter()
                .flat_map(|(s, k)| [(s, matmul(&p0, &k)), (-s, matmul(&p1, &k))])
                .collect(),
        };
    }
    out
}

pub fn adjoint(m: &Dense) -> Dense {
    let n = m.len();
    (0..n).map(|i| (0..n).map(|j| m[j][i].conj()).collect()).collect()
}

pub fn conj_by(k: &Dense, rho: &Dense) -> Dense {
    matmul(&matmul(k, rho), &adjoint(k))
}

/// Largest entry deviation between the decomposition's action and the
/// gate's channel, over all 16 two-qubit Pauli products.
pub fn channel_gap(kind: &str) -> f64 {
    let terms = decompose_gate(kind).unwrap();
    let gate = match kind {
        "CZ" => dense_gate(&Gate::Cz(0, 1), 2),
        _ => dense_gate(&Gate::Cnot(0, 1), 2),
    };
    let paulis = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    let mut worst: f64 = 0.0;
    for &pa in &paulis {
        for &pb in &paulis {
            // qubit 0 (first gate operand) on the low index bit
            let rho = kron(&pauli_matrix(pb), &pauli_matrix(pa));
            let ideal = conj_by(&gate, &rho);
            let mut sum = vec![vec![c(0.0, 0.0); 4]; 4];
            for t in &terms {
                for (sa, ka) in kraus(&t.op_a.0) {
                    for (sb, kb) in kraus(&t.op_b.0) {
                        let out = conj_by(&kron(&kb, &ka), &rho);
                        for i in 0..4 {
                            for j in 0..4 {
                                sum[i][j] += out[i][j] * (t.coefficient * sa * sb);
                            }
                        }
                    }
                }
            }
            for i in 0..4 {
                for j in 0..4 {
                    worst = worst.max((sum[i][j] - ideal[i][j]).norm());
                }
            }
        }
    }
    worst
}

pub fn run_exact(plan: &CutPlan, obs: &Observable, policy: &dyn BackendPolicy) -> ReconstructionResult {
    let mut store = HashMap::new();
    for v in generate_variants(plan, policy).unwrap() {
        for role in BackendRole::ALL {
            for r in execute_variant(&v, role, obs, ExecutionMode::Exact, 0).unwrap() {
                store.insert((r.variant, r.fragment), r);
            }
        }
    }
    reconstruct(plan, obs, |v, f| store.get(&(v, f)).cloned()).unwrap()
}

pub fn run_sampled(plan: &CutPlan, obs: &Observable, shots: u64, seed: u64) -> ReconstructionResult {
    let mut store = HashMap::new();
    let mode = ExecutionMode::Sampled { shots };
    for v in generate_variants(plan, &FixedPolicy(BackendRole::Qpu)).unwrap() {
        for r in execute_variant(&v, BackendRole::Qpu, obs, mode, seed).unwrap() {
            store.insert((r.variant, r.fragment), r);
        }
    }
    reconstruct(plan, obs, |v, f| store.get(&(v, f)).cloned()).unwrap()
}

/// Uncut reference value: dense algebra for small circuits, the
/// statevector kernel beyond.
pub fn oracle(circuit: &Circuit, obs: &Observable) -> f64 {
    if circuit.num_qubits() <= 6 {
        dense_expectation(&dense_state(circuit), obs.terms()).re
    } else {
        expectation(&simulate(circuit).unwrap(), obs).unwrap()
    }
}

/// Random circuit with up to two random cuts on entangling gates and a
/// two-term observable, all drawn from `seed`.
pub fn random_cut_case(seed: u64) -> (Circuit, Vec<usize>, Observable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=10);
    let circuit = random_circuit(n, rng.random_range(10..40), &mut rng);
    let entangling = circuit.entangling_indices();
    let k = rng.random_range(0..=2usize).min(entangling.len());
    let mut cuts = Vec::new();
    while cuts.len() < k {
        let g = entangling[rng.random_range(0..entangling.len())];
        if !cuts.contains(&g) {
            cuts.push(g);
        }
    }
    let obs = Observable::new(vec![random_pauli_string(n, &mut rng), random_pauli_string(n, &mut rng)]).unwrap();
    (circuit, cuts, obs)
}
