//! Local quasiprobability decompositions of CZ and CNOT.
//!
//! Writing `CZ = e^{i pi/4} (S (x) S) exp(i pi/4 Z (x) Z)` and expanding the
//! `ZZ` rotation channel into products of local operations gives six terms
//! with coefficients `+-1/2`, so `gamma = sum |c_k| = 3`:
//!
//! | c    | first qubit | second qubit |
//! |------|-------------|--------------|
//! | +1/2 | S           | S            |
//! | +1/2 | S†          | S†           |
//! | +1/2 | M_z         | I            |
//! | -1/2 | M_z         | Z            |
//! | +1/2 | I           | M_z          |
//! | -1/2 | Z           | M_z          |
//!
//! `M_z` is a mid-circuit Z measurement whose outcome sign (`+1` for `|0>`,
//! `-1` for `|1>`) multiplies the shot value; the post-measurement state is
//! kept. CNOT is the same decomposition conjugated by H on the target.
//!
//! Before a decomposition is handed out it is checked against the gate's
//! channel on all sixteen two-qubit Pauli inputs.

use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::CutError;
use crate::gate::{mat_mul, Gate, Matrix2};

/// Tolerance for the built-in channel check.
pub const CHANNEL_TOLERANCE: f64 = 1e-9;

/// Number of terms per cut gate.
pub const TERMS_PER_CUT: usize = 6;

/// One step of a local operation; gates are written on qubit 0 and
/// relocated when the term is instantiated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalStep {
    Apply(Gate),
    /// Z-basis measurement contributing its outcome sign.
    MeasureSign,
}

/// Sequence of local steps replacing one half of a cut gate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalOp(pub Vec<LocalStep>);

impl LocalOp {
    fn wrapped_in(mut self, gate: Gate) -> Self {
        self.0.insert(0, LocalStep::Apply(gate));
        self.0.push(LocalStep::Apply(gate));
        self
    }

    pub fn measures(&self) -> bool {
        self.0.contains(&LocalStep::MeasureSign)
    }

    /// Signed Kraus form: the op acts as `rho -> sum_i s_i K_i rho K_i†`.
    pub fn signed_kraus(&self) -> Vec<(f64, Matrix2)> {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let mut kraus = vec![(1.0, [[one, zero], [zero, one]])];
        for step in &self.0 {
            kraus = match step {
                LocalStep::Apply(g) => {
                    let u = g.matrix().expect("local steps are single-qubit");
                    kraus.into_iter().map(|(s, k)| (s, mat_mul(&u, &k))).collect()
                }
                LocalStep::MeasureSign => {
                    let p0 = [[one, zero], [zero, zero]];
                    let p1 = [[zero, zero], [zero, one]];
                    kraus
                        .into_iter()
                        .flat_map(|(s, k)| [(s, mat_mul(&p0, &k)), (-s, mat_mul(&p1, &k))])
                        .collect()
                }
            };
        }
        kraus
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpdTerm {
    pub coefficient: f64,
    /// Acts on the gate's first qubit (CZ `a`, CNOT control).
    pub op_a: LocalOp,
    /// Acts on the gate's second qubit (CZ `b`, CNOT target).
    pub op_b: LocalOp,
}

/// Sum of absolute coefficients.
pub fn gamma(terms: &[QpdTerm]) -> f64 {
    terms.iter().map(|t| t.coefficient.abs()).sum()
}

/// Decomposition for a gate kind (`"CZ"` or `"CNOT"`), verified on first use.
pub fn decompose_gate(kind: &str) -> Result<Vec<QpdTerm>, CutError> {
    static CZ: OnceLock<Result<(), CutError>> = OnceLock::new();
    static CNOT: OnceLock<Result<(), CutError>> = OnceLock::new();
    let (name, cell): (&'static str, _) = match kind {
        "CZ" => ("CZ", &CZ),
        "CNOT" => ("CNOT", &CNOT),
        other => return Err(CutError::UnsupportedGate(other.to_string())),
    };
    let terms = raw_terms(name);
    cell.get_or_init(|| {
        let deviation = channel_deviation(name, &terms);
        if deviation <= CHANNEL_TOLERANCE {
            Ok(())
        } else {
            Err(CutError::DecompositionUnverified { gate: name, deviation })
        }
    })
    .clone()?;
    Ok(terms)
}

fn raw_terms(kind: &str) -> Vec<QpdTerm> {
    use LocalStep::*;
    let s = Apply(Gate::Rz(0, FRAC_PI_2));
    let s_dag = Apply(Gate::Rz(0, -FRAC_PI_2));
    let z = Apply(Gate::Z(0));
    let cz: [(f64, Vec<LocalStep>, Vec<LocalStep>); 6] = [
        (0.5, vec![s], vec![s]),
        (0.5, vec![s_dag], vec![s_dag]),
        (0.5, vec![MeasureSign], vec![]),
        (-0.5, vec![MeasureSign], vec![z]),
        (0.5, vec![], vec![MeasureSign]),
        (-0.5, vec![z], vec![MeasureSign]),
    ];
    cz.into_iter()
        .map(|(coefficient, a, b)| {
            let op_a = LocalOp(a);
            let op_b = LocalOp(b);
            let op_b = if kind == "CNOT" {
                op_b.wrapped_in(Gate::H(0))
            } else {
                op_b
            };
            QpdTerm {
                coefficient,
                op_a,
                op_b,
            }
        })
        .collect()
}

type Matrix4 = [[Complex64; 4]; 4];

/// Max entry deviation between the decomposition and the ideal channel over
/// the 16 Pauli-product inputs. Index bit 0 is the first qubit.
pub fn channel_deviation(kind: &str, terms: &[QpdTerm]) -> f64 {
    let gate = two_qubit_unitary(kind);
    let paulis = pauli_basis();
    let mut worst: f64 = 0.0;
    for pa in &paulis {
        for pb in &paulis {
            let rho = kron(pb, pa);
            let ideal = conjugate(&gate, &rho);
            let mut approx = [[Complex64::new(0.0, 0.0); 4]; 4];
            for term in terms {
                for (sa, ka) in term.op_a.signed_kraus() {
                    for (sb, kb) in term.op_b.signed_kraus() {
                        let k = kron(&kb, &ka);
                        let out = conjugate(&k, &rho);
                        let w = term.coefficient * sa * sb;
                        for i in 0..4 {
                            for j in 0..4 {
                                approx[i][j] += out[i][j] * w;
                            }
                        }
                    }
                }
            }
            for i in 0..4 {
                for j in 0..4 {
                    worst = worst.max((approx[i][j] - ideal[i][j]).norm());
                }
            }
        }
    }
    worst
}

fn two_qubit_unitary(kind: &str) -> Matrix4 {
    let mut u = [[Complex64::new(0.0, 0.0); 4]; 4];
    let one = Complex64::new(1.0, 0.0);
    match kind {
        "CZ" => {
            for (i, row) in u.iter_mut().enumerate() {
                row[i] = if i == 3 { -one } else { one };
            }
        }
        _ => {
            // control = bit 0, target = bit 1
            // column -> row: the target flips when the control is set
            for (col, row) in [(0, 0), (1, 3), (2, 2), (3, 1)] {
                u[row][col] = one;
            }
        }
    }
    u
}

fn pauli_basis() -> [Matrix2; 4] {
    let o = Complex64::new(0.0, 0.0);
    let l = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    [[[l, o], [o, l]], [[o, l], [l, o]], [[o, -i], [i, o]], [[l, o], [o, -l]]]
}

/// `hi (x) lo`, so `lo` acts on index bit 0.
fn kron(hi: &Matrix2, lo: &Matrix2) -> Matrix4 {
    let mut out = [[Complex64::new(0.0, 0.0); 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = hi[r >> 1][c >> 1] * lo[r & 1][c & 1];
        }
    }
    out
}

fn conjugate(k: &Matrix4, rho: &Matrix4) -> Matrix4 {
    let mut tmp = [[Complex64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for m in 0..4 {
                tmp[i][j] += k[i][m] * rho[m][j];
            }
        }
    }
    let mut out = [[Complex64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for m in 0..4 {
                out[i][j] += tmp[i][m] * k[j][m].conj();
            }
        }
    }
    out
}
