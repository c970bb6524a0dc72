//! Circuit IR, the reference ansatz generator and the portable JSON encoding.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::QuantumError;
use crate::gate::Gate;

pub const CIRCUIT_FORMAT: &str = "hqflow.circuit";
pub const CIRCUIT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    num_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Result<Self, QuantumError> {
        if num_qubits == 0 {
            return Err(QuantumError::EmptyRegister);
        }
        Ok(Self {
            num_qubits,
            gates: Vec::new(),
        })
    }

    pub fn from_gates(num_qubits: usize, gates: Vec<Gate>) -> Result<Self, QuantumError> {
        let mut circuit = Self::new(num_qubits)?;
        for gate in gates {
            circuit.push(gate)?;
        }
        Ok(circuit)
    }

    pub fn push(&mut self, gate: Gate) -> Result<&mut Self, QuantumError> {
        gate.validate(self.num_qubits, self.gates.len())?;
        self.gates.push(gate);
        Ok(self)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Indices of the CZ/CNOT gates, in circuit order.
    pub fn entangling_indices(&self) -> Vec<usize> {
        self.gates
            .iter()
            .enumerate()
            .filter(|(_, g)| g.is_entangling())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_json(&self) -> String {
        let doc = CircuitDoc {
            format: CIRCUIT_FORMAT.to_string(),
            version: CIRCUIT_FORMAT_VERSION,
            num_qubits: self.num_qubits,
            gates: self.gates.iter().map(OpRecord::from_gate).collect(),
        };
        serde_json::to_string(&doc).expect("circuit documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, QuantumError> {
        let doc: CircuitDoc = serde_json::from_str(text).map_err(|e| QuantumError::Format(e.to_string()))?;
        check_header(&doc.format, doc.version, CIRCUIT_FORMAT)?;
        let gates = doc.gates.iter().map(OpRecord::to_gate).collect::<Result<Vec<_>, _>>()?;
        Circuit::from_gates(doc.num_qubits, gates)
    }
}

pub(crate) fn check_header(format: &str, version: u32, expected: &str) -> Result<(), QuantumError> {
    if format != expected {
        return Err(QuantumError::Format(format!(
            "expected format {expected:?}, found {format:?}"
        )));
    }
    if version != CIRCUIT_FORMAT_VERSION {
        return Err(QuantumError::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

/// Hardware-efficient ansatz on a linear chain.
///
/// Each of the `layers` layers applies `RY(a)` then `RZ(b)` to every qubit,
/// followed by `CZ(q, q+1)` for `q = 0..n-1` in ascending order. A final
/// `RY` layer closes the circuit. Angles are drawn uniformly from `[0, 2pi)`
/// with ChaCha8 seeded by `seed`, in gate order.
pub fn hea_circuit(num_qubits: usize, layers: usize, seed: u64) -> Result<Circuit, QuantumError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut circuit = Circuit::new(num_qubits)?;
    for _ in 0..layers {
        for q in 0..num_qubits {
            circuit.push(Gate::Ry(q, rng.random_range(0.0..TAU)))?;
            circuit.push(Gate::Rz(q, rng.random_range(0.0..TAU)))?;
        }
        for q in 0..num_qubits.saturating_sub(1) {
            circuit.push(Gate::Cz(q, q + 1))?;
        }
    }
    for q in 0..num_qubits {
        circuit.push(Gate::Ry(q, rng.random_range(0.0..TAU)))?;
    }
    Ok(circuit)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CircuitDoc {
    format: String,
    version: u32,
    num_qubits: usize,
    gates: Vec<OpRecord>,
}

/// Wire form of one operation. `matrix` holds `[re, im]` pairs of a 2x2
/// unitary in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct OpRecord {
    pub kind: String,
    pub qubits: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<[[f64; 2]; 4]>,
}

impl OpRecord {
    pub(crate) fn from_gate(gate: &Gate) -> Self {
        let matrix = match gate {
            Gate::U1q(_, m) => Some([
                [m[0][0].re, m[0][0].im],
                [m[0][1].re, m[0][1].im],
                [m[1][0].re, m[1][0].im],
                [m[1][1].re, m[1][1].im],
            ]),
            _ => None,
        };
        OpRecord {
            kind: gate.name().to_string(),
            qubits: gate.qubits(),
            params: gate.angle().into_iter().collect(),
            matrix,
        }
    }

    pub(crate) fn to_gate(&self) -> Result<Gate, QuantumError> {
        let arity = match self.kind.as_str() {
            "CZ" | "CNOT" => 2,
            _ => 1,
        };
        if self.qubits.len() != arity {
            return Err(QuantumError::Format(format!(
                "{} takes {arity} qubit(s), got {}",
                self.kind,
                self.qubits.len()
            )));
        }
        let parameterized = matches!(self.kind.as_str(), "RX" | "RY" | "RZ");
        if parameterized != (self.params.len() == 1) || self.params.len() > 1 {
            return Err(QuantumError::Format(format!(
                "{} takes {} angle(s), got {}",
                self.kind,
                usize::from(parameterized),
                self.params.len()
            )));
        }
        if (self.kind == "U1Q") != self.matrix.is_some() {
            return Err(QuantumError::Format(format!(
                "matrix is only valid on U1Q, found on {}",
                self.kind
            )));
        }
        let q = self.qubits[0];
        let gate = match self.kind.as_str() {
            "H" => Gate::H(q),
            "X" => Gate::X(q),
            "Z" => Gate::Z(q),
            "RX" => Gate::Rx(q, self.params[0]),
            "RY" => Gate::Ry(q, self.params[0]),
            "RZ" => Gate::Rz(q, self.params[0]),
            "CZ" => Gate::Cz(q, self.qubits[1]),
            "CNOT" => Gate::Cnot(q, self.qubits[1]),
            "U1Q" => {
                let m = self.matrix.expect("checked above");
                let c = |i: usize| Complex64::new(m[i][0], m[i][1]);
                Gate::U1q(q, [[c(0), c(1)], [c(2), c(3)]])
            }
            other => {
                return Err(QuantumError::Format(format!("unknown gate kind {other:?}")));
            }
        };
        Ok(gate)
    }
}
