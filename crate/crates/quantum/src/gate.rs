//! Gate set for hardware-efficient ansatz circuits.
//!
//! Single-qubit rotations, the two entangling gates the cutter knows how to
//! decompose, and a general 2x2 unitary escape hatch.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;

use crate::error::QuantumError;

/// 2x2 complex matrix in row-major order.
pub type Matrix2 = [[Complex64; 2]; 2];

/// Tolerance for accepting a user-supplied matrix as unitary.
pub const UNITARY_TOLERANCE: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    Z(usize),
    Rx(usize, f64),
    Ry(usize, f64),
    Rz(usize, f64),
    /// Controlled-Z; symmetric in its two qubits.
    Cz(usize, usize),
    /// CNOT with `(control, target)`.
    Cnot(usize, usize),
    /// Arbitrary single-qubit unitary.
    U1q(usize, Matrix2),
}

impl Gate {
    pub fn name(&self) -> &'static str {
        match self {
            Gate::H(_) => "H",
            Gate::X(_) => "X",
            Gate::Z(_) => "Z",
            Gate::Rx(..) => "RX",
            Gate::Ry(..) => "RY",
            Gate::Rz(..) => "RZ",
            Gate::Cz(..) => "CZ",
            Gate::Cnot(..) => "CNOT",
            Gate::U1q(..) => "U1Q",
        }
    }

    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::H(q)
            | Gate::X(q)
            | Gate::Z(q)
            | Gate::Rx(q, _)
            | Gate::Ry(q, _)
            | Gate::Rz(q, _)
            | Gate::U1q(q, _) => vec![q],
            Gate::Cz(a, b) | Gate::Cnot(a, b) => vec![a, b],
        }
    }

    pub fn is_entangling(&self) -> bool {
        matches!(self, Gate::Cz(..) | Gate::Cnot(..))
    }

    /// Rotation angle for parameterized kinds.
    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Rx(_, t) | Gate::Ry(_, t) | Gate::Rz(_, t) => Some(t),
            _ => None,
        }
    }

    /// Matrix of a single-qubit gate; `None` for entangling gates.
    pub fn matrix(&self) -> Option<Matrix2> {
        let m = match *self {
            Gate::H(_) => {
                let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
                [[h, h], [h, -h]]
            }
            Gate::X(_) => [[ZERO, ONE], [ONE, ZERO]],
            Gate::Z(_) => [[ONE, ZERO], [ZERO, -ONE]],
            Gate::Rx(_, t) => {
                let c = Complex64::new((t / 2.0).cos(), 0.0);
                let s = Complex64::new(0.0, -(t / 2.0).sin());
                [[c, s], [s, c]]
            }
            Gate::Ry(_, t) => {
                let c = Complex64::new((t / 2.0).cos(), 0.0);
                let s = Complex64::new((t / 2.0).sin(), 0.0);
                [[c, -s], [s, c]]
            }
            Gate::Rz(_, t) => [
                [Complex64::from_polar(1.0, -t / 2.0), ZERO],
                [ZERO, Complex64::from_polar(1.0, t / 2.0)],
            ],
            Gate::U1q(_, m) => m,
            Gate::Cz(..) | Gate::Cnot(..) => return None,
        };
        Some(m)
    }

    /// Same gate acting on relabelled qubits.
    pub fn remap(&self, map: impl Fn(usize) -> usize) -> Gate {
        match *self {
            Gate::H(q) => Gate::H(map(q)),
            Gate::X(q) => Gate::X(map(q)),
            Gate::Z(q) => Gate::Z(map(q)),
            Gate::Rx(q, t) => Gate::Rx(map(q), t),
            Gate::Ry(q, t) => Gate::Ry(map(q), t),
            Gate::Rz(q, t) => Gate::Rz(map(q), t),
            Gate::Cz(a, b) => Gate::Cz(map(a), map(b)),
            Gate::Cnot(c, t) => Gate::Cnot(map(c), map(t)),
            Gate::U1q(q, m) => Gate::U1q(map(q), m),
        }
    }

    /// Checks qubit bounds, distinctness and unitarity against an `n`-qubit register.
    pub fn validate(&self, num_qubits: usize, index: usize) -> Result<(), QuantumError> {
        let qubits = self.qubits();
        if let Some(&qubit) = qubits.iter().find(|&&q| q >= num_qubits) {
            return Err(QuantumError::QubitOutOfRange {
                index,
                qubit,
                num_qubits,
            });
        }
        if qubits.len() == 2 && qubits[0] == qubits[1] {
            return Err(QuantumError::RepeatedQubit { index });
        }
        if let Some(t) = self.angle() {
            if !t.is_finite() {
                return Err(QuantumError::NonFiniteAngle { index });
            }
        }
        if let Gate::U1q(_, m) = self {
            let deviation = unitarity_deviation(m);
            if deviation.is_nan() || deviation > UNITARY_TOLERANCE {
                return Err(QuantumError::NotUnitary { index, deviation });
            }
        }
        Ok(())
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let qubits = self.qubits();
        match self.angle() {
            Some(t) => write!(f, "{}({t}) {:?}", self.name(), qubits),
            None => write!(f, "{} {:?}", self.name(), qubits),
        }
    }
}

/// Max-abs entry of `M†M - I`.
pub fn unitarity_deviation(m: &Matrix2) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let mut acc: Complex64 = m.iter().map(|row| row[i].conj() * row[j]).sum();
            if i == j {
                acc -= ONE;
            }
            worst = worst.max(acc.norm());
        }
    }
    worst
}

pub(crate) fn mat_mul(a: &Matrix2, b: &Matrix2) -> Matrix2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn builtin_matrices_are_unitary() {
        let gates = [
            Gate::H(0),
            Gate::X(0),
            Gate::Z(0),
            Gate::Rx(0, 0.3),
            Gate::Ry(0, -1.7),
            Gate::Rz(0, 2.2),
        ];
        for g in gates {
            assert!(unitarity_deviation(&g.matrix().unwrap()) < 1e-15, "{g}");
        }
    }

    #[test]
    fn rotation_by_pi_matches_pauli_up_to_phase() {
        let rx = Gate::Rx(0, PI).matrix().unwrap();
        // RX(pi) = -i X
        assert!((rx[0][1] - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        assert!(rx[0][0].norm() < 1e-15);
    }

    #[test]
    fn validate_rejects_bad_gates() {
        assert_eq!(
            Gate::Cz(1, 1).validate(2, 4),
            Err(QuantumError::RepeatedQubit { index: 4 })
        );
        assert!(matches!(
            Gate::H(3).validate(3, 0),
            Err(QuantumError::QubitOutOfRange { qubit: 3, .. })
        ));
        let bad = [[ONE, ONE], [ZERO, ONE]];
        assert!(matches!(
            Gate::U1q(0, bad).validate(1, 0),
            Err(QuantumError::NotUnitary { .. })
        ));
        assert!(matches!(
            Gate::Ry(0, f64::NAN).validate(1, 0),
            Err(QuantumError::NonFiniteAngle { .. })
        ));
    }
}
