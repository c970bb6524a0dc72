//! Dense statevector simulation.
//!
//! Basis index convention: qubit `q` is bit `q` of the index, so qubit 0 is
//! the least-significant bit.

use num_complex::Complex64;

use crate::circuit::Circuit;
use crate::error::QuantumError;
use crate::gate::{Gate, Matrix2};

/// Largest register the simulator will allocate (2^24 amplitudes, 256 MiB).
pub const MAX_QUBITS: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self, QuantumError> {
        if num_qubits == 0 {
            return Err(QuantumError::EmptyRegister);
        }
        if num_qubits > MAX_QUBITS {
            return Err(QuantumError::CapacityExceeded {
                requested: num_qubits,
                cap: MAX_QUBITS,
            });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { num_qubits, amps })
    }

    /// Wraps raw amplitudes; the length must be a power of two.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, QuantumError> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(QuantumError::Format(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        let num_qubits = len.trailing_zeros() as usize;
        if num_qubits > MAX_QUBITS {
            return Err(QuantumError::CapacityExceeded {
                requested: num_qubits,
                cap: MAX_QUBITS,
            });
        }
        Ok(Self { num_qubits, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn apply(&mut self, gate: &Gate) {
        match *gate {
            Gate::Cz(a, b) => self.apply_cz(a, b),
            Gate::Cnot(c, t) => self.apply_cnot(c, t),
            _ => {
                let q = gate.qubits()[0];
                let m = gate.matrix().expect("single-qubit gate has a matrix");
                self.apply_single(q, &m);
            }
        }
    }

    pub fn apply_single(&mut self, qubit: usize, m: &Matrix2) {
        let stride = 1usize << qubit;
        for base in (0..self.amps.len()).step_by(stride << 1) {
            for i in base..base + stride {
                let a0 = self.amps[i];
                let a1 = self.amps[i + stride];
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i + stride] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    fn apply_cz(&mut self, a: usize, b: usize) {
        let mask = (1usize << a) | (1usize << b);
        for (i, amp) in self.amps.iter_mut().enumerate() {
            if i & mask == mask {
                *amp = -*amp;
            }
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let c = 1usize << control;
        let t = 1usize << target;
        for i in 0..self.amps.len() {
            if i & c != 0 && i & t == 0 {
                self.amps.swap(i, i | t);
            }
        }
    }

    /// Splits off the component with `qubit` in state `|1>`, leaving the
    /// `|0>` component in `self`. Neither part is renormalised.
    pub(crate) fn split_on(&mut self, qubit: usize) -> StateVector {
        let bit = 1usize << qubit;
        let zero = Complex64::new(0.0, 0.0);
        let mut one = self.clone();
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                one.amps[i] = zero;
            } else {
                self.amps[i] = zero;
            }
        }
        one
    }
}

/// Runs `circuit` from `|0...0>`.
pub fn simulate(circuit: &Circuit) -> Result<StateVector, QuantumError> {
    let mut state = StateVector::zero(circuit.num_qubits())?;
    for gate in circuit.gates() {
        state.apply(gate);
    }
    Ok(state)
}
